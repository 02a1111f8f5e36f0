"""Adverse-event probability estimation under censoring and competing events.

Five estimators of the probability of an adverse event (AE) by a follow-up
time ``tau`` in a two-arm trial:

========  ==================================================================
ip        incidence proportion, AEs observed by tau over group size
ptid      1 - exp(-ID * tau), ID the AE incidence density
km        one minus the Kaplan-Meier estimator, competing events censored
aj        Aalen-Johansen estimator of the AE cumulative incidence
ptidce    incidence-density analogue accounting for competing events
========  ==================================================================

plus model-based and bootstrap variances, relative risks with log-scale
confidence intervals, and a Monte-Carlo simulator for bias studies.
"""

from .compare import (RelativeRisk, VarianceSource, compare_at_tauset, estimates_at_tauset,
                      log_rr_interval, normal_quantile, relative_risk)
from .errors import (AeprobError, DataError, NumericalError, ParseError,
                     ZeroTotalDensityWarning)
from .estimators import (ALL_ESTIMATORS, Estimate, Estimator, StepFunction, aalen_johansen,
                         estimate_value, incidence_density, incidence_proportion,
                         nelson_aalen_increments, one_minus_km, pt_incidence_density,
                         pt_incidence_density_ce)
from .model import (Cohort, Group, Policy, Status, SubjectRecord, TauSet, empirical_quantile,
                    follow_up_times, validate_cohort)
from .simulate import (HazardSpec, ScenarioSpec, StudySummary, calibrate_censoring,
                       generate_trial, get_scenario, load_catalog, run_study, true_cif)
from .variance import (BootstrapConfig, bootstrap_variance, evaluate, model_variance, var_aj,
                       var_id, var_ip, var_km_greenwood, var_pt_id, var_pt_id_ce)

__version__ = "0.1.0"
