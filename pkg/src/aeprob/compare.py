"""Relative risks between two groups with log-scale confidence intervals."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

from scipy.special import ndtri

from .errors import EstimatorMismatch, MissingVariance, ZeroDenominator, ZeroValue
from .estimators import ALL_ESTIMATORS, Estimate, Estimator, estimate_value
from .model import Cohort, Group, Policy, TauSet
from .variance import BootstrapConfig, bootstrap_variances, model_variance


class VarianceSource(str, enum.Enum):
    MODEL = "model"
    BOOTSTRAP = "bootstrap"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RelativeRisk:
    estimator: Estimator
    tau_a: float
    tau_b: float
    rr: float
    ci_lower: float
    ci_upper: float
    variance_source: VarianceSource
    level: float
    policy: Policy | None = None

    @property
    def ci_length(self) -> float:
        return self.ci_upper - self.ci_lower


def normal_quantile(p: float) -> float:
    """Standard normal quantile (Cephes ``ndtri`` rational approximation)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return float(ndtri(p))


def relative_risk(est_a: Estimate, est_b: Estimate) -> float:
    if est_a.estimator != est_b.estimator:
        raise EstimatorMismatch(f"{est_a.estimator} vs {est_b.estimator}")
    if est_b.value <= 0.0:
        raise ZeroDenominator(f"{est_b.estimator} estimate in the reference group is 0")
    return est_a.value / est_b.value


def log_rr_interval(est_a: Estimate, est_b: Estimate, level: float = 0.95,
                    variance_source: VarianceSource | str = VarianceSource.MODEL,
                    policy: Policy | None = None) -> RelativeRisk:
    """Relative risk with a Wald interval on the log scale.

    ``var(log RR) = s_a^2 / p_a^2 + s_b^2 / p_b^2`` and the interval is
    ``exp(log RR -/+ z * sqrt(var))`` with ``z`` the ``(1 + level) / 2``
    normal quantile.
    """
    source = VarianceSource(variance_source)
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    rr = relative_risk(est_a, est_b)
    if est_a.value <= 0.0:
        raise ZeroValue(f"{est_a.estimator} estimate is 0; log relative risk undefined")
    var_a, var_b = est_a.variance(source), est_b.variance(source)
    if var_a is None or var_b is None:
        raise MissingVariance(f"{source} variance missing for {est_a.estimator}")
    var_log = var_a / est_a.value ** 2 + var_b / est_b.value ** 2
    half = normal_quantile((1.0 + level) / 2.0) * math.sqrt(var_log)
    lower, upper = rr * math.exp(-half), rr * math.exp(half)
    # exp rounding could push a bound past rr when the variance is tiny
    return RelativeRisk(est_a.estimator, est_a.tau, est_b.tau, rr, min(lower, rr), max(upper, rr),
                        source, level, policy)


def estimates_at_tauset(cohort_a: Cohort, cohort_b: Cohort, taus: TauSet,
                        estimators: Iterable[Estimator] = ALL_ESTIMATORS,
                        bootstrap: BootstrapConfig | None = None, workers: int = 1) -> dict:
    """Estimates for every (policy, group, estimator).

    Bootstrap replicates are drawn once per group and reused for every
    estimator and time; the two groups use independent streams.
    """
    estimators = [Estimator(e) for e in estimators]
    out = {}
    for gi, (group, cohort) in enumerate(((Group.A, cohort_a), (Group.B, cohort_b))):
        tau_by_policy = {p: taus.for_policy(p, group) for p in Policy}
        boot = {}
        if bootstrap is not None:
            requests = sorted({(e, t) for e in estimators for t in tau_by_policy.values()},
                              key=lambda r: (ALL_ESTIMATORS.index(r[0]), r[1]))
            boot = bootstrap_variances(cohort, requests, bootstrap, workers, key=(gi,))
        for policy, tau in tau_by_policy.items():
            for est in estimators:
                out[policy, group, est] = Estimate(
                    est, tau, estimate_value(cohort, tau, est), model_variance(cohort, tau, est),
                    boot.get((est, tau)))
    return out


def compare_at_tauset(cohort_a: Cohort, cohort_b: Cohort, taus: TauSet,
                      estimators: Iterable[Estimator] = ALL_ESTIMATORS, level: float = 0.95,
                      variance_source=VarianceSource.MODEL,
                      bootstrap: BootstrapConfig | None = None, workers: int = 1,
                      skip_undefined: bool = False) -> list[RelativeRisk]:
    """Relative risks for every follow-up policy and estimator.

    ``GROUP_MAX`` compares group A at its own maximum follow-up time with
    group B at its own; the other policies use one common time. Several
    variance sources may be requested at once (one row each). With
    ``skip_undefined`` comparisons whose RR or interval is undefined (a zero
    estimate) are omitted instead of raising.
    """
    if isinstance(variance_source, (str, VarianceSource)):
        sources = [VarianceSource(variance_source)]
    else:
        sources = [VarianceSource(s) for s in variance_source]
    if VarianceSource.BOOTSTRAP in sources and bootstrap is None:
        raise MissingVariance("bootstrap variance requested without a BootstrapConfig")
    estimators = [Estimator(e) for e in estimators]
    table = estimates_at_tauset(cohort_a, cohort_b, taus, estimators,
                                bootstrap if VarianceSource.BOOTSTRAP in sources else None, workers)
    rows = []
    for policy in Policy:
        for est in estimators:
            for source in sources:
                try:
                    rows.append(log_rr_interval(table[policy, Group.A, est], table[policy, Group.B, est],
                                                level, source, policy))
                except (ZeroDenominator, ZeroValue):
                    if not skip_undefined:
                        raise
    return rows
