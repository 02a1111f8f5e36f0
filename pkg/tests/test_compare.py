import math

import numpy as np
import pytest
from hypothesis import given

from aeprob.compare import (VarianceSource, compare_at_tauset, estimates_at_tauset,
                            log_rr_interval, normal_quantile, relative_risk)
from aeprob.errors import EstimatorMismatch, MissingVariance, ZeroDenominator, ZeroValue
from aeprob.estimators import ALL_ESTIMATORS, Estimate, Estimator
from aeprob.model import Cohort, Group, Policy, follow_up_times
from aeprob.variance import BootstrapConfig

from conftest import cohort_arrays


def _est(value, var=None, boot=None, est=Estimator.IP, tau=1.0):
    return Estimate(est, tau, value, var, boot)


def test_normal_quantile():
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.95) == pytest.approx(1.6448536269514722, abs=1e-12)
    with pytest.raises(ValueError):
        normal_quantile(1.0)


def test_relative_risk_basics():
    assert relative_risk(_est(0.3), _est(0.3)) == 1.0
    with pytest.raises(ZeroDenominator):
        relative_risk(_est(0.3), _est(0.0))
    with pytest.raises(EstimatorMismatch):
        relative_risk(_est(0.3), _est(0.3, est=Estimator.AJ))


def test_log_rr_interval_arithmetic():
    r = log_rr_interval(_est(0.5, 0.01), _est(0.25, 0.01))
    assert r.rr == 2.0
    half = 1.959963984540054 * math.sqrt(0.2)
    assert r.ci_lower == pytest.approx(2 * math.exp(-half), rel=1e-12)
    assert r.ci_upper == pytest.approx(2 * math.exp(half), rel=1e-12)
    assert r.ci_lower <= r.rr <= r.ci_upper


def test_log_rr_interval_zero_variance():
    r = log_rr_interval(_est(0.4, 0.0), _est(0.4, 0.0))
    assert (r.rr, r.ci_lower, r.ci_upper) == (1.0, 1.0, 1.0)


def test_log_rr_interval_errors():
    with pytest.raises(ZeroValue):
        log_rr_interval(_est(0.0, 0.0), _est(0.4, 0.01))
    with pytest.raises(MissingVariance):
        log_rr_interval(_est(0.3, 0.01), _est(0.4, 0.01), variance_source="bootstrap")
    with pytest.raises(ValueError):
        log_rr_interval(_est(0.3, 0.01), _est(0.4, 0.01), level=1.5)


def test_trial_counts_reproduce_ip_comparison():
    a = Cohort.from_arrays(np.arange(1, 97), [1] * 35 + [2] * 56 + [0] * 5, "A")
    b = Cohort.from_arrays(np.arange(1, 105), [1] * 32 + [2] * 69 + [0] * 3, "B")
    taus = follow_up_times(a, b)
    rows = compare_at_tauset(a, b, taus, [Estimator.IP])
    r = next(r for r in rows if r.policy is Policy.GROUP_MAX)
    assert round(r.rr, 4) == 1.1849
    assert (round(r.ci_lower, 4), round(r.ci_upper, 4)) == (0.8015, 1.7517)


@given(cohort_arrays(min_size=2, statuses=(0, 1, 1, 2)))
def test_identical_groups_give_unit_rr(ts):
    a = Cohort.from_arrays(*ts, group="A")
    b = Cohort.from_arrays(*ts, group="B")
    rows = compare_at_tauset(a, b, follow_up_times(a, b), skip_undefined=True)
    for r in rows:
        assert r.rr == 1.0
        assert r.ci_lower <= 1.0 <= r.ci_upper


@given(cohort_arrays(min_size=3, statuses=(0, 1, 1, 2)), cohort_arrays(min_size=3, statuses=(0, 1, 1, 2)))
def test_group_swap_antisymmetry(ta, tb):
    a, b = Cohort.from_arrays(*ta, group="A"), Cohort.from_arrays(*tb, group="B")
    ab = compare_at_tauset(a, b, follow_up_times(a, b), skip_undefined=True)
    ba = compare_at_tauset(b, a, follow_up_times(b, a), skip_undefined=True)
    back = {(r.policy, r.estimator): r for r in ba}
    for r in ab:
        if r.policy is Policy.GROUP_MAX:
            continue
        s = back[r.policy, r.estimator]
        assert s.rr == pytest.approx(1 / r.rr, rel=1e-12)
        assert s.ci_lower == pytest.approx(1 / r.ci_upper, rel=1e-12)
        assert s.ci_upper == pytest.approx(1 / r.ci_lower, rel=1e-12)


def test_no_censoring_ip_equals_aj_at_common_taus():
    rng = np.random.default_rng(2)
    a = Cohort.from_arrays(rng.exponential(5, 50), rng.integers(1, 3, 50), "A")
    b = Cohort.from_arrays(rng.exponential(5, 50), rng.integers(1, 3, 50), "B")
    rows = compare_at_tauset(a, b, follow_up_times(a, b), [Estimator.IP, Estimator.AJ])
    by = {(r.policy, r.estimator): r for r in rows}
    for policy in Policy:
        assert by[policy, Estimator.IP].rr == by[policy, Estimator.AJ].rr


def test_both_sources_and_bootstrap_requirement():
    rng = np.random.default_rng(3)
    a = Cohort.from_arrays(rng.exponential(5, 40), rng.integers(0, 3, 40), "A")
    b = Cohort.from_arrays(rng.exponential(5, 40), rng.integers(0, 3, 40), "B")
    taus = follow_up_times(a, b)
    with pytest.raises(MissingVariance):
        compare_at_tauset(a, b, taus, variance_source="bootstrap")
    rows = compare_at_tauset(a, b, taus, variance_source=["model", "bootstrap"],
                             bootstrap=BootstrapConfig(200, 1), skip_undefined=True)
    sources = {(r.policy, r.estimator): set() for r in rows}
    for r in rows:
        sources[r.policy, r.estimator].add(r.variance_source)
    assert all(s == {VarianceSource.MODEL, VarianceSource.BOOTSTRAP} for s in sources.values())


def test_estimates_at_tauset_groups_use_independent_streams():
    rng = np.random.default_rng(4)
    c = Cohort.from_arrays(rng.exponential(5, 40), rng.integers(0, 3, 40))
    a = Cohort.from_arrays(c.times, c.status, "A")
    b = Cohort.from_arrays(c.times, c.status, "B")
    table = estimates_at_tauset(a, b, follow_up_times(a, b), ALL_ESTIMATORS, BootstrapConfig(100, 1))
    ea = table[Policy.TAU_MAX, Group.A, Estimator.AJ]
    eb = table[Policy.TAU_MAX, Group.B, Estimator.AJ]
    assert ea.value == eb.value and ea.variance_model == eb.variance_model
    assert ea.variance_bootstrap != eb.variance_bootstrap
