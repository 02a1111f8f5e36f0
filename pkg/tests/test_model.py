import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aeprob.errors import (EmptyCohort, EmptyInput, GroupMismatch, NonPositiveTime,
                           UnknownStatus)
from aeprob.model import (Cohort, Group, Policy, Status, SubjectRecord, TauSet,
                          empirical_quantile, follow_up_times, validate_cohort)

from conftest import cohort_arrays, cohorts


def _records(pairs, group="A"):
    return [SubjectRecord(str(i), Group(group), t, Status(s)) for i, (t, s) in enumerate(pairs)]


def test_validate_hand_records():
    c = validate_cohort(_records([(1, 1), (2, 2), (3, 0), (4, 1)]), "A")
    assert c.n == 4
    assert c.at_risk(4) == 1
    assert c.at_risk(1) == 4
    assert c.at_risk(2.5) == 2
    assert c.at_risk(5) == 0
    assert list(c.n_ae) == [1, 0, 0, 1]


def test_ties_are_aggregated():
    c = validate_cohort(_records([(5, 1), (5, 1), (5, 2), (7, 0)]), "A")
    assert list(c.unique_times) == [5.0, 7.0]
    assert c.n_ae[0] == 2 and c.n_ce[0] == 1
    assert list(c.at_risk_counts) == [4, 1]


@pytest.mark.parametrize("t", [0, -1.0, float("nan"), float("inf")])
def test_nonpositive_time_rejected(t):
    with pytest.raises(NonPositiveTime) as exc:
        validate_cohort(_records([(1, 1), (t, 1)]), "A")
    assert exc.value.record_id == "1"


def test_unknown_status_rejected():
    recs = [SubjectRecord("x", Group.A, 1.0, 3)]
    with pytest.raises(UnknownStatus):
        validate_cohort(recs, "A")
    with pytest.raises(UnknownStatus):
        Cohort.from_arrays([1.0, 2.0], [1, 5])
    with pytest.raises(UnknownStatus):
        Cohort.from_arrays([1.0, 2.0], [1.0, 0.5])


def test_group_mismatch_and_empty():
    with pytest.raises(GroupMismatch):
        validate_cohort(_records([(1, 1)], group="B"), "A")
    with pytest.raises(EmptyCohort):
        validate_cohort([], "B")
    with pytest.raises(EmptyCohort):
        Cohort.from_arrays([], [])


def test_cohort_is_immutable(hand_cohort):
    with pytest.raises(ValueError):
        hand_cohort.times[0] = 9.0


def test_from_arrays_sorts_and_keeps_ids():
    c = Cohort.from_arrays([3.0, 1.0, 2.0], [0, 1, 2], ids=["c", "a", "b"])
    assert c.ids == ("a", "b", "c")
    assert list(c.times) == [1.0, 2.0, 3.0]
    assert list(c.status) == [1, 2, 0]


@given(cohort_arrays())
def test_validate_is_idempotent(ts):
    c = Cohort.from_arrays(*ts)
    again = validate_cohort(c.records, c.group)
    assert again == c
    assert validate_cohort(again.records, again.group) == again


@pytest.mark.parametrize("times, p, expected", [
    (range(1, 11), 0.9, 9),
    ([7], 0.6, 7),
    ([2, 4], 1.0, 4),
    (range(1, 11), 0.7, 7),   # 0.7*10 is 7.000000000000001 in floats
    (range(1, 11), 0.6, 6),
    ([5, 1, 3], 0.5, 3),
])
def test_empirical_quantile(times, p, expected):
    assert empirical_quantile(list(times), p) == expected


def test_empirical_quantile_errors():
    with pytest.raises(ValueError):
        empirical_quantile([1, 2], 0.0)
    with pytest.raises(EmptyInput):
        empirical_quantile([], 0.5)


@given(st.lists(st.floats(0.01, 1e4), min_size=1, max_size=50), st.floats(0.001, 1.0))
def test_quantile_is_an_observed_time(times, p):
    q = empirical_quantile(times, p)
    assert q in times
    assert np.mean(np.asarray(times) <= q) >= p - 1e-9


def test_follow_up_times_examples():
    a = Cohort.from_arrays(np.arange(1, 11), np.ones(10, int), "A")
    b = Cohort.from_arrays(np.arange(2, 21, 2), np.ones(10, int), "B")
    taus = follow_up_times(a, b)
    assert taus.tau_p90 == 9
    assert taus.tau_p60 == 6
    assert (taus.tau_max_a, taus.tau_max_b, taus.tau_max) == (10, 20, 10)
    same = follow_up_times(a, a)
    assert same.tau_max_a == same.tau_max_b == same.tau_max


def test_follow_up_times_trial_shape():
    a = Cohort.from_arrays([10.0, 802.0], [1, 2], "A")
    b = Cohort.from_arrays([5.0, 980.0], [1, 0], "B")
    taus = follow_up_times(a, b)
    assert (taus.tau_max_a, taus.tau_max_b, taus.tau_max) == (802, 980, 802)


def test_tauset_policy_lookup():
    t = TauSet(1.0, 2.0, 1.0, 0.8, 0.5)
    assert t.for_policy(Policy.GROUP_MAX, Group.A) == 1.0
    assert t.for_policy("tau_max_group", "B") == 2.0
    assert t.for_policy(Policy.TAU_P60, Group.B) == 0.5
    assert t.swapped().tau_max_a == 2.0


@given(cohorts(), cohorts())
def test_follow_up_time_ordering_and_swap(a, b):
    taus = follow_up_times(a, b)
    assert taus.tau_p60 <= taus.tau_p90 <= taus.tau_max <= max(taus.tau_max_a, taus.tau_max_b)
    assert follow_up_times(b, a) == taus.swapped()
