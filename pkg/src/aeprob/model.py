"""Domain types for two-arm competing-risks data and follow-up-time policies."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCohort, EmptyInput, GroupMismatch, NonPositiveTime, UnknownStatus


class Status(enum.IntEnum):
    CENSORED = 0
    AE = 1
    CE = 2


class Group(str, enum.Enum):
    A = "A"
    B = "B"

    def __str__(self):
        return self.value


class Policy(str, enum.Enum):
    """Follow-up-time policies at which estimators are evaluated.

    ``GROUP_MAX`` evaluates each group at its own maximum follow-up time; the
    others use one common time in both groups.
    """

    GROUP_MAX = "tau_max_group"
    TAU_MAX = "tau_max"
    TAU_P90 = "tau_p90"
    TAU_P60 = "tau_p60"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    group: Group
    time: float
    status: Status


def _freeze(a):
    a.setflags(write=False)
    return a


class Cohort:
    """Validated records of one group plus per-unique-time counts.

    Build through :func:`validate_cohort` or :meth:`from_arrays`. Subjects are
    kept sorted by observed time; ``unique_times`` holds the distinct times and
    ``n_ae``, ``n_ce``, ``n_censored`` the number of each status observed there.
    """

    def __init__(self, group, ids, times, status):
        # trusted constructor: inputs already validated and sorted
        self.group = Group(group)
        self.ids = tuple(ids)
        self.times = _freeze(times)
        self.status = _freeze(status)
        uniq, index = np.unique(times, return_inverse=True)
        u = len(uniq)
        counts = np.bincount(index * 3 + status, minlength=3 * u).reshape(u, 3)
        self.unique_times = _freeze(uniq)
        self.n_censored = _freeze(counts[:, 0].copy())
        self.n_ae = _freeze(counts[:, 1].copy())
        self.n_ce = _freeze(counts[:, 2].copy())
        self._subject_index = _freeze(index)

    @classmethod
    def from_arrays(cls, times, status, group=Group.A, ids=None) -> "Cohort":
        """Validate raw arrays (vectorised) and build a cohort.

        ``ids`` default to the 0-based input positions as strings.
        """
        times = np.asarray(times, dtype=float).ravel()
        status = np.asarray(status).ravel()
        if times.size == 0:
            raise EmptyCohort(Group(group))
        if status.shape != times.shape:
            raise ValueError("times and status must have equal length")
        if ids is None:
            ids = [str(i) for i in range(times.size)]
        elif len(ids) != times.size:
            raise ValueError("ids and times must have equal length")
        bad = ~(np.isfinite(times) & (times > 0))
        if bad.any():
            raise NonPositiveTime(ids[int(np.argmax(bad))])
        if status.dtype.kind == "f":
            integral = np.isfinite(status) & (status == np.round(status))
            if not integral.all():
                raise UnknownStatus(ids[int(np.argmax(~integral))])
        elif status.dtype.kind not in "iub":
            raise UnknownStatus(ids[0], f"non-numeric status dtype {status.dtype}")
        status = status.astype(np.int64)
        bad = (status < 0) | (status > 2)
        if bad.any():
            raise UnknownStatus(ids[int(np.argmax(bad))])
        order = np.argsort(times, kind="stable")
        return cls(group, [ids[i] for i in order], times[order], status[order])

    @property
    def n(self) -> int:
        return self.times.size

    @cached_property
    def at_risk_counts(self) -> np.ndarray:
        """Number of subjects with observed time >= each unique time."""
        total = self.n_ae + self.n_ce + self.n_censored
        return _freeze(np.cumsum(total[::-1])[::-1])

    def at_risk(self, u: float) -> int:
        k = np.searchsorted(self.unique_times, u, side="left")
        return int(self.at_risk_counts[k]) if k < len(self.unique_times) else 0

    @property
    def records(self) -> tuple[SubjectRecord, ...]:
        return tuple(
            SubjectRecord(i, self.group, float(t), Status(int(s)))
            for i, t, s in zip(self.ids, self.times, self.status)
        )

    @property
    def max_time(self) -> float:
        return float(self.unique_times[-1])

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (self.group == other.group and self.ids == other.ids
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.status, other.status))

    __hash__ = None

    def __repr__(self):
        return (f"Cohort(group={self.group.value}, n={self.n}, AE={int(self.n_ae.sum())}, "
                f"CE={int(self.n_ce.sum())}, censored={int(self.n_censored.sum())})")


def validate_cohort(records: Iterable[SubjectRecord], group: Group | str) -> Cohort:
    """Check records of one group and assemble a :class:`Cohort`.

    Raises
    ------
    EmptyCohort, NonPositiveTime, UnknownStatus, GroupMismatch
    """
    group = Group(group)
    records = list(records)
    if not records:
        raise EmptyCohort(group)
    ids, times, status = [], [], []
    for rec in records:
        try:
            rec_group = Group(rec.group)
        except ValueError:
            raise GroupMismatch(rec.id, f"unknown group {rec.group!r}") from None
        if rec_group is not group:
            raise GroupMismatch(rec.id, f"expected {group.value}, got {rec_group.value}")
        t = rec.time
        if not isinstance(t, (int, float, np.integer, np.floating)) or not math.isfinite(t) or t <= 0:
            raise NonPositiveTime(rec.id)
        try:
            s = Status(rec.status)
        except ValueError:
            raise UnknownStatus(rec.id) from None
        ids.append(str(rec.id))
        times.append(float(t))
        status.append(int(s))
    times = np.asarray(times, dtype=float)
    order = np.argsort(times, kind="stable")
    return Cohort(group, [ids[i] for i in order], times[order],
                  np.asarray(status, dtype=np.int64)[order])


def empirical_quantile(times: Sequence[float], p: float) -> float:
    """Lower empirical quantile: the ceil(p*n)-th order statistic.

    The result is always one of the observed times.
    """
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    x = np.sort(np.asarray(times, dtype=float).ravel())
    if x.size == 0:
        raise EmptyInput("cannot take a quantile of no observations")
    # round away float noise such as 0.7*10 = 7.000000000000001
    k = max(1, math.ceil(round(p * x.size, 9)))
    return float(x[k - 1])


@dataclass(frozen=True)
class TauSet:
    tau_max_a: float
    tau_max_b: float
    tau_max: float
    tau_p90: float
    tau_p60: float

    def for_policy(self, policy: Policy | str, group: Group | str) -> float:
        policy, group = Policy(policy), Group(group)
        if policy is Policy.GROUP_MAX:
            return self.tau_max_a if group is Group.A else self.tau_max_b
        return {Policy.TAU_MAX: self.tau_max, Policy.TAU_P90: self.tau_p90,
                Policy.TAU_P60: self.tau_p60}[policy]

    def swapped(self) -> "TauSet":
        return TauSet(self.tau_max_b, self.tau_max_a, self.tau_max, self.tau_p90, self.tau_p60)


def follow_up_times(cohort_a: Cohort, cohort_b: Cohort) -> TauSet:
    """Compute the five analysis times for a two-group dataset.

    Per-group maxima of the observed times, their minimum, and the minima
    across groups of the per-group 90% and 60% lower empirical quantiles.
    """
    a, b = cohort_a.times, cohort_b.times
    max_a, max_b = float(a[-1]), float(b[-1])
    return TauSet(
        tau_max_a=max_a,
        tau_max_b=max_b,
        tau_max=min(max_a, max_b),
        tau_p90=min(empirical_quantile(a, 0.9), empirical_quantile(b, 0.9)),
        tau_p60=min(empirical_quantile(a, 0.6), empirical_quantile(b, 0.6)),
    )
