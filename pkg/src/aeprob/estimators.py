"""Point estimators of the adverse-event (AE) probability.

All five estimators are functions of the per-unique-time count table of a
cohort. The heavy lifting lives in :class:`CountCurves`, which accepts count
arrays with an optional leading axis so that a whole batch of bootstrap
replicates is evaluated in one vectorised pass.

Aalen-Johansen and 1 - Kaplan-Meier are computed in their equivalent
weighted-sum form,

    F(tau) = (1/n) * sum_{u <= tau} r(u) * d(u),
    r(u_k) = prod_{j < k} (Y_j - removed_j) / Y_{j+1},

where ``Y`` is the risk-set size and ``removed`` is AEs + CEs (Aalen-Johansen)
or AEs only (Kaplan-Meier, which treats CEs as censored). ``r`` is exactly 1.0
whenever nothing censored has left the risk set, so the incidence proportion,
Aalen-Johansen and 1 - Kaplan-Meier coincide bit-for-bit in the settings where
they agree mathematically.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ZeroPersonTime
from .model import Cohort, Status


class Estimator(str, enum.Enum):
    IP = "ip"
    PT_ID = "ptid"
    ONE_MINUS_KM = "km"
    AJ = "aj"
    PT_ID_CE = "ptidce"

    @property
    def label(self) -> str:
        return _LABELS[self]

    def __str__(self):
        return self.value


_LABELS = {
    Estimator.IP: "Incidence proportion",
    Estimator.PT_ID: "Probability transform incidence density",
    Estimator.ONE_MINUS_KM: "1-Kaplan-Meier",
    Estimator.AJ: "Aalen-Johansen",
    Estimator.PT_ID_CE: "Probability transform incidence density CE",
}

ALL_ESTIMATORS = tuple(Estimator)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous pure-jump function ``t -> sum(increments[jump_times <= t])``."""

    jump_times: np.ndarray
    increments: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        if jt.shape != inc.shape:
            raise ValueError("jump_times and increments must align")
        if np.any(np.diff(jt) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        if np.any(inc < 0):
            raise ValueError("increments must be nonnegative")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "increments", inc)

    def __call__(self, t):
        cum = np.concatenate(([0.0], np.cumsum(self.increments)))
        k = np.searchsorted(self.jump_times, t, side="right")
        out = cum[k]
        return float(out) if np.ndim(out) == 0 else out

    def __len__(self):
        return self.jump_times.size


@dataclass(frozen=True)
class Estimate:
    estimator: Estimator
    tau: float
    value: float
    variance_model: float | None = None
    variance_bootstrap: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"estimate {self.value} outside [0, 1]")
        for v in (self.variance_model, self.variance_bootstrap):
            if v is not None and not v >= 0:
                raise ValueError(f"variance {v} must be nonnegative")

    def variance(self, source: str) -> float | None:
        return self.variance_model if str(source) == "model" else self.variance_bootstrap


def _shift_right(a, fill):
    """Prepend ``fill`` along the last axis and drop the final element."""
    pad = np.full(a.shape[:-1] + (1,), fill, dtype=float)
    return np.concatenate((pad, a[..., :-1]), axis=-1)


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    return np.divide(num, den, out=np.zeros(np.broadcast_shapes(num.shape, np.shape(den))),
                     where=np.asarray(den) > 0)


class CountCurves:
    """Cumulative quantities derived from a count table.

    Parameters
    ----------
    times : (U,) array
        Sorted unique observed times.
    ae, ce, total : (..., U) arrays
        AE count, CE count and total number of subjects observed at each
        time. Leading axes index independent datasets (e.g. bootstrap
        replicates) sharing the same time grid; zero rows are allowed.
    """

    def __init__(self, times, ae, ce, total):
        self.times = np.asarray(times, dtype=float)
        self.ae = np.asarray(ae, dtype=float)
        self.ce = np.asarray(ce, dtype=float)
        self.total = np.asarray(total, dtype=float)

    @classmethod
    def from_cohort(cls, cohort: Cohort) -> "CountCurves":
        total = cohort.n_ae + cohort.n_ce + cohort.n_censored
        return cls(cohort.unique_times, cohort.n_ae, cohort.n_ce, total)

    @cached_property
    def n(self):
        return self.total.sum(axis=-1)

    @cached_property
    def at_risk(self):
        return np.cumsum(self.total[..., ::-1], axis=-1)[..., ::-1]

    @cached_property
    def cum_ae(self):
        return np.cumsum(self.ae, axis=-1)

    @cached_property
    def cum_ce(self):
        return np.cumsum(self.ce, axis=-1)

    @cached_property
    def cum_count(self):
        return np.cumsum(self.total, axis=-1)

    @cached_property
    def cum_time(self):
        return np.cumsum(self.total * self.times, axis=-1)

    def _weighted_cum(self, removed):
        y = self.at_risk
        y_next = _shift_right(y[..., ::-1], 0.0)[..., ::-1]
        factor = _safe_div(y - removed, y_next)
        r = np.cumprod(_shift_right(factor, 1.0), axis=-1)
        return np.cumsum(r * self.ae, axis=-1)

    @cached_property
    def km_cum(self):
        return self._weighted_cum(self.ae)

    @cached_property
    def aj_cum(self):
        return self._weighted_cum(self.ae + self.ce)

    @cached_property
    def hazard_ae(self):
        return _safe_div(self.ae, self.at_risk)

    @cached_property
    def hazard_ce(self):
        return _safe_div(self.ce, self.at_risk)

    @cached_property
    def km_survival(self):
        """Event-specific product-limit survival (CEs treated as censored)."""
        return np.cumprod(1.0 - self.hazard_ae, axis=-1)

    @cached_property
    def greenwood_cum(self):
        y, d = self.at_risk, self.ae
        # where the risk set is exhausted by AEs the survival factor is 0 and
        # the whole variance is 0 from then on; the term itself is dropped
        return np.cumsum(_safe_div(d, y * (y - d)), axis=-1)

    @cached_property
    def aj_left_survival(self):
        """All-cause survival just before each unique time, S(u-)."""
        return np.cumprod(_shift_right(1.0 - self.hazard_ae - self.hazard_ce, 1.0), axis=-1)

    @cached_property
    def aj_variance_parts(self):
        """Cumulative sums for the Greenwood-type Aalen-Johansen variance.

        Var F(t) = sum_{k: u_k <= t} A_k (F(t) - F_k)^2 + B_k (F(t) - F_k) + C_k

        with d = all events, d1 = AEs, Y = at risk, S = S(u_k-),
        A = d / (Y (Y - d)), B = -2 S d1 / Y^2, C = S^2 d1 (Y - d1) / Y^3.
        Expanded in powers of F(t) so that any t is a lookup.
        """
        y, d1 = self.at_risk, self.ae
        d = self.ae + self.ce
        s = self.aj_left_survival
        f = self.aj_cum / np.expand_dims(self.n, -1)
        a = _safe_div(d, y * (y - d))
        b = -2.0 * s * _safe_div(d1, y * y)
        c = s * s * _safe_div(d1 * (y - d1), y ** 3)
        cs = lambda x: np.cumsum(x, axis=-1)  # noqa: E731
        return cs(a), cs(a * f), cs(a * f * f), cs(b), cs(b * f), cs(c)

    # -- evaluation at a single time -------------------------------------

    def index(self, tau: float) -> int:
        """Position of the last unique time <= tau (-1 if none)."""
        return int(np.searchsorted(self.times, tau, side="right")) - 1

    @staticmethod
    def at(arr, k):
        if k < 0:
            return np.zeros(arr.shape[:-1]) if arr.ndim > 1 else 0.0
        return arr[..., k]

    def person_time(self, tau, k=None):
        k = self.index(tau) if k is None else k
        return self.at(self.cum_time, k) + tau * (self.n - self.at(self.cum_count, k))

    def event_count(self, event, k):
        return self.at(self.cum_ae if Status(event) is Status.AE else self.cum_ce, k)

    def incidence_density(self, tau, event=Status.AE, k=None):
        k = self.index(tau) if k is None else k
        pt = self.person_time(tau, k)
        if np.any(pt <= 0):
            raise ZeroPersonTime(f"no person-time at risk up to tau={tau}")
        return self.event_count(event, k) / pt

    def value(self, estimator: Estimator, tau: float):
        """Point estimate(s) of ``estimator`` at ``tau``; shape = leading axes."""
        k = self.index(tau)
        est = Estimator(estimator)
        if est is Estimator.IP:
            out = self.at(self.cum_ae, k) / self.n
        elif est is Estimator.AJ:
            out = self.at(self.aj_cum, k) / self.n
        elif est is Estimator.ONE_MINUS_KM:
            out = self.at(self.km_cum, k) / self.n
        elif est is Estimator.PT_ID:
            out = -np.expm1(-self.incidence_density(tau, Status.AE, k) * tau)
        else:
            ida = self.incidence_density(tau, Status.AE, k)
            idc = self.incidence_density(tau, Status.CE, k)
            out = _pt_id_ce(ida, idc, tau)
        return np.minimum(out, 1.0)


def _pt_id_ce(ida, idc, tau):
    tot = ida + idc
    return np.where(tot > 0, _safe_div(ida, tot) * -np.expm1(-tau * tot), 0.0)


def _curves(cohort: Cohort) -> CountCurves:
    # cached on the cohort instance; Cohort is immutable
    try:
        return cohort.__dict__["_curves"]
    except KeyError:
        c = cohort.__dict__["_curves"] = CountCurves.from_cohort(cohort)
        return c


def _check_tau(tau):
    tau = float(tau)
    if not (math.isfinite(tau) and tau > 0):
        raise ValueError(f"tau must be positive and finite, got {tau}")
    return tau


def nelson_aalen_increments(cohort: Cohort, event: Status | int = Status.AE) -> StepFunction:
    """Nelson-Aalen increments ``count(u) / at_risk(u)`` at times with events."""
    event = Status(event)
    if event is Status.CENSORED:
        raise ValueError("event must be AE or CE")
    counts = cohort.n_ae if event is Status.AE else cohort.n_ce
    keep = counts > 0
    return StepFunction(cohort.unique_times[keep], counts[keep] / cohort.at_risk_counts[keep])


def estimate_value(cohort: Cohort, tau: float, estimator: Estimator | str) -> float:
    return float(_curves(cohort).value(Estimator(estimator), _check_tau(tau)))


def incidence_proportion(cohort: Cohort, tau: float) -> Estimate:
    """Observed AEs up to ``tau`` divided by the group size."""
    tau = _check_tau(tau)
    return Estimate(Estimator.IP, tau, estimate_value(cohort, tau, Estimator.IP))


def incidence_density(cohort: Cohort, tau: float, event: Status | int = Status.AE) -> float:
    """Events up to ``tau`` per unit of person-time truncated at ``tau``.

    Raises
    ------
    ZeroPersonTime
    """
    tau = _check_tau(tau)
    return float(_curves(cohort).incidence_density(tau, Status(event)))


def pt_incidence_density(cohort: Cohort, tau: float) -> Estimate:
    """``1 - exp(-ID_AE * tau)``, the constant-hazard probability transform."""
    tau = _check_tau(tau)
    return Estimate(Estimator.PT_ID, tau, estimate_value(cohort, tau, Estimator.PT_ID))


def one_minus_km(cohort: Cohort, tau: float) -> Estimate:
    """One minus the Kaplan-Meier estimator with CEs treated as censored."""
    tau = _check_tau(tau)
    return Estimate(Estimator.ONE_MINUS_KM, tau, estimate_value(cohort, tau, Estimator.ONE_MINUS_KM))


def aalen_johansen(cohort: Cohort, tau: float) -> Estimate:
    """Aalen-Johansen estimator of the AE cumulative incidence function."""
    tau = _check_tau(tau)
    return Estimate(Estimator.AJ, tau, estimate_value(cohort, tau, Estimator.AJ))


def pt_incidence_density_ce(cohort: Cohort, tau: float) -> Estimate:
    """Constant-hazard cumulative incidence built from both incidence densities.

    ``ID_AE / (ID_AE + ID_CE) * (1 - exp(-tau * (ID_AE + ID_CE)))``; zero when
    both densities vanish.
    """
    tau = _check_tau(tau)
    return Estimate(Estimator.PT_ID_CE, tau, estimate_value(cohort, tau, Estimator.PT_ID_CE))


ESTIMATOR_FUNCTIONS = {
    Estimator.IP: incidence_proportion,
    Estimator.PT_ID: pt_incidence_density,
    Estimator.ONE_MINUS_KM: one_minus_km,
    Estimator.AJ: aalen_johansen,
    Estimator.PT_ID_CE: pt_incidence_density_ce,
}


def parse_estimators(spec: str | None):
    """Parse a comma list such as ``"ip,aj"`` (``None`` or ``"all"`` -> all five)."""
    if spec is None or spec.strip().lower() == "all":
        return ALL_ESTIMATORS
    out = []
    for tok in spec.split(","):
        tok = tok.strip().lower()
        if tok:
            est = Estimator(tok)
            if est not in out:
                out.append(est)
    if not out:
        raise ValueError("no estimators selected")
    return tuple(sorted(out, key=ALL_ESTIMATORS.index))
