"""Model-based and bootstrap variances of the AE probability estimators."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _rng
from .errors import BootstrapExhausted, ZeroTotalDensityWarning
from .estimators import (Estimate, Estimator, CountCurves, _check_tau, _curves,
                         estimate_value)
from .model import Cohort, Status


@dataclass(frozen=True)
class BootstrapConfig:
    """Nonparametric bootstrap settings.

    Replicate ``r`` draws from its own PCG64 stream keyed by ``(seed, r)``,
    so results do not depend on how replicates are split across workers.
    """

    replicates: int = 1000
    seed: int = 0

    def __post_init__(self):
        if int(self.replicates) < 2:
            raise ValueError("bootstrap needs at least 2 replicates")
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))


# -- model-based variances ---------------------------------------------------

def var_ip(cohort: Cohort, tau: float) -> float:
    ip = estimate_value(cohort, tau, Estimator.IP)
    return ip * (1.0 - ip) / cohort.n


def var_id(cohort: Cohort, tau: float, event: Status | int = Status.AE) -> float:
    """Poisson variance of an incidence density: events / person-time**2."""
    tau = _check_tau(tau)
    c = _curves(cohort)
    k = c.index(tau)
    pt = c.person_time(tau, k)
    c.incidence_density(tau, event, k)  # raises ZeroPersonTime
    return float(c.event_count(Status(event), k) / (pt * pt))


def var_pt_id(cohort: Cohort, tau: float) -> float:
    """Delta-method variance of ``1 - exp(-ID * tau)``."""
    tau = _check_tau(tau)
    rate = float(_curves(cohort).incidence_density(tau, Status.AE))
    return tau * tau * math.exp(-tau * rate) ** 2 * var_id(cohort, tau, Status.AE)


def var_km_greenwood(cohort: Cohort, tau: float) -> float:
    """Greenwood variance of the event-specific Kaplan-Meier estimator.

    Once the product-limit reaches 0 (last subjects at risk all have an AE)
    the variance is 0 from that time on.
    """
    tau = _check_tau(tau)
    c = _curves(cohort)
    k = c.index(tau)
    if k < 0:
        return 0.0
    km = c.km_survival[k]
    return float(km * km * c.greenwood_cum[k])


def var_aj(cohort: Cohort, tau: float) -> float:
    """Greenwood-type variance of the Aalen-Johansen cumulative incidence.

    Obtained from the delta method for the product-integral of the
    three-state (event-free, AE, CE) transition matrix with multinomial
    covariance of the Nelson-Aalen increments,
    ``Var(dA_j) = d_j (Y - d_j) / Y^3`` and ``Cov(dA_1, dA_2) = -d_1 d_2 / Y^3``.
    In closed form, with ``F`` the Aalen-Johansen estimate and ``S(u-)`` the
    all-cause survival just before ``u``::

        sum_{u <= tau} (F(tau) - F(u))^2 d/(Y (Y - d))
                     - 2 (F(tau) - F(u)) S(u-) d1 / Y^2
                     + S(u-)^2 d1 (Y - d1) / Y^3

    Without censoring this equals ``F (1 - F) / n`` exactly.
    """
    tau = _check_tau(tau)
    c = _curves(cohort)
    k = c.index(tau)
    if k < 0:
        return 0.0
    a, af, aff, b, bf, cc = (p[k] for p in c.aj_variance_parts)
    f = c.aj_cum[k] / c.n
    v = f * f * a - 2.0 * f * af + aff + f * b - bf + cc
    return max(float(v), 0.0)


def pt_id_ce_gradient(id_ae: float, id_ce: float, tau: float) -> tuple[float, float]:
    """Partial derivatives of ``x/(x+y) * (1 - exp(-tau (x+y)))`` in x and y."""
    s = id_ae + id_ce
    e = math.exp(-tau * s)
    em1 = math.expm1(tau * s)
    d_ae = e * (id_ce * em1 + tau * id_ae * s) / (s * s)
    # tau*s - (exp(tau*s) - 1), written to keep precision for small tau*s
    d_ce = id_ae * e * (tau * s - em1) / (s * s)
    return d_ae, d_ce


def var_pt_id_ce(cohort: Cohort, tau: float) -> float:
    """Delta-method variance of the probability transform accounting for CEs.

    The two incidence densities are treated as asymptotically independent
    with Poisson variances. When both densities are 0 the variance is
    reported as 0 and a :class:`ZeroTotalDensityWarning` is emitted.
    """
    tau = _check_tau(tau)
    c = _curves(cohort)
    id_ae = float(c.incidence_density(tau, Status.AE))
    id_ce = float(c.incidence_density(tau, Status.CE))
    if id_ae + id_ce == 0.0:
        warnings.warn(f"both incidence densities are 0 at tau={tau}", ZeroTotalDensityWarning,
                      stacklevel=2)
        return 0.0
    g_ae, g_ce = pt_id_ce_gradient(id_ae, id_ce, tau)
    return g_ae * g_ae * var_id(cohort, tau, Status.AE) + g_ce * g_ce * var_id(cohort, tau, Status.CE)


_MODEL_VARIANCE = {
    Estimator.IP: var_ip,
    Estimator.PT_ID: var_pt_id,
    Estimator.ONE_MINUS_KM: var_km_greenwood,
    Estimator.AJ: var_aj,
    Estimator.PT_ID_CE: var_pt_id_ce,
}


def model_variance(cohort: Cohort, tau: float, estimator: Estimator | str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroTotalDensityWarning)
        return _MODEL_VARIANCE[Estimator(estimator)](cohort, tau)


# -- bootstrap ---------------------------------------------------------------

_CHUNK = 256


def _resample_counts(cohort: Cohort, seed: int, key: tuple, reps: Iterable[int], attempt: int = 0):
    """Count tables for the listed replicates, shape (len(reps), U)."""
    n, u = cohort.n, cohort.unique_times.size
    cell = cohort._subject_index * 3 + cohort.status
    reps = list(reps)
    flat = np.empty((len(reps), n), dtype=np.int64)
    for row, r in enumerate(reps):
        stream = (*key, r) if attempt == 0 else (*key, r, attempt)
        idx = _rng.substream(seed, _rng.BOOTSTRAP, *stream).integers(0, n, size=n)
        flat[row] = cell[idx] + row * 3 * u
    counts = np.bincount(flat.ravel(), minlength=len(reps) * 3 * u).reshape(len(reps), u, 3)
    ae, ce = counts[..., 1], counts[..., 2]
    return CountCurves(cohort.unique_times, ae, ce, counts.sum(axis=-1))


def _chunk_values(cohort, seed, key, reps, requests):
    curves = _resample_counts(cohort, seed, key, reps)
    return np.stack([np.asarray(curves.value(est, tau), dtype=float) for est, tau in requests], axis=1)


def bootstrap_values(cohort: Cohort, requests, config: BootstrapConfig, workers: int = 1,
                     key: tuple = ()) -> np.ndarray:
    """Estimator values on each bootstrap replicate.

    Parameters
    ----------
    requests : sequence of (Estimator, tau)
        Every request is evaluated on the same resampled datasets, with tau
        held at its original value.
    key : tuple of int
        Extra stream key, used to give independent bootstrap streams to
        several cohorts sharing one seed.

    Returns
    -------
    (replicates, len(requests)) array, rows in replicate order.
    """
    requests = [(Estimator(e), _check_tau(t)) for e, t in requests]
    chunks = [range(i, min(i + _CHUNK, config.replicates))
              for i in range(0, config.replicates, _CHUNK)]
    job = lambda reps: _chunk_values(cohort, config.seed, key, reps, requests)  # noqa: E731
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(ch) for ch in chunks]
    values = np.concatenate(parts, axis=0)

    # undefined replicates are redrawn on a fresh stream, capped at 10x budget
    bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
    redraws = 0
    for r in bad:
        attempt = 0
        while not np.isfinite(values[r]).all():
            attempt += 1
            redraws += 1
            if redraws > 10 * config.replicates:
                raise BootstrapExhausted("too many undefined bootstrap replicates")
            curves = _resample_counts(cohort, config.seed, key, [r], attempt)
            values[r] = [float(curves.value(e, t)[0]) for e, t in requests]
    return values


def _sample_variance(x) -> float:
    # contiguous copy so every caller sums in the same order
    return float(np.var(np.ascontiguousarray(x), ddof=1))


def bootstrap_variance(cohort: Cohort, tau: float, estimator: Estimator | str,
                       config: BootstrapConfig, workers: int = 1) -> float:
    """Sample variance of ``estimator`` at fixed ``tau`` over bootstrap replicates."""
    values = bootstrap_values(cohort, [(Estimator(estimator), tau)], config, workers)
    return _sample_variance(values[:, 0])


def bootstrap_variances(cohort: Cohort, requests, config: BootstrapConfig, workers: int = 1,
                        key: tuple = ()) -> dict:
    """Bootstrap variances for several (estimator, tau) pairs from one resample set."""
    requests = [(Estimator(e), float(t)) for e, t in requests]
    values = bootstrap_values(cohort, requests, config, workers, key)
    return {req: _sample_variance(values[:, j]) for j, req in enumerate(requests)}


def evaluate(cohort: Cohort, tau: float, estimator: Estimator | str,
             bootstrap: BootstrapConfig | None = None, workers: int = 1) -> Estimate:
    """Point estimate with its model-based and (optionally) bootstrap variance."""
    est = Estimator(estimator)
    tau = _check_tau(tau)
    boot = None
    if bootstrap is not None:
        boot = bootstrap_variance(cohort, tau, est, bootstrap, workers)
    return Estimate(est, tau, estimate_value(cohort, tau, est), model_variance(cohort, tau, est), boot)
