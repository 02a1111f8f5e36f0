"""Competing-risks trial simulator and Monte-Carlo bias study.

Event times are drawn by inverting the all-cause cumulative hazard with
bisection; the event type is then AE with probability
``hazard_AE(T) / (hazard_AE(T) + hazard_CE(T))``. Independent censoring times
are uniform on ``(0, c]`` with ``c`` calibrated to a target censoring
proportion.
"""

from __future__ import annotations

import configparser
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import integrate, optimize

from . import _rng
from .errors import (DataError, RootNotBracketed, TargetUnreachable, UnintegrableForm,
                     UnknownScenario)
from .estimators import ALL_ESTIMATORS, Estimator, estimate_value
from .model import Cohort, Group, Policy, Status, follow_up_times
from .variance import BootstrapConfig, bootstrap_variances, model_variance

POLICIES = tuple(Policy)
GROUPS = (Group.A, Group.B)
BIAS_ESTIMATORS = tuple(e for e in ALL_ESTIMATORS if e is not Estimator.AJ)

_TIME_TOL = 1e-10
_MAX_DOUBLINGS = 1100


# -- hazards -----------------------------------------------------------------

_FORMS = {"constant": 1, "power": 2, "reciprocal": 2, "linear": 1, "quadratic": 1}


@dataclass(frozen=True)
class HazardSpec:
    """A parametric hazard ``t -> h(t)`` with a closed-form integral.

    ========== ========== ===================
    form       params     hazard
    ========== ========== ===================
    constant   (c,)       c
    power      (a, b)     a * t**b, b > -1
    reciprocal (a, c)     a / (t + c), c > 0
    linear     (a,)       a * t
    quadratic  (a,)       a * t**2
    ========== ========== ===================
    """

    form: str
    params: tuple

    def __post_init__(self):
        form = self.form.lower()
        if form not in _FORMS:
            raise DataError(f"unknown hazard form {self.form!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _FORMS[form]:
            raise DataError(f"{form} hazard takes {_FORMS[form]} parameter(s), got {len(params)}")
        if not all(math.isfinite(p) for p in params) or params[0] < 0:
            raise DataError(f"{form} hazard needs a finite nonnegative scale, got {params}")
        if form == "power" and params[1] <= -1:
            raise UnintegrableForm(f"a*t^b is not integrable at 0 for b={params[1]} <= -1")
        if form == "reciprocal" and params[1] <= 0:
            raise DataError(f"a/(t+c) needs c > 0, got c={params[1]}")
        object.__setattr__(self, "form", form)
        object.__setattr__(self, "params", params)

    @classmethod
    def parse(cls, text: str) -> "HazardSpec":
        """Parse ``"<form> <p1> [<p2>]"``; parameters may be fractions like ``8/9``."""
        parts = text.split()
        if not parts:
            raise DataError("empty hazard specification")
        try:
            params = tuple(float(Fraction(p)) for p in parts[1:])
        except (ValueError, ZeroDivisionError):
            raise DataError(f"bad hazard parameters in {text!r}") from None
        return cls(parts[0], params)

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.form == "constant":
            return np.full_like(t, p[0])
        if self.form == "power":
            return p[0] * t ** p[1]
        if self.form == "reciprocal":
            return p[0] / (t + p[1])
        if self.form == "linear":
            return p[0] * t
        return p[0] * t * t

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.form == "constant":
            return p[0] * t
        if self.form == "power":
            return p[0] * t ** (p[1] + 1.0) / (p[1] + 1.0)
        if self.form == "reciprocal":
            return p[0] * np.log1p(t / p[1])
        if self.form == "linear":
            return p[0] * t * t / 2.0
        return p[0] * t ** 3 / 3.0

    def __str__(self):
        return " ".join([self.form, *(repr(p) for p in self.params)])


def cumulative_hazard(h: HazardSpec, t):
    """Closed-form integral of ``h`` over ``[0, t]``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    out = h.cumulative(t)
    return float(out) if np.ndim(out) == 0 else out


# -- scenarios ---------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """Hazards, group size and censoring for one simulated two-arm trial.

    ``censoring`` holds the target censored proportion per group (A, B) or
    ``None`` for no censoring; ``censoring_bound`` the calibrated upper
    limit ``c`` of the uniform censoring distribution.
    """

    id: str
    ae_a: HazardSpec
    ce_a: HazardSpec
    ae_b: HazardSpec
    ce_b: HazardSpec
    n_per_group: int
    censoring: tuple = (None, None)
    censoring_bound: tuple = (None, None)
    description: str = ""

    def __post_init__(self):
        if int(self.n_per_group) < 1:
            raise DataError("n_per_group must be positive")
        for target in self.censoring:
            if target is not None and not 0.0 <= target < 1.0:
                raise DataError(f"censoring proportion {target} outside [0, 1)")
        for bound in self.censoring_bound:
            if bound is not None and not bound > 0:
                raise DataError(f"censoring bound {bound} must be positive")

    def hazards(self, group) -> tuple[HazardSpec, HazardSpec]:
        return (self.ae_a, self.ce_a) if Group(group) is Group.A else (self.ae_b, self.ce_b)

    def censoring_target(self, group):
        return self.censoring[GROUPS.index(Group(group))]

    def bound(self, group):
        """Uniform censoring bound for ``group``; calibrated on demand if not stored."""
        i = GROUPS.index(Group(group))
        target = self.censoring[i]
        if not target:
            return None
        if self.censoring_bound[i] is not None:
            return self.censoring_bound[i]
        return _calibrated_bound(self, Group(group), target)


def _opt_float(section, key):
    raw = section.get(key, "").strip()
    if raw.lower() in ("", "no", "none"):
        return None
    try:
        return float(Fraction(raw.rstrip("%"))) / (100.0 if raw.endswith("%") else 1.0)
    except (ValueError, ZeroDivisionError):
        raise DataError(f"[{section.name}] {key}: cannot parse {raw!r}") from None


def _scenario_from_section(section) -> ScenarioSpec:
    try:
        hazards = [HazardSpec.parse(section[k]) for k in ("ae_a", "ce_a", "ae_b", "ce_b")]
        n = int(section["n_per_group"])
    except KeyError as exc:
        raise DataError(f"[{section.name}] missing key {exc.args[0]}") from None
    except ValueError:
        raise DataError(f"[{section.name}] n_per_group must be an integer") from None
    return ScenarioSpec(
        id=section.name, ae_a=hazards[0], ce_a=hazards[1], ae_b=hazards[2], ce_b=hazards[3],
        n_per_group=n,
        censoring=(_opt_float(section, "censoring_a"), _opt_float(section, "censoring_b")),
        censoring_bound=(_opt_float(section, "censoring_bound_a"),
                         _opt_float(section, "censoring_bound_b")),
        description=section.get("description", ""),
    )


def parse_scenarios(text: str) -> dict[str, ScenarioSpec]:
    """Parse the INI-style scenario format (one ``[id]`` section per scenario)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise DataError(f"malformed scenario file: {exc}") from None
    return {name: _scenario_from_section(cp[name]) for name in cp.sections()}


def format_scenario(s: ScenarioSpec) -> str:
    lines = [f"[{s.id}]"]
    if s.description:
        lines.append(f"description = {s.description}")
    lines.append(f"n_per_group = {s.n_per_group}")
    for key, h in (("ae_a", s.ae_a), ("ce_a", s.ce_a), ("ae_b", s.ae_b), ("ce_b", s.ce_b)):
        lines.append(f"{key} = {h}")
    for key, vals in (("censoring", s.censoring), ("censoring_bound", s.censoring_bound)):
        for g, v in zip("ab", vals):
            if v is not None:
                lines.append(f"{key}_{g} = {v!r}")
    return "\n".join(lines) + "\n"


@lru_cache(maxsize=None)
def load_catalog() -> dict[str, ScenarioSpec]:
    """The shipped S1-S10 scenario catalog."""
    text = resources.files("aeprob").joinpath("data/scenarios.ini").read_text(encoding="utf-8")
    return parse_scenarios(text)


def get_scenario(ref: str) -> ScenarioSpec:
    """Look up a catalog id (case-insensitive) or load a custom scenario file.

    A file must contain exactly one scenario.
    """
    catalog = load_catalog()
    for key, spec in catalog.items():
        if key.lower() == str(ref).lower():
            return spec
    path = Path(ref)
    if path.is_file():
        found = parse_scenarios(path.read_text(encoding="utf-8"))
        if len(found) != 1:
            raise DataError(f"{path} must define exactly one scenario, found {len(found)}")
        return next(iter(found.values()))
    raise UnknownScenario(f"unknown scenario {ref!r}; catalog has {', '.join(catalog)}")


# -- sampling ----------------------------------------------------------------

def _all_cause(scenario, group):
    ae, ce = scenario.hazards(group)
    return lambda t: ae.cumulative(t) + ce.cumulative(t)


def _invert(cum, targets):
    """Smallest t (to _TIME_TOL) with cum(t) >= targets, by vectorised bisection."""
    targets = np.asarray(targets, dtype=float)
    hi = np.ones_like(targets)
    for _ in range(_MAX_DOUBLINGS):
        short = cum(hi) < targets
        if not short.any():
            break
        hi[short] *= 2.0
    else:
        raise RootNotBracketed("cumulative hazard never reaches the sampled level")
    lo = np.zeros_like(targets)
    while True:
        mid = 0.5 * (lo + hi)
        active = (hi - lo > _TIME_TOL) & (mid > lo) & (mid < hi)
        if not active.any():
            return hi
        up = cum(mid) >= targets
        hi = np.where(active & up, mid, hi)
        lo = np.where(active & ~up, mid, lo)


def sample_events(scenario: ScenarioSpec, group, size: int, rng: np.random.Generator):
    """Latent event times and types for ``size`` subjects of ``group``.

    Returns ``(times, status)`` with status 1 (AE) or 2 (CE); no censoring.
    """
    ae, ce = scenario.hazards(group)
    u_time = 1.0 - rng.random(size)  # in (0, 1]
    u_type = rng.random(size)
    times = _invert(_all_cause(scenario, group), -np.log(u_time))
    h_ae, h_ce = ae.hazard(times), ce.hazard(times)
    total = h_ae + h_ce
    p_ae = np.divide(h_ae, total, out=np.zeros_like(total), where=total > 0)
    status = np.where(u_type < p_ae, int(Status.AE), int(Status.CE))
    return times, status


def sample_event(scenario: ScenarioSpec, group, rng: np.random.Generator) -> tuple[float, Status]:
    times, status = sample_events(scenario, group, 1, rng)
    return float(times[0]), Status(int(status[0]))


def _integrate_survival(cum, upper, weight=None):
    """integral_0^upper exp(-cum(t)) * weight(t) dt over doubling pieces.

    Splitting at 1, 2, 4, ... keeps quad from missing mass near 0 on long
    ranges; integration stops once survival underflows.
    """
    weight = weight or (lambda t: 1.0)
    total, lo, hi = 0.0, 0.0, min(upper, 1.0)
    while lo < upper:
        piece, _ = integrate.quad(lambda t: math.exp(-float(cum(t))) * weight(t), lo, hi,
                                  epsabs=1e-13, epsrel=1e-11, limit=200)
        total += piece
        if math.exp(-float(cum(hi))) < 1e-300:
            break
        lo, hi = hi, min(2.0 * hi, upper)
    return total


def _mean_survival(cum, c):
    """(1/c) * integral_0^c exp(-cum(t)) dt = P(C < T) for C ~ U(0, c)."""
    return _integrate_survival(cum, c) / c


def calibrate_censoring(scenario: ScenarioSpec, group, target: float) -> float:
    """Bound ``c`` such that ``C ~ Uniform(0, c)`` censors a ``target`` fraction.

    The censored fraction ``P(C < T)`` is the average all-cause survival over
    ``[0, c]``; it falls from 1 as ``c -> 0`` towards ``P(T = inf)`` as
    ``c -> inf``, so small targets need large bounds.
    """
    if not 0.0 < target < 1.0:
        raise ValueError(f"target must lie in (0, 1), got {target}")
    cum = _all_cause(scenario, group)
    f = lambda logc: _mean_survival(cum, math.exp(logc)) - target  # noqa: E731
    lo, hi = -5.0, 5.0
    while f(lo) < 0:
        lo -= 5.0
        if lo < -200:
            raise TargetUnreachable(f"censoring target {target} too close to 1")
    while f(hi) > 0:
        hi += 5.0
        if hi > 200:
            raise TargetUnreachable(f"censoring target {target} below the cure fraction")
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12))


@lru_cache(maxsize=64)
def _calibrated_bound(scenario, group, target):
    return calibrate_censoring(scenario, group, target)


def generate_trial(scenario: ScenarioSpec, rng: np.random.Generator) -> tuple[Cohort, Cohort]:
    """Simulate both arms: ``n_per_group`` subjects each, censoring independent of events."""
    cohorts = []
    n = scenario.n_per_group
    for group in GROUPS:
        times, status = sample_events(scenario, group, n, rng)
        bound = scenario.bound(group)
        if bound is not None:
            cens = bound * (1.0 - rng.random(n))
            censored = cens < times
            times = np.where(censored, cens, times)
            status = np.where(censored, int(Status.CENSORED), status)
        cohorts.append(Cohort.from_arrays(times, status, group))
    return cohorts[0], cohorts[1]


# -- true values ---------------------------------------------------------------

def true_cif(scenario: ScenarioSpec, group, tau: float, event=Status.AE) -> float:
    """``P(T <= tau, type = event)`` under the scenario's hazards."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    ae, ce = scenario.hazards(group)
    own = ae if Status(event) is Status.AE else ce
    if ae.form == ce.form == "constant":
        tot = ae.params[0] + ce.params[0]
        return 0.0 if tot == 0 else own.params[0] / tot * -math.expm1(-tot * tau)
    val = _integrate_survival(_all_cause(scenario, group), tau, lambda u: float(own.hazard(u)))
    return min(max(val, 0.0), 1.0)


# -- study -----------------------------------------------------------------------

@dataclass(frozen=True)
class ProbabilityRow:
    policy: Policy
    group: Group
    estimator: Estimator
    mean_true: float
    mean_aj: float
    abs_bias: float
    rel_bias: float
    runs: int
    excluded_true: int
    excluded_aj: int
    excluded_rel: int


@dataclass(frozen=True)
class RRRow:
    policy: Policy
    estimator: Estimator
    true_rr: float
    mean_rr_aj: float
    abs_bias: float
    rel_bias: float
    runs: int
    excluded_true: int
    excluded_aj: int
    excluded_rel: int


@dataclass(frozen=True)
class VarianceRow:
    policy: Policy
    group: Group
    estimator: Estimator
    source: str
    count: int
    whisker_low: float
    q1: float
    median: float
    q3: float
    whisker_high: float


@dataclass
class RunData:
    """Per-run raw results; axes (run, policy, group[, estimator])."""

    tau: np.ndarray
    true: np.ndarray
    value: np.ndarray
    var_model: np.ndarray
    var_boot: np.ndarray
    censored_fraction: np.ndarray  # (run, group)


@dataclass
class StudySummary:
    scenario: str
    n_runs: int
    seed: int
    bootstrap_replicates: int | None
    probability: list = field(default_factory=list)
    relative_risk: list = field(default_factory=list)
    variance: list = field(default_factory=list)
    censored_fraction: tuple = (0.0, 0.0)
    runs: RunData | None = None

    def probability_row(self, policy, group, estimator) -> ProbabilityRow:
        for r in self.probability:
            if (r.policy, r.group, r.estimator) == (Policy(policy), Group(group), Estimator(estimator)):
                return r
        raise KeyError((policy, group, estimator))

    def rr_row(self, policy, estimator) -> RRRow:
        for r in self.relative_risk:
            if (r.policy, r.estimator) == (Policy(policy), Estimator(estimator)):
                return r
        raise KeyError((policy, estimator))


def _simulate_run(scenario, seed, run, boot_reps):
    rng = _rng.substream(seed, _rng.SIMULATION, run)
    cohorts = generate_trial(scenario, rng)
    taus = follow_up_times(*cohorts)
    P, E = len(POLICIES), len(ALL_ESTIMATORS)
    tau = np.empty((P, 2))
    true = np.empty((P, 2))
    value = np.empty((P, 2, E))
    var_model = np.empty((P, 2, E))
    var_boot = np.full((P, 2, E), np.nan)
    cens = np.empty(2)
    for gi, (group, cohort) in enumerate(zip(GROUPS, cohorts)):
        cens[gi] = cohort.n_censored.sum() / cohort.n
        tau[:, gi] = [taus.for_policy(p, group) for p in POLICIES]
        for pi in range(P):
            t = tau[pi, gi]
            true[pi, gi] = true_cif(scenario, group, t)
            for ei, est in enumerate(ALL_ESTIMATORS):
                value[pi, gi, ei] = estimate_value(cohort, t, est)
                var_model[pi, gi, ei] = model_variance(cohort, t, est)
        if boot_reps:
            requests = [(est, t) for t in sorted(set(tau[:, gi])) for est in ALL_ESTIMATORS]
            bv = bootstrap_variances(cohort, requests, BootstrapConfig(boot_reps, seed), key=(run, gi))
            for pi in range(P):
                for ei, est in enumerate(ALL_ESTIMATORS):
                    var_boot[pi, gi, ei] = bv[est, float(tau[pi, gi])]
    return tau, true, value, var_model, var_boot, cens


def _simulate_chunk(scenario, seed, runs, boot_reps):
    out = [_simulate_run(scenario, seed, r, boot_reps) for r in runs]
    return [np.stack(parts) for parts in zip(*out)]


def _logit_mean(p):
    ok = (p > 0) & (p < 1) & np.isfinite(p)
    if not ok.any():
        return math.nan, int(p.size)
    x = np.log(p[ok]) - np.log1p(-p[ok])
    m = float(np.mean(x))
    return 1.0 / (1.0 + math.exp(-m)), int(p.size - ok.sum())


def _log_ratio_mean(num, den):
    """exp(mean log(num/den)) over pairs where both are positive and finite."""
    ok = (num > 0) & (den > 0) & np.isfinite(num) & np.isfinite(den)
    if not ok.any():
        return math.nan, int(num.size)
    return math.exp(float(np.mean(np.log(num[ok] / den[ok])))), int(num.size - ok.sum())


def _box(x):
    x = x[np.isfinite(x)]
    if x.size == 0:
        return 0, math.nan, math.nan, math.nan, math.nan, math.nan
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo = float(x[x >= q1 - 1.5 * iqr].min())
    hi = float(x[x <= q3 + 1.5 * iqr].max())
    return int(x.size), lo, float(q1), float(med), float(q3), hi


def summarize(scenario_id: str, data: RunData, seed: int, boot_reps) -> StudySummary:
    """Aggregate per-run results.

    Probabilities are averaged on the logit scale, ratios on the log scale;
    values that would be undefined there (probabilities 0 or 1, ratios with a
    zero) are left out and counted in the ``excluded_*`` columns. Absolute
    biases are plain means over runs where both terms are defined.
    """
    n_runs = data.value.shape[0]
    aj_i = ALL_ESTIMATORS.index(Estimator.AJ)
    summary = StudySummary(scenario_id, n_runs, seed, boot_reps, runs=data,
                           censored_fraction=tuple(float(x) for x in data.censored_fraction.mean(axis=0)))
    for pi, policy in enumerate(POLICIES):
        for gi, group in enumerate(GROUPS):
            true = data.true[:, pi, gi]
            aj = data.value[:, pi, gi, aj_i]
            mean_true, ex_true = _logit_mean(true)
            mean_aj, ex_aj = _logit_mean(aj)
            for est in BIAS_ESTIMATORS:
                v = data.value[:, pi, gi, ALL_ESTIMATORS.index(est)]
                ratio, ex_rel = _log_ratio_mean(v, aj)
                summary.probability.append(ProbabilityRow(
                    policy, group, est, mean_true, mean_aj, float(np.mean(v - aj)), ratio - 1.0,
                    n_runs, ex_true, ex_aj, ex_rel))
        true_rr, ex_true = _log_ratio_mean(data.true[:, pi, 0], data.true[:, pi, 1])
        aj_a, aj_b = data.value[:, pi, 0, aj_i], data.value[:, pi, 1, aj_i]
        mean_rr_aj, ex_aj = _log_ratio_mean(aj_a, aj_b)
        with np.errstate(divide="ignore", invalid="ignore"):
            rr_aj = np.where((aj_a > 0) & (aj_b > 0), aj_a / aj_b, np.nan)
            for est in BIAS_ESTIMATORS:
                ei = ALL_ESTIMATORS.index(est)
                va, vb = data.value[:, pi, 0, ei], data.value[:, pi, 1, ei]
                rr = np.where((va > 0) & (vb > 0), va / vb, np.nan)
                ratio, ex_rel = _log_ratio_mean(rr, rr_aj)
                diff = rr - rr_aj
                abs_bias = float(np.mean(diff[np.isfinite(diff)])) if np.isfinite(diff).any() else math.nan
                summary.relative_risk.append(RRRow(policy, est, true_rr, mean_rr_aj, abs_bias,
                                                   ratio - 1.0, n_runs, ex_true, ex_aj, ex_rel))
        for gi, group in enumerate(GROUPS):
            for ei, est in enumerate(ALL_ESTIMATORS):
                sources = [("model", data.var_model)]
                if boot_reps:
                    sources.append(("bootstrap", data.var_boot))
                for name, arr in sources:
                    summary.variance.append(VarianceRow(policy, group, est, name,
                                                        *_box(arr[:, pi, gi, ei])))
    return summary


def run_study(scenario: ScenarioSpec | str, n_runs: int, bootstrap: BootstrapConfig | int | None = None,
              seed: int = 0, workers: int = 1) -> StudySummary:
    """Simulate ``n_runs`` trials and summarise estimator bias and variances.

    Run ``i`` draws from the stream ``(seed, i)`` and its bootstrap (if any)
    from ``(seed, i, group, replicate)``, so the summary is identical for
    any ``workers`` count. ``bootstrap`` may be a config (its replicate count
    is used; the study seed drives the streams) or a replicate count.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    n_runs = int(n_runs)
    if n_runs < 2:
        raise ValueError("a study needs at least 2 runs")
    seed = _rng.check_seed(seed)
    boot_reps = bootstrap.replicates if isinstance(bootstrap, BootstrapConfig) else bootstrap
    if boot_reps is not None:
        BootstrapConfig(boot_reps, seed)  # validates
    # calibrate once here rather than in every worker
    scenario = _with_bounds(scenario)
    workers = max(1, int(workers))
    if workers == 1:
        parts = [_simulate_chunk(scenario, seed, range(n_runs), boot_reps)]
    else:
        size = max(1, math.ceil(n_runs / (4 * workers)))
        chunks = [range(i, min(i + size, n_runs)) for i in range(0, n_runs, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk, [scenario] * len(chunks), [seed] * len(chunks),
                                  chunks, [boot_reps] * len(chunks)))
    stacked = [np.concatenate(arrs) for arrs in zip(*parts)]
    data = RunData(*stacked)
    return summarize(scenario.id, data, seed, boot_reps)


def _with_bounds(scenario: ScenarioSpec) -> ScenarioSpec:
    bounds = tuple(scenario.bound(g) for g in GROUPS)
    if bounds == scenario.censoring_bound:
        return scenario
    kwargs = {f.name: getattr(scenario, f.name) for f in fields(scenario)}
    kwargs["censoring_bound"] = bounds
    return ScenarioSpec(**kwargs)
