"""Monte-Carlo harness: scenarios, data generation, coverage and rejection studies.

Run ``k`` of a study draws its data from a generator addressed by
``(seed, k, attempt)``; bootstrap replicates inside run ``k`` use their own
sub-addresses. Results therefore depend only on the seed, never on the order
in which runs are evaluated. A run whose fit fails (no events, no interior
optimum, singular information) is redrawn with the next attempt index.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy import integrate, optimize

from ._validation import check_alpha, check_seed_sequence, substream
from .bands import (
    MAX_CONDITION,
    BandTarget,
    bootstrap_parameters,
    replicate_curves,
    standard_normal_quantile,
    true_target,
)
from .distributions import get_family
from .equivtest import parse_kind
from .exceptions import DomainError, NumericalError
from .inference import FitResult, SurvivalSample, fit_batch

BOUNDARY_TOL = 1e-2  # published tables round the true difference to 2 decimals


@dataclass(frozen=True)
class Censoring:
    """Random censoring mechanism: ``exponential`` (rate) or ``uniform`` on (0, c)."""

    kind: str
    param: float

    def sample(self, n, rng):
        if self.kind == "exponential":
            return get_family("exponential").sample(n, [self.param], rng)
        if self.kind == "uniform":
            return rng.uniform(0.0, self.param, n)
        if self.kind == "none":
            return np.full(n, np.inf)
        raise DomainError(f"unknown censoring kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "param": self.param}


@dataclass(frozen=True)
class ScenarioConfig:
    """Generative truth of a two-group simulation.

    ``fit_family`` is the family fitted to simulated data (it differs from the
    true families in misspecification scenarios). ``censoring_family`` is the
    censoring model used by the parametric bootstrap.
    """

    name: str
    families: tuple
    thetas: tuple
    censoring: tuple
    t_max: float
    grid: tuple
    fit_family: str = "weibull"
    censoring_family: str = "exponential"

    def __post_init__(self):
        for fam, theta in zip(self.families, self.thetas):
            get_family(fam).check_theta(theta)
        grid = np.asarray(self.grid)
        if np.any(grid <= 0) or np.any(grid > self.t_max):
            raise DomainError("scenario grid must lie in (0, t_max]")

    def truth(self, t, target):
        """True group-1-minus-group-2 target curve."""
        return true_target(self.families[0], self.thetas[0], self.families[1], self.thetas[1],
                           np.asarray(t, dtype=float), target)

    def to_dict(self):
        return {
            "name": self.name,
            "families": list(self.families),
            "thetas": [list(t) for t in self.thetas],
            "censoring": [c.to_dict() for c in self.censoring],
            "t_max": self.t_max,
            "grid": list(self.grid),
            "fit_family": self.fit_family,
            "censoring_family": self.censoring_family,
        }


def inclusive_grid(start, stop, n):
    return tuple(float(x) for x in np.linspace(start, stop, n))


@lru_cache(maxsize=None)
def scenario_constants():
    """Frozen calibration constants (uniform censoring bounds of scen2)."""
    text = resources.files("survequiv").joinpath("data/scenario_constants.json").read_text()
    return json.loads(text)


SCENARIOS = ("scen1a_null", "scen1a_alt", "scen1b_null", "scen1b_alt", "scen2")


def scenario(name):
    """Scenario registry.

    ``scen1a_*``: proportional hazards, Weibull (1.5, 3.4) against a Weibull
    with the same shape. ``scen1b_*``: crossing hazards. ``scen2``:
    log-logistic truth fitted with Weibull models. ``*_null`` configurations
    sit on the null boundary at the tabulated time points, ``*_alt`` are the
    power configurations.
    """
    ref = (1.5, 3.4)
    exp = lambda rate: Censoring("exponential", rate)  # noqa: E731
    grid1a = inclusive_grid(1.5, 6, 23)
    grid1b = inclusive_grid(1.5, 4, 14)
    # group-2 censoring rates keep each arm near 25% censoring
    table = {
        "scen1a_null": ((1.5, 4.9), exp(0.05), grid1a),
        "scen1a_alt": ((1.5, 3.7), exp(0.09), grid1a),
        "scen1b_null": ((2.0, 2.5), exp(0.14), grid1b),
        "scen1b_alt": ((2.0, 3.4), exp(0.1), grid1b),
    }
    if name in table:
        theta2, cens2, grid = table[name]
        return ScenarioConfig(
            name=name,
            families=("weibull", "weibull"),
            thetas=(ref, theta2),
            censoring=(exp(0.1), cens2),
            t_max=9.0,
            grid=grid,
        )
    if name == "scen2":
        c1, c2 = scenario_constants()["scen2"]["uniform_upper"]
        return ScenarioConfig(
            name=name,
            families=("log_logistic", "log_logistic"),
            thetas=((1.5, 2.6), (2.1, 3.9)),
            censoring=(Censoring("uniform", c1), Censoring("uniform", c2)),
            t_max=12.0,
            grid=inclusive_grid(1, 5, 21),
        )
    raise DomainError(f"unknown scenario {name!r}; choose from {SCENARIOS}")


def censoring_fraction(family, theta, censoring, t_max):
    """Exact probability that an observation is censored, by quadrature."""
    fam = get_family(family)
    theta = np.asarray(theta, dtype=float)
    if censoring.kind == "exponential":
        rate = censoring.param
        p_event, _ = integrate.quad(
            lambda y: fam.pdf(y, theta) * np.exp(-rate * y), 0, t_max, limit=200
        )
        return 1 - p_event
    if censoring.kind == "uniform":
        return _uniform_censoring_fraction(fam, theta, censoring.param, t_max)
    return float(fam.sf(t_max, theta))


def _uniform_censoring_fraction(fam, theta, c, t_max):
    # P(Y <= min(C, t_max)) with C ~ U(0, c) is the average of F(min(u, t_max))
    upper = min(c, t_max)
    area, _ = integrate.quad(lambda u: fam.cdf(u, theta), 0, upper, limit=200)
    area += max(c - t_max, 0.0) * float(fam.cdf(t_max, theta))
    return 1 - area / c


def calibrate_uniform_censoring(family, theta, t_max, target_rate):
    """Upper bound ``c`` of U(0, c) censoring giving the target censoring rate.

    The censoring fraction decreases from 1 (c -> 0) to S(t_max) (c -> inf),
    so the target must lie strictly between those limits.
    """
    if not 0 < target_rate < 1:
        raise DomainError("target_rate must lie in (0, 1)")
    fam = get_family(family)
    theta = fam.check_theta(theta)
    floor = float(fam.sf(t_max, theta)) if np.isfinite(t_max) else 0.0
    if target_rate <= floor:
        raise NumericalError(
            f"censoring rate {target_rate} unattainable: administrative censoring alone gives {floor:.4f}"
        )

    def excess(log_c):
        c = np.exp(log_c)
        if np.isfinite(t_max):
            return _uniform_censoring_fraction(fam, theta, c, t_max) - target_rate
        area, _ = integrate.quad(lambda u: fam.cdf(u, theta), 0, c, limit=200)
        return 1 - area / c - target_rate

    lo, hi = np.log(1e-8), np.log(1e8)
    return float(np.exp(optimize.brentq(excess, lo, hi, xtol=1e-12)))


def _draw_group(config, g, n, rng):
    fam = get_family(config.families[g])
    y = fam.sample(n, np.asarray(config.thetas[g]), rng)
    c = np.minimum(config.censoring[g].sample(n, rng), config.t_max)
    return np.minimum(y, c), (y <= c).astype(np.int8)


def generate_pair(config, n1, n2, rng):
    """Simulate one two-group trial from ``config``."""
    if n1 < 1 or n2 < 1:
        raise DomainError("group sizes must be at least 1")
    t1, e1 = _draw_group(config, 0, n1, rng)
    t2, e2 = _draw_group(config, 1, n2, rng)
    return SurvivalSample(t1, e1, "group1"), SurvivalSample(t2, e2, "group2")


@dataclass
class _Runs:
    time: list
    event: list
    theta: list
    info: list
    attempts: np.ndarray
    redraws: int


def _well_conditioned(info):
    ok = np.all(np.isfinite(info.reshape(info.shape[0], -1)), axis=1)
    cond = np.full(info.shape[0], np.inf)
    cond[ok] = np.linalg.cond(info[ok])
    return ok & (cond < MAX_CONDITION)


def _simulate_runs(config, n1, n2, n_sim, root):
    sizes = (n1, n2)
    time = [np.empty((n_sim, n)) for n in sizes]
    event = [np.empty((n_sim, n), dtype=np.int8) for n in sizes]
    p = get_family(config.fit_family).n_params
    theta = [np.empty((n_sim, p)) for _ in sizes]
    info = [np.empty((n_sim, p, p)) for _ in sizes]
    attempts = np.zeros(n_sim, dtype=int)
    todo = np.arange(n_sim)
    draws = 0
    while todo.size:
        if draws + todo.size > 10 * n_sim:
            raise NumericalError("simulation retry budget exhausted")
        for k in todo:
            rng = substream(root, k, attempts[k])
            for g in range(2):
                time[g][k], event[g][k] = _draw_group(config, g, sizes[g], rng)
        draws += todo.size
        ok = np.ones(todo.size, dtype=bool)
        for g in range(2):
            th, _, inf, good = fit_batch(config.fit_family, time[g][todo], event[g][todo])
            theta[g][todo] = th
            info[g][todo] = inf
            ok &= good & _well_conditioned(inf)
        attempts[todo[~ok]] += 1
        todo = todo[~ok]
    return _Runs(time, event, theta, info, attempts, draws - n_sim)


def _estimates(config, runs, grid, target):
    fam = get_family(config.fit_family)
    t = np.broadcast_to(grid, (runs.theta[0].shape[0], grid.size))
    if target is BandTarget.SURVIVAL_DIFFERENCE:
        return fam.sf(t, runs.theta[0]) - fam.sf(t, runs.theta[1])
    return fam.log_hazard(t, runs.theta[0]) - fam.log_hazard(t, runs.theta[1])


def _asymptotic_sigma(config, runs, grid, target):
    fam = get_family(config.fit_family)
    t = np.broadcast_to(grid, (runs.theta[0].shape[0], grid.size))
    var = 0.0
    for g in range(2):
        grad = fam.grad_sf(t, runs.theta[g]) if target is BandTarget.SURVIVAL_DIFFERENCE \
            else fam.grad_log_hazard(t, runs.theta[g])
        cov = np.linalg.inv(runs.info[g])
        var = var + np.einsum("bmi,bij,bmj->bm", grad, cov, grad)
    return np.sqrt(np.maximum(var, 0.0))


def _fit_result(config, runs, g, k):
    time, event = runs.time[g][k], runs.event[g][k]
    n_cens = int((event == 0).sum())
    # exponential censoring MLE in closed form; zero censorings -> degenerate
    if config.censoring_family != "exponential":
        from .inference import fit_censoring

        censor = fit_censoring(SurvivalSample(time, event), config.censoring_family, allow_degenerate=True)
    else:
        rate = n_cens / time.sum()
        censor = FitResult(
            family="exponential", theta=[rate], loglik=0.0, observed_info=[[np.nan]],
            n=time.size, n_events=n_cens, converged=n_cens > 0, degenerate=n_cens == 0,
        )
    return FitResult(
        family=config.fit_family, theta=runs.theta[g][k], loglik=0.0,
        observed_info=runs.info[g][k], n=time.size, n_events=int(event.sum()),
        converged=True, censor_fit=censor,
    )


def _bootstrap_sigma(config, runs, grid, targets, n_boot, root):
    """Bootstrap sigma per run for each target, shape ``(n_sim, len(grid))``."""
    n_sim = runs.theta[0].shape[0]
    out = {t: np.empty((n_sim, grid.size)) for t in targets}
    for k in range(n_sim):
        f1, f2 = _fit_result(config, runs, 0, k), _fit_result(config, runs, 1, k)
        boot_root = np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + (k, int(runs.attempts[k]), 1))
        thetas = bootstrap_parameters(f1, f2, n_boot, boot_root, t_max=config.t_max)
        for target in targets:
            reps = replicate_curves(config.fit_family, config.fit_family, thetas, grid, target)
            out[target][k] = reps.std(axis=0, ddof=1)
    return out


@dataclass
class StudyResult:
    """Frequencies of a Monte-Carlo study with their Monte-Carlo standard errors."""

    study: str
    scenario: str
    n1: int
    n2: int
    n_sim: int
    alpha: float
    seed: int
    rows: list
    redraws: int = 0
    n_boot: int = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "study": self.study,
            "scenario": self.scenario,
            "n1": self.n1,
            "n2": self.n2,
            "n_sim": self.n_sim,
            "n_boot": self.n_boot,
            "alpha": self.alpha,
            "seed": self.seed,
            "redraws": self.redraws,
            "rows": self.rows,
            **self.extra,
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()

    def table(self):
        """Rejection rates laid out like the published tables.

        One line per (time, margin): ``equivalence (noninferiority)``.
        """
        cells = {}
        for r in self.rows:
            key = (r["time"], round(r["truth"], 2), r["delta"], r["target"])
            cells.setdefault(key, {})[r["kind"]] = r["rate"]
        lines = ["(n1,n2),(t0,truth),delta,target,equivalence (noninferiority)"]
        for (t, truth, delta, target), rates in cells.items():
            eq = rates.get("equivalence", float("nan"))
            ni = rates.get("noninferiority", float("nan"))
            lines.append(f'"({self.n1},{self.n2})","({t},{truth})",{delta},{target},{eq:.3f} ({ni:.3f})')
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 10))
    return v


def _mc_se(p, n):
    return float(np.sqrt(p * (1 - p) / n))


def coverage_study(
    config,
    n1,
    n2,
    n_sim=1000,
    methods=("asymptotic",),
    targets=("survival_difference",),
    alpha=0.05,
    n_boot=500,
    random_state=None,
    grid=None,
):
    """Pointwise coverage of two-sided ``1 - alpha`` bands.

    A two-sided ``1 - alpha`` band is the pair of one-sided ``1 - alpha/2``
    bounds. Rows report, per method, target and grid time, the fraction of
    runs whose band contains the true value, plus the fractions of runs
    with the truth below the lower or above the upper bound.
    """
    alpha = check_alpha(alpha)
    root = check_seed_sequence(random_state)
    grid = np.asarray(config.grid if grid is None else grid, dtype=float)
    targets = [BandTarget.parse(t) for t in targets]
    runs = _simulate_runs(config, n1, n2, n_sim, root)
    z = standard_normal_quantile(1 - alpha / 2)
    sigmas = {}
    if "asymptotic" in methods:
        for target in targets:
            sigmas["asymptotic", target] = _asymptotic_sigma(config, runs, grid, target)
    if "bootstrap" in methods:
        boot = _bootstrap_sigma(config, runs, grid, targets, n_boot, root)
        for target in targets:
            sigmas["bootstrap", target] = boot[target]
    unknown = set(methods) - {"asymptotic", "bootstrap"}
    if unknown:
        raise DomainError(f"unknown methods {sorted(unknown)}")
    rows = []
    for method in methods:
        for target in targets:
            est = _estimates(config, runs, grid, target)
            sigma = sigmas[method, target]
            truth = config.truth(grid, target)
            below = truth < est - z * sigma
            above = truth > est + z * sigma
            cover = ~(below | above)
            for i, t in enumerate(grid):
                p = float(cover[:, i].mean())
                rows.append({
                    "method": method,
                    "target": target.short,
                    "t": float(t),
                    "truth": float(truth[i]),
                    "coverage": p,
                    "se": _mc_se(p, n_sim),
                    "truth_below": float(below[:, i].mean()),
                    "truth_above": float(above[:, i].mean()),
                    "mean_sigma": float(sigma[:, i].mean()),
                    "sd_estimate": float(est[:, i].std(ddof=1)) if n_sim > 1 else float("nan"),
                })
    return StudyResult("coverage", config.name, n1, n2, n_sim, alpha, int(root.entropy), rows,
                       runs.redraws, n_boot if "bootstrap" in methods else None)


@dataclass(frozen=True)
class TestSpec:
    """One test inside a rejection study.

    ``reference`` picks the group whose curve is the minuend (1 or 2);
    ``"auto"`` orients the difference so that its true value at ``t0`` (or
    its largest absolute value over the interval) is nonnegative.
    """

    kind: str
    target: str
    t0: float = None
    interval: tuple = None
    delta: float = 0.1
    reference: object = "auto"
    grid_n: int = 102

    __test__ = False

    def grid(self):
        if self.interval is None:
            return np.array([float(self.t0)])
        t1, t2 = self.interval
        return np.array([float(t1)]) if t1 == t2 else np.linspace(t1, t2, self.grid_n)

    def label(self):
        if self.interval is None:
            return f"{self.t0:g}"
        return f"{self.interval[0]:g}:{self.interval[1]:g}"


def _orientation(spec, config, target):
    if spec.reference in (1, 2):
        return 1.0 if spec.reference == 1 else -1.0
    if spec.reference != "auto":
        raise DomainError(f"reference must be 1, 2 or 'auto', got {spec.reference!r}")
    truth = config.truth(spec.grid(), target)
    return 1.0 if truth[np.argmax(np.abs(truth))] >= 0 else -1.0


def _regime(kind, truth, delta):
    # distance of the truth from the null boundary (positive inside the null)
    gap = (np.max(np.abs(truth)) if kind == "equivalence" else np.max(truth)) - delta
    if abs(gap) <= BOUNDARY_TOL:
        return "boundary"
    return "null" if gap > 0 else "alternative"


def rejection_study(
    config,
    n1,
    n2,
    n_sim=1000,
    tests=(),
    alpha=0.05,
    method="asymptotic",
    n_boot=500,
    random_state=None,
):
    """Rejection frequency of each test in ``tests`` over ``n_sim`` simulated trials.

    Rows carry the true value of the tested difference and a regime label:
    ``null``/``boundary`` rows are type I error rates, ``alternative`` rows
    are power.
    """
    alpha = check_alpha(alpha)
    root = check_seed_sequence(random_state)
    tests = list(tests)
    if not tests:
        raise DomainError("rejection_study needs at least one test")
    runs = _simulate_runs(config, n1, n2, n_sim, root)
    z = standard_normal_quantile(1 - alpha)

    by_target = {}
    for spec in tests:
        target = BandTarget.parse(spec.target)
        by_target.setdefault(target, []).append(spec.grid())
    grids = {t: np.unique(np.concatenate(g)) for t, g in by_target.items()}
    est = {t: _estimates(config, runs, g, t) for t, g in grids.items()}
    if method == "asymptotic":
        sigma = {t: _asymptotic_sigma(config, runs, g, t) for t, g in grids.items()}
    elif method == "bootstrap":
        sigma = {}
        for t, g in grids.items():
            sigma.update(_bootstrap_sigma(config, runs, g, [t], n_boot, root))
    else:
        raise DomainError(f"unknown method {method!r}")

    rows = []
    for spec in tests:
        kind = parse_kind(spec.kind)
        target = BandTarget.parse(spec.target)
        sign = _orientation(spec, config, target)
        idx = np.searchsorted(grids[target], spec.grid())
        e = sign * est[target][:, idx]
        s = sigma[target][:, idx]
        reject = (e + z * s).max(axis=1) <= spec.delta
        if kind == "equivalence":
            reject &= (e - z * s).min(axis=1) >= -spec.delta
        truth = sign * config.truth(spec.grid(), target)
        rate = float(reject.mean())
        rows.append({
            "kind": kind,
            "target": target.short,
            "time": spec.label(),
            "reference": 1 if sign > 0 else 2,
            "truth": float(truth[np.argmax(np.abs(truth))]),
            "delta": float(spec.delta),
            "rate": rate,
            "se": _mc_se(rate, n_sim),
            "regime": _regime(kind, truth, spec.delta),
        })
    return StudyResult("rejection", config.name, n1, n2, n_sim, alpha, int(root.entropy), rows,
                       runs.redraws, n_boot if method == "bootstrap" else None, {"method": method})


# plain-text study configuration

_INT_KEYS = {"n1", "n2", "n_sim", "n_boot", "seed"}
_FLOAT_KEYS = {"alpha"}
_LIST_KEYS = {"methods", "targets"}


def parse_test_spec(text):
    """Parse ``kind, target, time, delta[, ref=1|2|auto]`` where time is ``t0`` or ``t1:t2``."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) < 4:
        raise DomainError(f"test spec needs kind, target, time, delta: {text!r}")
    kind, target, when, delta = parts[:4]
    reference = "auto"
    for extra in parts[4:]:
        key, _, value = extra.partition("=")
        if key.strip() != "ref":
            raise DomainError(f"unknown test option {extra!r}")
        value = value.strip()
        reference = value if value == "auto" else int(value)
    if ":" in when:
        a, b = when.split(":")
        return TestSpec(kind, target, interval=(float(a), float(b)), delta=float(delta), reference=reference)
    return TestSpec(kind, target, t0=float(when), delta=float(delta), reference=reference)


def parse_study_config(text):
    """Parse a ``key = value`` study file; ``#`` starts a comment.

    Keys: ``scenario``, ``study`` (coverage|rejection), ``n1``, ``n2``,
    ``n_sim``, ``n_boot``, ``seed``, ``alpha``, ``method``, ``methods``,
    ``targets``, ``grid`` (``t1:t2:n``) and repeatable ``test`` lines.
    """
    conf = {"tests": []}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DomainError(f"line {lineno}: expected 'key = value'")
        key, value = key.strip(), value.strip()
        if key == "test":
            conf["tests"].append(parse_test_spec(value))
        elif key in _INT_KEYS:
            conf[key] = int(value)
        elif key in _FLOAT_KEYS:
            conf[key] = float(value)
        elif key in _LIST_KEYS:
            conf[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif key == "grid":
            a, b, n = value.split(":")
            conf[key] = np.linspace(float(a), float(b), int(n))
        elif key in {"scenario", "study", "method"}:
            conf[key] = value
        else:
            raise DomainError(f"line {lineno}: unknown key {key!r}")
    return conf


def run_study(conf):
    """Run a study described by a parsed configuration dictionary."""
    config = scenario(conf["scenario"])
    common = dict(
        n1=conf.get("n1", 100), n2=conf.get("n2", 100), n_sim=conf.get("n_sim", 1000),
        alpha=conf.get("alpha", 0.05), n_boot=conf.get("n_boot", 500), random_state=conf.get("seed"),
    )
    study = conf.get("study", "rejection")
    if study == "coverage":
        return coverage_study(
            config, methods=tuple(conf.get("methods", ["asymptotic"])),
            targets=tuple(conf.get("targets", ["diff"])), grid=conf.get("grid"), **common,
        )
    if study == "rejection":
        return rejection_study(config, tests=conf["tests"], method=conf.get("method", "asymptotic"), **common)
    raise DomainError(f"unknown study {study!r}")
