"""Acceptance criteria, one test (and one PASS/FAIL line) per criterion.

Monte-Carlo criteria run at their stated ``n_sim`` with the pre-declared seed
``SEED``. A Monte-Carlo cell that misses its window is rerun with several
times as many independent runs: if that estimate lies inside the window the
miss is attributed to simulation noise and the test is marked xfail (the line
still reads FAIL); otherwise the test fails.
"""

import numpy as np
import pytest

from survequiv.bands import BandTarget, bootstrap_replicates, pointwise_band
from survequiv.distributions import get_family
from survequiv.equivtest import decide, noninferiority_onset
from survequiv.inference import SurvivalSample, fit_mle, select_model
from survequiv.nonparametric import kaplan_meier, logrank_test
from survequiv.simulation import (
    SCENARIOS,
    TestSpec,
    coverage_study,
    generate_pair,
    rejection_study,
    scenario,
)

SEED = 0
N_SIM = 1000
RERUN_FACTOR = 5


class Criterion:
    """Collects sub-checks and emits one summary line."""

    def __init__(self, number, title, log):
        self.number, self.title, self.log = number, title, log
        self.checks = []
        self.noise = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return ok

    def mc_check(self, name, value, lo, hi, rerun):
        """Window check for a Monte-Carlo estimate; ``rerun()`` returns a more precise estimate."""
        ok = lo <= value <= hi
        detail = f"{value:.3f} in [{lo:.3f}, {hi:.3f}]"
        if not ok:
            precise = rerun()
            detail += f"; rerun x{RERUN_FACTOR}: {precise:.4f}"
            if lo <= precise <= hi:
                self.noise.append(name)
        return self.check(name, ok, detail)

    def finish(self):
        passed = all(ok for _, ok, _ in self.checks)
        status = "PASS" if passed else "FAIL"
        line = f"criterion {self.number} [{status}] {self.title}"
        details = [f"    {'ok ' if ok else 'BAD'} {name}: {d}" for name, ok, d in self.checks]
        self.log.append(line)
        self.log.extend(details)
        print(line)
        print("\n".join(details))
        if passed:
            return
        hard = [n for n, ok, _ in self.checks if not ok and n not in self.noise]
        if hard:
            pytest.fail(f"criterion {self.number} failed: {hard}")
        pytest.xfail(f"criterion {self.number}: Monte-Carlo noise only in {self.noise}")


@pytest.fixture
def criterion(acceptance_log):
    made = []

    def make(number, title):
        made.append(Criterion(number, title, acceptance_log))
        return made[-1]

    return make


def test_criterion_1_case_study(criterion, veteran, veteran_fits):
    c = criterion(1, "veteran case-study parity")
    f1, f2 = veteran_fits
    asym = pointwise_band(f1, f2, [80.0])
    c.check("Delta(80)", abs(asym.estimate[0] - 0.047) <= 0.005, f"{asym.estimate[0]:.4f}")
    c.check("asymptotic band at 80",
            abs(asym.lower[0] + 0.068) <= 0.005 and abs(asym.upper[0] - 0.163) <= 0.005,
            f"[{asym.lower[0]:.4f}, {asym.upper[0]:.4f}]")
    boot = pointwise_band(f1, f2, [80.0], method="bootstrap", n_boot=500, random_state=SEED)
    c.check("bootstrap band at 80 (seed 0)",
            abs(boot.lower[0] + 0.067) <= 0.01 and abs(boot.upper[0] - 0.162) <= 0.01,
            f"[{boot.lower[0]:.4f}, {boot.upper[0]:.4f}]")
    hits = 0
    for seed in range(1, 21):
        b = pointwise_band(f1, f2, [80.0], method="bootstrap", n_boot=500, random_state=seed)
        hits += abs(b.lower[0] + 0.067) <= 0.01 and abs(b.upper[0] - 0.162) <= 0.01
    c.check("bootstrap seeds 1-20 within tolerance (informational)", True, f"{hits}/20")
    band = pointwise_band(f1, f2, np.arange(1.0, 601.0))
    onset = noninferiority_onset(band, 0.15)
    c.check("non-inferiority onset at delta=0.15", onset is not None and 85 <= onset <= 110, f"{onset}")
    p = logrank_test(*veteran).p_value
    c.check("log-rank p", abs(p - 0.928) <= 0.005, f"{p:.4f}")
    quoted = {
        "standard": {"exponential": 747.1, "weibull": 749.1, "log_normal": 755.1, "log_logistic": 758.1},
        "test": {"log_logistic": 749.1, "log_normal": 750.1, "weibull": 751.7},
    }
    for s in veteran:
        ranked = [f for f in select_model(s) if f.family in quoted[s.label]]
        order = [f.family for f in ranked]
        want = sorted(quoted[s.label], key=quoted[s.label].get)
        close = all(abs(f.aic - quoted[s.label][f.family]) <= 0.5 for f in ranked)
        c.check(f"AIC order/values {s.label}", order == want and close,
                ", ".join(f"{f.family}={f.aic:.2f}" for f in ranked))
    c.finish()


def _rates(name, n, tests, n_sim=N_SIM, seed=SEED):
    res = rejection_study(scenario(name), n, n, n_sim, tests, random_state=seed)
    return {(r["kind"], r["time"], r["delta"]): r for r in res.rows}


def _pair(t0, delta):
    return [TestSpec(k, "diff", t0, delta=delta) for k in ("equivalence", "noninferiority")]


def _rerun(name, n, spec):
    # independent seed, RERUN_FACTOR times the runs
    def go():
        rows = _rates(name, n, [spec], n_sim=RERUN_FACTOR * N_SIM, seed=SEED + 1000)
        return next(iter(rows.values()))["rate"]

    return go


@pytest.mark.slow
def test_criterion_2_type_one_proportional(criterion):
    c = criterion(2, "type I error, proportional hazards")
    r = _rates("scen1a_null", 150, _pair(4.0, 0.2))
    eq, ni = r["equivalence", "4", 0.2], r["noninferiority", "4", 0.2]
    c.mc_check("(150,150) t0=4 d=0.2 equivalence", eq["rate"], 0.033, 0.073,
               _rerun("scen1a_null", 150, _pair(4.0, 0.2)[0]))
    c.mc_check("(150,150) t0=4 d=0.2 non-inferiority", ni["rate"], 0.028, 0.068,
               _rerun("scen1a_null", 150, _pair(4.0, 0.2)[1]))
    r = _rates("scen1a_null", 20, _pair(2.3, 0.15))
    eq, ni = r["equivalence", "2.3", 0.15], r["noninferiority", "2.3", 0.15]
    c.mc_check("(20,20) t0=2.3 d=0.15 equivalence", eq["rate"], 0.0, 0.005,
               _rerun("scen1a_null", 20, _pair(2.3, 0.15)[0]))
    c.mc_check("(20,20) t0=2.3 d=0.15 non-inferiority", ni["rate"], 0.031, 0.071,
               _rerun("scen1a_null", 20, _pair(2.3, 0.15)[1]))
    c.finish()


@pytest.mark.slow
def test_criterion_3_type_one_nonproportional(criterion):
    c = criterion(3, "type I error, non-proportional hazards")
    specs = _pair(2.4, 0.15)
    b = _rates("scen1b_null", 100, specs)
    a = _rates("scen1a_null", 100, _pair(2.3, 0.15))
    for spec in specs:
        row = b[spec.kind, "2.4", 0.15]
        c.mc_check(f"(100,100) t0=2.4 d=0.15 {spec.kind}", row["rate"], 0.035, 0.075,
                   _rerun("scen1b_null", 100, spec))
        other = a[spec.kind, "2.3", 0.15]
        joint = np.hypot(row["se"], other["se"])
        c.check(f"matches scen1a cell (2.3, 0.15) {spec.kind}",
                abs(row["rate"] - other["rate"]) <= 2 * joint,
                f"|{row['rate']:.3f} - {other['rate']:.3f}| <= {2 * joint:.4f}")
    c.finish()


@pytest.mark.slow
def test_criterion_4_power(criterion):
    c = criterion(4, "power")
    cells = [
        ("scen1a_alt", 50, 0.7, 0.15, 0.929, 0.943),
        ("scen1a_alt", 100, 2.3, 0.2, 0.854, 0.861),
        ("scen1b_alt", 20, 0.2, 0.1, 0.964, 0.964),
    ]
    for name, n, t0, d, eq_ref, ni_ref in cells:
        specs = _pair(t0, d)
        rows = _rates(name, n, specs)
        for spec, ref in zip(specs, (eq_ref, ni_ref)):
            rate = rows[spec.kind, f"{t0:g}", d]["rate"]
            c.mc_check(f"{name} ({n},{n}) t0={t0} d={d} {spec.kind}", rate, ref - 0.03, ref + 0.03,
                       _rerun(name, n, spec))
    c.finish()


def _five_points(config):
    grid = np.asarray(config.grid)
    return grid[np.linspace(0, grid.size - 1, 5).round().astype(int)]


@pytest.mark.slow
def test_criterion_5_coverage(criterion):
    c = criterion(5, "coverage of two-sided 95% bands")

    def rerun(config, method, target, t):
        def go():
            res = coverage_study(config, 100, 100, RERUN_FACTOR * N_SIM, methods=(method,), targets=(target,),
                                 n_boot=500, grid=[t], random_state=SEED + 1000)
            return res.rows[0]["coverage"]

        return go

    for name in ("scen1a_null", "scen1b_null"):
        config = scenario(name)
        res = coverage_study(config, 100, 100, N_SIM, methods=("asymptotic", "bootstrap"),
                             targets=("diff", "loghr"), n_boot=500, grid=_five_points(config), random_state=SEED)
        for row in res.rows:
            c.mc_check(f"{name} {row['method']} {row['target']} t={row['t']:.3f}", row["coverage"], 0.935, 0.965,
                       rerun(config, row["method"], row["target"], row["t"]))
    config = scenario("scen2")
    res = coverage_study(config, 100, 100, N_SIM, methods=("asymptotic", "bootstrap"), targets=("diff",),
                         n_boot=500, grid=_five_points(config), random_state=SEED)
    for method in ("asymptotic", "bootstrap"):
        cov = np.array([r["coverage"] for r in res.rows if r["method"] == method])
        c.check(f"scen2 {method} diff: >=0.90 at >=3 of 5, >=0.85 at all",
                (cov >= 0.90).sum() >= 3 and cov.min() >= 0.85, np.array2string(cov, precision=3))
    c.finish()


@pytest.mark.slow
def test_criterion_6_oracles(criterion, veteran_fits):
    c = criterion(6, "oracle suites")
    rng = np.random.default_rng(1)
    y, cens = rng.weibull(1.5, 300) * 3.4, rng.exponential(10.0, 300)
    s = SurvivalSample(np.minimum(y, cens), (y <= cens).astype(int))
    rate = fit_mle(s, "exponential").theta[0]
    closed = s.event.sum() / s.time.sum()
    c.check("censored-exponential MLE closed form", abs(rate / closed - 1) <= 1e-8, f"rel err {abs(rate / closed - 1):.1e}")

    t = np.array([0.1, 0.7, 2.0, 5.0, 12.0])
    thetas = {"weibull": [1.5, 3.4], "exponential": [0.2], "log_logistic": [2.1, 3.9], "log_normal": [0.7, 2.0]}
    worst = 0.0
    for tag, th in thetas.items():
        fam = get_family(tag)
        th = np.asarray(th, float)
        for name, fun in (("grad_sf", fam.sf), ("grad_log_hazard", fam.log_hazard)):
            fd = []
            for i in range(th.size):
                h = 1e-6 * th[i]
                up, dn = th.copy(), th.copy()
                up[i] += h
                dn[i] -= h
                fd.append((fun(t, up) - fun(t, dn)) / (2 * h))
            worst = max(worst, np.max(np.abs(getattr(fam, name)(t, th) - np.stack(fd, -1))))
    c.check("analytic vs finite-difference gradients", worst <= 1e-5, f"max abs diff {worst:.1e}")

    p = np.array([1e-4, 0.1, 0.5, 0.9, 0.9999])
    err = max(np.max(np.abs(get_family(tag).cdf(get_family(tag).ppf(p, th), th) - p)) for tag, th in thetas.items())
    c.check("quantile/cdf round trips", err <= 1e-8, f"max abs err {err:.1e}")

    fixtures = [
        (([1, 2, 3], [1, 1, 1]), [1 - 1 / 3, (1 - 1 / 3) * (1 - 1 / 2), 0.0]),
        (([1, 2, 3], [0, 1, 1]), [1 - 1 / 2, 0.0]),
        (([1, 2, 2, 3, 4], [1, 1, 0, 1, 0]), [1 - 1 / 5, (1 - 1 / 5) * (1 - 1 / 4), (1 - 1 / 5) * (1 - 1 / 4) * (1 - 1 / 2)]),
        (([2, 2, 2, 5], [1, 1, 0, 1]), [1 - 2 / 4, 0.0]),
        (([1, 2, 3, 4, 5], [1, 0, 1, 1, 0]), [1 - 1 / 5, (1 - 1 / 5) * (1 - 1 / 3), (1 - 1 / 5) * (1 - 1 / 3) * (1 - 1 / 2)]),
    ]
    exact = all(np.array_equal(kaplan_meier(SurvivalSample(*data)).survival, want) for data, want in fixtures)
    c.check("Kaplan-Meier hand fixtures (exact)", exact, f"{len(fixtures)} fixtures")

    grid = np.array([20.0, 80.0, 200.0])
    a = bootstrap_replicates(*veteran_fits, grid, "diff", 200, 42)
    b = bootstrap_replicates(*veteran_fits, grid, "diff", 200, 42)
    c.check("bootstrap determinism (byte-exact)", a.tobytes() == b.tobytes())

    res = coverage_study(scenario("scen1a_null"), 5000, 5000, 2000, targets=("diff",), grid=[3.0], random_state=SEED)
    row = res.rows[0]
    rel = row["mean_sigma"] / row["sd_estimate"] - 1
    c.check("delta-method sd vs Monte-Carlo sd at n=5000/group", abs(rel) <= 0.05,
            f"{row['mean_sigma']:.5f} vs {row['sd_estimate']:.5f} ({rel:+.2%})")
    c.finish()


def test_criterion_7_properties(criterion, veteran_fits):
    c = criterion(7, "property suites")
    f1, f2 = veteran_fits
    grid = np.linspace(10, 500, 25)
    sym = True
    for target in BandTarget:
        x = pointwise_band(f1, f2, grid, target)
        y = pointwise_band(f2, f1, grid, target)
        sym &= np.allclose(x.upper, -y.lower, rtol=1e-12) and np.allclose(x.lower, -y.upper, rtol=1e-12)
    c.check("band symmetry under group swap", sym)
    widths = [pointwise_band(f1, f2, grid, alpha=a) for a in (0.01, 0.05, 0.2)]
    mono = all(np.all(w.upper - w.lower > v.upper - v.lower) for w, v in zip(widths, widths[1:]))
    c.check("band width decreasing in alpha", mono)

    iut = margin_ok = alpha_ok = True
    for alpha in (0.01, 0.05, 0.1, 0.2):
        for lo in range(0, 25, 3):
            sub = pointwise_band(f1, f2, grid[lo:lo + 4], alpha=alpha)
            for delta in (0.05, 0.1, 0.15, 0.2, 0.3):
                eq, ni = decide("equivalence", sub, delta)[0], decide("noninferiority", sub, delta)[0]
                iut &= not eq or ni
                margin_ok &= not ni or decide("noninferiority", sub, delta + 0.05)[0]
                margin_ok &= not eq or decide("equivalence", sub, delta + 0.05)[0]
                looser = pointwise_band(f1, f2, grid[lo:lo + 4], alpha=min(alpha * 2, 0.5))
                alpha_ok &= not eq or decide("equivalence", looser, delta)[0]
    c.check("equivalence implies non-inferiority", iut)
    c.check("rejection monotone in margin", margin_ok)
    c.check("rejection monotone in alpha", alpha_ok)

    w = get_family("weibull")
    tt = np.linspace(0.01, 9, 300)
    r = w.log_hazard(tt, [1.5, 3.4]) - w.log_hazard(tt, [1.5, 4.9])
    c.check("r(t) constant for equal Weibull shapes", np.ptp(r) <= 1e-12, f"r = {r[0]:.6f}")

    targets = {name: (0.20 if name == "scen2" else 0.25) for name in SCENARIOS}
    for name, want in targets.items():
        s1, s2 = generate_pair(scenario(name), 100_000, 100_000, np.random.default_rng(SEED))
        fr = (s1.n_censored / s1.n, s2.n_censored / s2.n)
        c.check(f"censoring fraction {name}", all(abs(f - want) <= 0.02 for f in fr),
                f"{fr[0]:.4f}, {fr[1]:.4f} (target {want:.2f})")
    c.finish()
