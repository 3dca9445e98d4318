import json
from importlib import resources

import numpy as np
import pytest

from survequiv.bands import BandTarget
from survequiv.distributions import get_family
from survequiv.exceptions import DomainError, NumericalError
from survequiv.simulation import (
    SCENARIOS,
    Censoring,
    TestSpec,
    _simulate_runs,
    calibrate_uniform_censoring,
    censoring_fraction,
    coverage_study,
    generate_pair,
    parse_study_config,
    parse_test_spec,
    rejection_study,
    run_study,
    scenario,
)


class TestScenarios:
    def test_scen1a_null(self):
        c = scenario("scen1a_null")
        assert c.families == ("weibull", "weibull")
        assert c.thetas == ((1.5, 3.4), (1.5, 4.9))
        assert c.t_max == 9.0
        assert len(c.grid) == 23 and c.grid[0] == 1.5 and c.grid[-1] == 6.0
        assert c.grid[1] - c.grid[0] == pytest.approx(4.5 / 22)

    def test_other_constants(self):
        assert scenario("scen1a_alt").thetas[1] == (1.5, 3.7)
        assert scenario("scen1b_null").thetas[1] == (2.0, 2.5)
        assert scenario("scen1b_alt").thetas[1] == (2.0, 3.4)
        assert len(scenario("scen1b_alt").grid) == 14
        s2 = scenario("scen2")
        assert s2.families == ("log_logistic", "log_logistic")
        assert s2.t_max == 12.0 and len(s2.grid) == 21
        assert all(c.kind == "uniform" for c in s2.censoring)

    def test_unknown(self):
        with pytest.raises(DomainError):
            scenario("scen3")

    def test_scen1a_log_hazard_ratio_constant(self):
        for name in ("scen1a_null", "scen1a_alt"):
            c = scenario(name)
            r = c.truth(np.linspace(0.01, 9, 200), BandTarget.LOG_HAZARD_RATIO)
            np.testing.assert_allclose(r, r[0], rtol=1e-12)

    def test_scen1b_log_hazard_ratio_varies(self):
        # the hazard ratio crosses 1 early, before the evaluation grid starts
        c = scenario("scen1b_null")
        r = c.truth(np.linspace(0.01, c.t_max, 500), BandTarget.LOG_HAZARD_RATIO)
        assert r.min() < 0 < r.max()
        hr = np.exp(c.truth(np.asarray(c.grid), BandTarget.LOG_HAZARD_RATIO))
        assert np.ptp(hr) > 0.2


class TestGeneratePair:
    def test_deterministic(self):
        c = scenario("scen1b_alt")
        a = generate_pair(c, 30, 40, np.random.default_rng(5))
        b = generate_pair(c, 30, 40, np.random.default_rng(5))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.time, y.time)
            np.testing.assert_array_equal(x.event, y.event)
        assert (a[0].n, a[1].n) == (30, 40)

    def test_administrative_cutoff(self):
        for name in SCENARIOS:
            c = scenario(name)
            s1, s2 = generate_pair(c, 2000, 2000, np.random.default_rng(1))
            assert max(s1.time.max(), s2.time.max()) <= c.t_max
            at_cut = np.r_[s1.time, s2.time] == c.t_max
            assert np.all(np.r_[s1.event, s2.event][at_cut] == 0)

    def test_bad_sizes(self):
        with pytest.raises(DomainError):
            generate_pair(scenario("scen2"), 0, 5, np.random.default_rng(0))

    @pytest.mark.parametrize("name", SCENARIOS)
    def test_censoring_fraction_matches_quadrature(self, name):
        c = scenario(name)
        s = generate_pair(c, 40000, 40000, np.random.default_rng(2))
        for g in range(2):
            exact = censoring_fraction(c.families[g], c.thetas[g], c.censoring[g], c.t_max)
            assert s[g].n_censored / s[g].n == pytest.approx(exact, abs=0.01)


class TestCalibration:
    def test_monotone_in_c(self):
        fam = get_family("log_logistic")
        rates = [censoring_fraction(fam, (1.5, 2.6), Censoring("uniform", c), 12.0) for c in (1, 5, 20, 100)]
        assert all(a > b for a, b in zip(rates, rates[1:]))
        assert rates[-1] > float(fam.sf(12.0, [1.5, 2.6]))

    def test_exponential_events_no_cutoff(self, rng):
        c = calibrate_uniform_censoring("exponential", [0.1], np.inf, 0.3)
        y = rng.exponential(10.0, 400000)
        u = rng.uniform(0, c, y.size)
        assert np.mean(u < y) == pytest.approx(0.3, abs=0.005)
        # closed form: P(C < Y) = (1 - exp(-c/10)) * 10 / c
        assert (1 - np.exp(-c / 10)) * 10 / c == pytest.approx(0.3, abs=1e-8)

    def test_unattainable(self):
        with pytest.raises(NumericalError):
            calibrate_uniform_censoring("weibull", [1.5, 3.4], 1.0, 0.3)
        with pytest.raises(DomainError):
            calibrate_uniform_censoring("weibull", [1.5, 3.4], 9.0, 1.2)

    def test_frozen_constants_reproduce(self):
        data = json.loads(resources.files("survequiv").joinpath("data/scenario_constants.json").read_text())
        c = scenario("scen2")
        for g, frozen in enumerate(data["scen2"]["uniform_upper"]):
            fresh = calibrate_uniform_censoring(c.families[g], c.thetas[g], c.t_max, 0.2)
            assert fresh == pytest.approx(frozen, rel=1e-8)


class TestStudies:
    def test_reproducible(self):
        c = scenario("scen1a_null")
        tests = [TestSpec("equivalence", "diff", 2.3, delta=0.15)]
        a = rejection_study(c, 40, 40, 200, tests, random_state=9)
        b = rejection_study(c, 40, 40, 200, tests, random_state=9)
        assert a.to_csv() == b.to_csv()

    def test_runs_addressed_by_index(self):
        root = np.random.SeedSequence(4)
        c = scenario("scen1b_null")
        short = _simulate_runs(c, 20, 20, 10, root)
        long = _simulate_runs(c, 20, 20, 25, root)
        np.testing.assert_array_equal(short.time[0], long.time[0][:10])
        np.testing.assert_array_equal(short.theta[1], long.theta[1][:10])

    def test_rows_and_standard_errors(self):
        res = rejection_study(scenario("scen1a_alt"), 50, 50, 300,
                              [TestSpec("noninferiority", "diff", 0.7, delta=0.1)], random_state=1)
        row = res.rows[0]
        assert 0 <= row["rate"] <= 1
        assert row["se"] == pytest.approx(np.sqrt(row["rate"] * (1 - row["rate"]) / 300))
        assert row["regime"] == "alternative"

    def test_alpha_half_sanity(self):
        c = scenario("scen1a_null")
        res = coverage_study(c, 100, 100, 1000, alpha=0.5, grid=[2.0, 4.0], random_state=3)
        for row in res.rows:
            assert row["coverage"] == pytest.approx(0.5, abs=0.05)

    def test_bootstrap_coverage_runs(self):
        c = scenario("scen1b_alt")
        res = coverage_study(c, 30, 30, 5, methods=("bootstrap",), targets=("loghr",), n_boot=20,
                             grid=[1.0], random_state=2)
        assert res.rows[0]["method"] == "bootstrap" and res.n_boot == 20

    def test_null_boundary_calibration(self):
        c = scenario("scen1a_null")
        cells = [(1.6, 0.1), (2.3, 0.15), (4.0, 0.2)]
        tests = [TestSpec("noninferiority", "diff", t, delta=d) for t, d in cells]
        for n in (100, 150):
            res = rejection_study(c, n, n, 1000, tests, random_state=n)
            for row in res.rows:
                assert row["regime"] == "boundary"
                assert abs(row["rate"] - 0.05) <= 3 * np.sqrt(0.05 * 0.95 / 1000)

    def test_power_monotone(self):
        c = scenario("scen1a_alt")
        tests = [TestSpec(k, "diff", t, delta=d) for k in ("equivalence", "noninferiority")
                 for t in (0.7, 1.2, 2.3) for d in (0.1, 0.15, 0.2)]
        rates = {}
        for n in (20, 50, 100, 150):
            for row in rejection_study(c, n, n, 1000, tests, random_state=n).rows:
                rates[n, row["kind"], row["time"], row["delta"]] = (row["rate"], row["se"])
        for (n, kind, t, d), (rate, se) in rates.items():
            for n2 in (50, 100, 150):
                if n2 > n:
                    other, se2 = rates[n2, kind, t, d]
                    assert other >= rate - max(se, se2, 1e-3)
            for d2 in (0.15, 0.2):
                if d2 > d:
                    assert rates[n, kind, t, d2][0] >= rate

    def test_orientation(self):
        c = scenario("scen1b_null")
        auto = rejection_study(c, 20, 20, 10, [TestSpec("noninferiority", "diff", 2.4, delta=0.15)], random_state=0)
        forced = rejection_study(c, 20, 20, 10, [TestSpec("noninferiority", "diff", 2.4, delta=0.15, reference=2)],
                                 random_state=0)
        assert auto.rows[0]["reference"] == 1 and auto.rows[0]["truth"] > 0
        assert forced.rows[0]["truth"] < 0 and forced.rows[0]["regime"] == "alternative"

    def test_table_layout(self):
        tests = [TestSpec(k, "diff", 4.0, delta=0.2) for k in ("equivalence", "noninferiority")]
        res = rejection_study(scenario("scen1a_null"), 30, 30, 50, tests, random_state=0)
        lines = res.table().splitlines()
        assert lines[1].startswith('"(30,30)","(4,0.2)",0.2,diff,')
        assert "(" in lines[1].rsplit(",", 1)[1]


class TestConfigFile:
    def test_parse_and_run(self):
        text = """
        # scen1a null cell
        scenario = scen1a_null
        study = rejection
        n1 = 30
        n2 = 30
        n_sim = 40
        seed = 11
        test = equiv, diff, 4, 0.2
        test = noninf, loghr, 1.5:3, 1.0, ref=1
        """
        conf = parse_study_config(text)
        assert len(conf["tests"]) == 2 and conf["tests"][1].interval == (1.5, 3.0)
        res = run_study(conf)
        assert len(res.rows) == 2 and res.seed == 11

    def test_errors(self):
        with pytest.raises(DomainError, match="line 1"):
            parse_study_config("bogus = 1")
        with pytest.raises(DomainError):
            parse_study_config("scenario scen1a_null")
        with pytest.raises(DomainError):
            parse_test_spec("equiv, diff, 4")
        with pytest.raises(DomainError):
            parse_test_spec("equiv, diff, 4, 0.2, side=left")
