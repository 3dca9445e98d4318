"""Kaplan-Meier estimation, Greenwood variance and the two-sample log-rank test."""

from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from ._validation import check_alpha, check_grid
from .bands import BandTarget, band_from_variance
from .exceptions import InputError
from .inference import SurvivalSample


@dataclass
class KMEstimate:
    """Product-limit estimate at the distinct event times.

    ``last_time`` is the largest observed time (event or censoring); the
    estimate is undefined beyond it.
    """

    event_times: np.ndarray
    survival: np.ndarray
    greenwood_var: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray
    last_time: float

    def evaluate(self, t):
        """Right-continuous step values ``(S(t), var(t), available(t))``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right") - 1
        surv = np.where(idx >= 0, self.survival[np.maximum(idx, 0)] if self.survival.size else 1.0, 1.0)
        var = np.where(idx >= 0, self.greenwood_var[np.maximum(idx, 0)] if self.survival.size else 0.0, 0.0)
        return surv, var, t <= self.last_time


def kaplan_meier(sample):
    """Kaplan-Meier estimate with Greenwood variance.

    At tied times events are processed before censorings, i.e. subjects
    censored at t still count as at risk at t.
    """
    time, event = sample.time, sample.event
    order = np.argsort(time, kind="stable")
    time, event = time[order], event[order]
    uniq, first = np.unique(time, return_index=True)
    at_risk_all = time.size - first
    deaths_all = np.add.reduceat(event, first) if time.size else np.array([], dtype=int)
    has_event = deaths_all > 0
    times = uniq[has_event]
    d = deaths_all[has_event].astype(float)
    n = at_risk_all[has_event].astype(float)
    surv = np.cumprod(1 - d / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(n > d, d / (n * (n - d)), np.inf)
        cum = np.cumsum(terms)
        # once S reaches 0 the variance is reported as 0
        var = np.where(surv > 0, surv**2 * cum, 0.0)
    return KMEstimate(times, surv, var, n.astype(int), d.astype(int), float(time.max()))


def km_difference_band(km1, km2, grid, alpha=0.05):
    """Band for S1 - S2 from two Kaplan-Meier curves (Greenwood variances added).

    Grid points beyond the last observed time of either group are flagged
    unavailable and carry NaN values.
    """
    grid = check_grid(grid)
    alpha = check_alpha(alpha)
    s1, v1, a1 = km1.evaluate(grid)
    s2, v2, a2 = km2.evaluate(grid)
    available = a1 & a2
    est = np.where(available, s1 - s2, np.nan)
    var = np.where(available, v1 + v2, np.nan)
    band = band_from_variance(est, var, grid, BandTarget.SURVIVAL_DIFFERENCE, alpha, "kaplan_meier")
    band.sigma = np.where(available, band.sigma, np.nan)
    band.available = available
    return band


@dataclass
class LogRankResult:
    statistic: float
    p_value: float
    observed: float
    expected: float
    variance: float


def logrank_test(sample1, sample2):
    """Two-group log-rank test (chi-square with one degree of freedom)."""
    time = np.concatenate([sample1.time, sample2.time])
    event = np.concatenate([sample1.event, sample2.event])
    group1 = np.concatenate([np.ones(sample1.n, bool), np.zeros(sample2.n, bool)])
    if event.sum() == 0:
        raise InputError("log-rank test needs at least one event")
    times, d = np.unique(time[event == 1], return_counts=True)
    ev1 = np.sort(time[(event == 1) & group1])
    d1 = np.searchsorted(ev1, times, side="right") - np.searchsorted(ev1, times, side="left")
    s_all = np.sort(time)
    s_1 = np.sort(time[group1])
    n = s_all.size - np.searchsorted(s_all, times, side="left")
    n1 = s_1.size - np.searchsorted(s_1, times, side="left")
    expected = d * n1 / n
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(n > 1, d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1), 0.0)
    o, e, v = float(d1.sum()), float(expected.sum()), float(var.sum())
    stat = (o - e) ** 2 / v if v > 0 else 0.0
    return LogRankResult(stat, float(stats.chi2.sf(stat, 1)), o, e, v)


class KaplanMeier(BaseEstimator):
    """Scikit-learn style Kaplan-Meier estimator.

    Attributes
    ----------
    estimate_ : KMEstimate
    """

    def fit(self, time, event):
        self.estimate_ = kaplan_meier(SurvivalSample(time, event))
        return self

    def predict(self, t):
        """Step survival estimate at ``t``."""
        if not hasattr(self, "estimate_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("KaplanMeier is not fitted yet; call fit first")
        return self.estimate_.evaluate(t)[0]
