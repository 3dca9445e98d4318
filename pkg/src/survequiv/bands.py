"""Pointwise confidence bands for the survival difference and log hazard ratio.

For two fitted groups the band targets are

* ``survival_difference``: D(t) = S1(t) - S2(t)
* ``log_hazard_ratio``:    r(t) = log h1(t) - log h2(t)

and the bounds at one-sided level ``1 - alpha`` are ``estimate -/+ z * sigma``
with ``z`` the ``1 - alpha`` standard normal quantile. ``sigma`` comes either
from the delta method or from a parametric bootstrap that redraws event and
censoring times from the fitted models.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._validation import (
    check_alpha,
    check_grid,
    check_probability,
    check_seed_sequence,
    substream,
)
from .distributions import get_family
from .exceptions import DomainError, InputError, NumericalError
from .inference import fit_batch

MAX_CONDITION = 1e10


class BandTarget(str, enum.Enum):
    SURVIVAL_DIFFERENCE = "survival_difference"
    LOG_HAZARD_RATIO = "log_hazard_ratio"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"diff": cls.SURVIVAL_DIFFERENCE, "loghr": cls.LOG_HAZARD_RATIO}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown band target {value!r}") from None

    @property
    def short(self):
        return "diff" if self is BandTarget.SURVIVAL_DIFFERENCE else "loghr"


@dataclass
class ConfidenceBand:
    """Pointwise band; ``lower``/``upper`` are one-sided ``1 - alpha`` bounds."""

    target: BandTarget
    alpha: float
    grid: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sigma: np.ndarray
    method: str
    available: np.ndarray = None

    def __post_init__(self):
        if self.available is None:
            self.available = np.ones(self.grid.shape, dtype=bool)

    def flipped(self):
        """Band for the negated target (groups swapped)."""
        return ConfidenceBand(
            self.target, self.alpha, self.grid, -self.estimate, -self.upper,
            -self.lower, self.sigma, self.method, self.available,
        )

    def rows(self):
        for i, t in enumerate(self.grid):
            yield {
                "t": float(t),
                "estimate": float(self.estimate[i]),
                "lower": float(self.lower[i]),
                "upper": float(self.upper[i]),
                "sigma": float(self.sigma[i]),
            }


def standard_normal_quantile(p):
    """Quantile of N(0, 1); ``p`` must lie in (0, 1)."""
    p = check_probability(p)
    z = special.ndtri(p)
    return float(z) if np.ndim(z) == 0 else z


def _check_fit(fit):
    if not fit.converged:
        raise InputError(f"fit {fit.label or fit.family!r} did not converge")


def target_value(fit1, fit2, t, target):
    """D(t) or r(t) for two fits at times ``t``."""
    target = BandTarget.parse(target)
    t = np.asarray(t, dtype=float)
    f1, f2 = get_family(fit1.family), get_family(fit2.family)
    if target is BandTarget.SURVIVAL_DIFFERENCE:
        return f1.sf(t, fit1.theta) - f2.sf(t, fit2.theta)
    return f1.log_hazard(t, fit1.theta) - f2.log_hazard(t, fit2.theta)


def true_target(family1, theta1, family2, theta2, t, target):
    """Target curve evaluated at known parameters."""
    target = BandTarget.parse(target)
    f1, f2 = get_family(family1), get_family(family2)
    if target is BandTarget.SURVIVAL_DIFFERENCE:
        return f1.sf(t, theta1) - f2.sf(t, theta2)
    return f1.log_hazard(t, theta1) - f2.log_hazard(t, theta2)


def _gradient(fam, theta, t, target):
    if target is BandTarget.SURVIVAL_DIFFERENCE:
        return fam.grad_sf(t, theta)
    return fam.grad_log_hazard(t, theta)


def _covariance(info):
    info = np.asarray(info, dtype=float)
    if not np.all(np.isfinite(info)):
        raise NumericalError("observed information contains non-finite entries")
    cond = np.linalg.cond(info)
    if not cond < MAX_CONDITION:
        raise NumericalError(
            f"observed information is singular (condition number {cond:.3g})", condition=cond
        )
    return np.linalg.solve(info, np.eye(info.shape[0]))


def delta_variance(fit1, fit2, t, target):
    """Delta-method variance of the target at ``t``.

    Each group contributes ``g' I^-1 g`` with ``g`` the parameter gradient of
    S(t) (or log h(t)) and ``I`` the total-sample observed information, which
    already contains the 1/n scaling of the per-observation form.
    """
    target = BandTarget.parse(target)
    _check_fit(fit1)
    _check_fit(fit2)
    t = np.asarray(t, dtype=float)
    var = np.zeros(t.shape)
    for fit in (fit1, fit2):
        fam = get_family(fit.family)
        cov = _covariance(fit.observed_info)
        g = _gradient(fam, fit.theta, t, target)
        var = var + np.einsum("...i,ij,...j->...", g, cov, g)
    return var


def _draw_group(fit, n, rng, t_max):
    fam = get_family(fit.family)
    y = fam.sample(n, fit.theta, rng)
    cfit = fit.censor_fit
    if cfit is None:
        raise InputError("parametric bootstrap needs fits with a fitted censoring distribution")
    if cfit.degenerate:
        c = np.full(n, np.inf)
    else:
        c = get_family(cfit.family).sample(n, cfit.theta, rng)
    if t_max is not None:
        c = np.minimum(c, t_max)
    return np.minimum(y, c), (y <= c).astype(np.int8)


def _resample_group(sample, n, rng):
    idx = rng.integers(0, sample.n, size=n)
    return sample.time[idx], sample.event[idx]


def bootstrap_replicates(
    fit1,
    fit2,
    grid,
    target,
    n_boot=500,
    random_state=None,
    *,
    t_max=None,
    samples=None,
    max_draws=None,
):
    """Bootstrap replicates of the target curve, shape ``(n_boot, len(grid))``.

    Replicate ``k`` draws both groups from a generator addressed by
    ``(seed, k, attempt)``, so results do not depend on evaluation order. A
    replicate whose refit fails is redrawn with the next attempt index; at
    most ``max_draws`` (default ``10 * n_boot``) draws are made in total.

    With ``samples=(sample1, sample2)`` the observations are resampled with
    replacement instead (nonparametric bootstrap).
    """
    target = BandTarget.parse(target)
    grid = check_grid(grid)
    thetas = bootstrap_parameters(fit1, fit2, n_boot, random_state, t_max=t_max, samples=samples,
                                  max_draws=max_draws)
    return replicate_curves(fit1.family, fit2.family, thetas, grid, target)


def bootstrap_parameters(fit1, fit2, n_boot=500, random_state=None, *, t_max=None, samples=None,
                         max_draws=None):
    """Refitted parameters of each bootstrap replicate, one ``(n_boot, p)`` array per group."""
    if n_boot < 2:
        raise DomainError("n_boot must be at least 2")
    root = check_seed_sequence(random_state)
    max_draws = 10 * n_boot if max_draws is None else max_draws
    fits = (fit1, fit2)
    sizes = (fit1.n, fit2.n)

    def draw(k, attempt):
        rng = substream(root, k, attempt)
        out = []
        for g in range(2):
            if samples is not None:
                out.append(_resample_group(samples[g], sizes[g], rng))
            else:
                out.append(_draw_group(fits[g], sizes[g], rng, t_max))
        return out

    data = [[np.empty((n_boot, sizes[g])), np.empty((n_boot, sizes[g]), dtype=np.int8)] for g in range(2)]
    attempts = np.zeros(n_boot, dtype=int)
    todo = np.arange(n_boot)
    thetas = [np.empty((n_boot, get_family(f.family).n_params)) for f in fits]
    draws = 0
    while todo.size:
        if draws + todo.size > max_draws:
            raise NumericalError(
                f"bootstrap retry budget exhausted ({draws} draws for {n_boot} replicates)"
            )
        for k in todo:
            for g, (tt, ee) in enumerate(draw(k, attempts[k])):
                data[g][0][k] = tt
                data[g][1][k] = ee
        draws += todo.size
        ok = np.ones(todo.size, dtype=bool)
        for g, fit in enumerate(fits):
            theta, _, _, good = fit_batch(
                fit.family, data[g][0][todo], data[g][1][todo], information=False
            )
            thetas[g][todo] = theta
            ok &= good
        attempts[todo[~ok]] += 1
        todo = todo[~ok]

    return thetas


def replicate_curves(family1, family2, thetas, grid, target):
    """Target curve for each row of batched parameters, shape ``(B, len(grid))``."""
    target = BandTarget.parse(target)
    grid = np.asarray(grid, dtype=float)
    t = np.broadcast_to(grid, (thetas[0].shape[0], grid.size))
    f1, f2 = get_family(family1), get_family(family2)
    if target is BandTarget.SURVIVAL_DIFFERENCE:
        return f1.sf(t, thetas[0]) - f2.sf(t, thetas[1])
    return f1.log_hazard(t, thetas[0]) - f2.log_hazard(t, thetas[1])


def bootstrap_variance(fit1, fit2, t, target, n_boot=500, random_state=None, **kwargs):
    """Sample variance (ddof=1) of the bootstrap replicates at ``t``."""
    scalar = np.ndim(t) == 0
    reps = bootstrap_replicates(fit1, fit2, np.atleast_1d(t), target, n_boot, random_state, **kwargs)
    var = reps.var(axis=0, ddof=1)
    return float(var[0]) if scalar else var


def pointwise_band(
    fit1,
    fit2,
    grid,
    target="survival_difference",
    method="asymptotic",
    alpha=0.05,
    n_boot=500,
    random_state=None,
    **bootstrap_kwargs,
):
    """Confidence band for ``fit1`` minus ``fit2`` on ``grid``.

    ``method`` is ``asymptotic`` (delta method), ``bootstrap`` (parametric,
    needs censoring fits) or ``nonparametric_bootstrap`` (pass the data as
    ``samples=(sample1, sample2)``).
    """
    target = BandTarget.parse(target)
    grid = check_grid(grid)
    alpha = check_alpha(alpha)
    _check_fit(fit1)
    _check_fit(fit2)
    if method == "asymptotic":
        var = delta_variance(fit1, fit2, grid, target)
    elif method in ("bootstrap", "nonparametric_bootstrap"):
        if method == "nonparametric_bootstrap" and "samples" not in bootstrap_kwargs:
            raise InputError("nonparametric bootstrap needs samples=(sample1, sample2)")
        if method == "bootstrap":
            bootstrap_kwargs.pop("samples", None)
        reps = bootstrap_replicates(fit1, fit2, grid, target, n_boot, random_state, **bootstrap_kwargs)
        var = reps.var(axis=0, ddof=1)
    else:
        raise DomainError(f"unknown band method {method!r}")
    return band_from_variance(target_value(fit1, fit2, grid, target), var, grid, target, alpha, method)


def band_from_variance(estimate, var, grid, target, alpha, method):
    z = standard_normal_quantile(1 - alpha)
    sigma = np.sqrt(np.maximum(var, 0.0))
    return ConfidenceBand(
        target=BandTarget.parse(target),
        alpha=alpha,
        grid=np.asarray(grid, dtype=float),
        estimate=np.asarray(estimate, dtype=float),
        lower=estimate - z * sigma,
        upper=estimate + z * sigma,
        sigma=sigma,
        method=method,
    )
