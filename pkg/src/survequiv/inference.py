"""Maximum likelihood for right-censored parametric survival models.

The event log-likelihood of one group is

    sum_j  delta_j * log f(t_j) + (1 - delta_j) * log S(t_j)

and the censoring log-likelihood swaps the roles of events and censorings.
When event and censoring parameters are disjoint the joint likelihood
factorises, so both parts are maximised separately.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator

from ._validation import check_survival_arrays, check_times
from .distributions import FAMILIES, get_family
from .exceptions import InputError

INFO_STEP = 1e-4


@dataclass(frozen=True)
class SurvivalSample:
    """Right-censored observations of one group (status 1 = event)."""

    time: np.ndarray
    event: np.ndarray
    label: str = ""

    def __post_init__(self):
        time, event = check_survival_arrays(self.time, self.event)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "event", event)

    @property
    def n(self):
        return self.time.size

    @property
    def n_events(self):
        return int(self.event.sum())

    @property
    def n_censored(self):
        return self.n - self.n_events

    def flipped(self):
        """Same times with statuses inverted (censorings become 'events')."""
        return SurvivalSample(self.time, 1 - self.event, self.label)


@dataclass
class FitResult:
    """Outcome of a maximum likelihood fit.

    ``observed_info`` is the total-sample observed information (negative
    Hessian of the log-likelihood in the natural parametrisation), so the
    estimated covariance of ``theta`` is its inverse without further scaling.
    """

    family: str
    theta: np.ndarray
    loglik: float
    observed_info: np.ndarray
    n: int
    n_events: int
    converged: bool
    censor_fit: "FitResult | None" = None
    degenerate: bool = False
    label: str = ""
    aic: float = field(init=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.observed_info = np.asarray(self.observed_info, dtype=float)
        self.aic = aic(self.loglik, get_family(self.family).n_params)

    @property
    def n_params(self):
        return get_family(self.family).n_params

    @property
    def covariance(self):
        return np.linalg.inv(self.observed_info)

    def survival(self, t):
        fam = get_family(self.family)
        return fam.sf(check_times(t), self.theta)

    def hazard(self, t):
        fam = get_family(self.family)
        return fam.hazard(check_times(t), self.theta)

    def log_hazard(self, t):
        fam = get_family(self.family)
        return fam.log_hazard(check_times(t), self.theta)

    def to_dict(self):
        fam = get_family(self.family)
        out = {
            "family": self.family,
            "label": self.label,
            "param_names": list(fam.param_names),
            "theta": self.theta.tolist(),
            "loglik": self.loglik,
            "aic": self.aic,
            "observed_info": self.observed_info.tolist(),
            "n": self.n,
            "n_events": self.n_events,
            "converged": self.converged,
            "degenerate": self.degenerate,
        }
        if self.censor_fit is not None:
            out["censor_fit"] = self.censor_fit.to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        censor = data.get("censor_fit")
        return cls(
            family=data["family"],
            theta=np.array(data["theta"], dtype=float),
            loglik=float(data["loglik"]),
            observed_info=np.array(data["observed_info"], dtype=float),
            n=int(data["n"]),
            n_events=int(data["n_events"]),
            converged=bool(data["converged"]),
            censor_fit=cls.from_dict(censor) if censor is not None else None,
            degenerate=bool(data.get("degenerate", False)),
            label=data.get("label", ""),
        )


def aic(loglik, n_params):
    return 2.0 * n_params - 2.0 * loglik


def _loglik_terms(fam, theta, time, event):
    logpdf = fam.logpdf(time, theta)
    logsf = fam.logsf(time, theta)
    return np.where(event == 1, logpdf, logsf)


def _loglik(fam, theta, time, event):
    return _loglik_terms(fam, theta, time, event).sum(axis=-1)


def log_likelihood(sample, family, theta):
    """Censored event log-likelihood; ``-inf`` if an event has zero density."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    with np.errstate(divide="ignore"):
        return float(_loglik(fam, theta, sample.time, sample.event))


def censoring_log_likelihood(sample, family, psi):
    """Log-likelihood of the censoring distribution (statuses flipped)."""
    return log_likelihood(sample.flipped(), family, psi)


def numeric_hessian(fun, theta, rel_step=INFO_STEP):
    """Central-difference Hessian of ``fun`` at ``theta``.

    ``theta`` may be a vector or a batch of shape ``(B, p)``; ``fun`` must map
    an array of the same shape to ``()`` or ``(B,)``. The step for component
    ``i`` is ``rel_step * |theta_i|``.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[-1]
    h = rel_step * np.abs(theta)
    f0 = fun(theta)
    hess = np.empty(theta.shape[:-1] + (p, p))

    def at(*moves):
        x = theta.copy()
        for i, sign in moves:
            x[..., i] += sign * h[..., i]
        return fun(x)

    for i in range(p):
        hess[..., i, i] = (at((i, 1)) - 2 * f0 + at((i, -1))) / h[..., i] ** 2
        for j in range(i + 1, p):
            val = (
                at((i, 1), (j, 1)) - at((i, 1), (j, -1)) - at((i, -1), (j, 1)) + at((i, -1), (j, -1))
            ) / (4 * h[..., i] * h[..., j])
            hess[..., i, j] = val
            hess[..., j, i] = val
    return hess


def observed_information(sample, family, theta, rel_step=INFO_STEP):
    """Negative numeric Hessian of the event log-likelihood at ``theta``."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    return -numeric_hessian(lambda th: _loglik(fam, th, sample.time, sample.event), theta, rel_step)


def _log_space_derivatives(fun, x, h=1e-5):
    p = x.size
    grad = np.empty(p)
    for i in range(p):
        e = np.zeros(p)
        e[i] = h
        grad[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return grad, _abs_hessian(fun, x, h=1e-4)


def _abs_hessian(fun, x, h):
    p = x.size
    f0 = fun(x)
    hess = np.empty((p, p))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h
        hess[i, i] = (fun(x + ei) - 2 * f0 + fun(x - ei)) / h**2
        for j in range(i + 1, p):
            ej = np.zeros(p)
            ej[j] = h
            v = (fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)) / (4 * h * h)
            hess[i, j] = hess[j, i] = v
    return hess


def fit_mle(sample, family, *, censoring_family=None, start=None, max_iter=2000, tol=1e-4):
    """Maximum likelihood fit of ``family`` to a censored sample.

    The log-likelihood is maximised over log-transformed parameters by a
    Nelder-Mead simplex search followed by a few safeguarded Newton steps.
    ``converged`` is set only if the simplex terminated normally and the
    gradient norm in log-parameter space is below ``tol``.

    If ``censoring_family`` is given, the censoring distribution is fitted as
    well and attached as ``censor_fit``. A sample without censorings gets a
    degenerate censoring fit instead of an error.
    """
    fam = get_family(family)
    if sample.n_events == 0:
        raise InputError("cannot fit an event distribution to an all-censored sample")
    if sample.n < fam.n_params:
        raise InputError(f"need at least {fam.n_params} observations to fit {fam.tag}")
    time, event = sample.time, sample.event
    x0 = np.log(fam.start(time, event) if start is None else fam.check_theta(start))

    def loglik_x(x):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            val = _loglik(fam, np.exp(x), time, event)
        return val if np.isfinite(val) else -np.inf

    res = optimize.minimize(
        lambda x: -loglik_x(x) if np.isfinite(loglik_x(x)) else 1e300,
        x0,
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": max_iter, "maxfev": 4 * max_iter},
    )
    x = res.x
    f = loglik_x(x)
    grad = None
    for _ in range(8):
        grad, hess = _log_space_derivatives(loglik_x, x)
        if np.linalg.norm(grad) < 1e-10:
            break
        try:
            if np.any(np.linalg.eigvalsh(hess) >= 0):
                break
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        xn = x + step
        fn = loglik_x(xn)
        # accept steps that do not lose more than roundoff
        if not fn >= f - 1e-9 * max(1.0, abs(f)):
            break
        x, f = xn, fn
    grad, _ = _log_space_derivatives(loglik_x, x)
    theta = np.exp(x)
    info = observed_information(sample, fam, theta)
    converged = bool(res.success or res.status == 0) and np.isfinite(f) and np.linalg.norm(grad) < tol
    result = FitResult(
        family=fam.tag,
        theta=theta,
        loglik=float(f),
        observed_info=info,
        n=sample.n,
        n_events=sample.n_events,
        converged=bool(converged),
        label=sample.label,
    )
    if censoring_family is not None:
        result.censor_fit = fit_censoring(sample, censoring_family, allow_degenerate=True)
    return result


def fit_censoring(sample, family="exponential", *, allow_degenerate=False):
    """Fit the censoring distribution by maximising the flipped likelihood.

    Without any censored record the MLE of an exponential censoring rate is 0,
    outside the parameter domain. That raises :class:`InputError` unless
    ``allow_degenerate`` is set, in which case a result flagged
    ``degenerate=True`` (rate 0, i.e. no random censoring) is returned.
    """
    fam = get_family(family)
    if sample.n_censored == 0:
        if not allow_degenerate:
            raise InputError("no censored records; censoring distribution is not estimable")
        theta = np.zeros(fam.n_params) if fam.tag == "exponential" else np.full(fam.n_params, np.nan)
        return FitResult(
            family=fam.tag,
            theta=theta,
            loglik=0.0,
            observed_info=np.full((fam.n_params, fam.n_params), np.nan),
            n=sample.n,
            n_events=0,
            converged=False,
            degenerate=True,
            label=sample.label,
        )
    return fit_mle(sample.flipped(), fam)


def select_model(sample, families=None):
    """Fit every family and rank the fits by AIC.

    Ties are broken by fewer parameters, then by the order of the families in
    the registry. Fits that did not converge are ranked last.
    """
    if families is None:
        families = list(FAMILIES)
    order = {tag: i for i, tag in enumerate(FAMILIES)}
    fits = [fit_mle(sample, get_family(f)) for f in families]
    return sorted(
        fits,
        key=lambda r: (not r.converged, r.aic, r.n_params, order.get(r.family, len(order))),
    )


# batched fitting used by the bootstrap and the simulation harness


def _weibull_profile_batch(time, event, max_iter=200, tol=1e-12):
    """Weibull MLEs for each row of ``time`` via the profile score in log shape.

    For fixed shape k the scale maximiser is ``(sum t**k / d)**(1/k)``; the
    profile score in k is strictly decreasing, so a bracketed Newton iteration
    on ``log k`` finds the unique root.
    """
    d = event.sum(axis=1).astype(float)
    ok = d > 0
    d_safe = np.where(ok, d, 1.0)
    t_ref = time.max(axis=1, keepdims=True)
    logu = np.log(time / t_ref)
    sum_dlogu = (event * logu).sum(axis=1)
    lo_bound, hi_bound = np.log(1e-3), np.log(1e3)
    lo = np.full(d.shape, lo_bound)
    hi = np.full(d.shape, hi_bound)
    x = np.zeros(d.shape)
    active = ok.copy()
    for _ in range(max_iter):
        k = np.exp(x)
        w = np.exp(k[:, None] * logu)
        a0 = w.sum(axis=1)
        m1 = (w * logu).sum(axis=1) / a0
        var = np.maximum((w * logu**2).sum(axis=1) / a0 - m1**2, 0.0)
        g = d_safe / k + sum_dlogu - d_safe * m1
        dg = -d_safe / k - d_safe * k * var
        lo = np.where(g > 0, x, lo)
        hi = np.where(g < 0, x, hi)
        xn = x - g / dg
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        step = np.abs(xn - x)
        x = np.where(active, xn, x)
        active &= step > tol
        if not active.any():
            break
    k = np.exp(x)
    a0 = np.exp(k[:, None] * logu).sum(axis=1)
    lam = t_ref[:, 0] * (a0 / d_safe) ** (1 / k)
    inside = (x > lo_bound + 1e-6) & (x < hi_bound - 1e-6)
    return np.column_stack([k, lam]), ok & inside & ~active


def fit_batch(family, time, event, *, information=True):
    """Fit ``family`` independently to every row of ``time``/``event``.

    Returns ``(theta, loglik, info, ok)`` with shapes ``(B, p)``, ``(B,)``,
    ``(B, p, p)`` and ``(B,)``. Weibull and exponential fits are vectorised;
    other families loop over :func:`fit_mle`. Rows flagged ``ok=False``
    (no events, or no interior optimum) must not be used.
    """
    fam = get_family(family)
    time = np.atleast_2d(np.asarray(time, dtype=float))
    event = np.atleast_2d(np.asarray(event)).astype(np.int8)
    if fam.tag == "weibull":
        theta, ok = _weibull_profile_batch(time, event)
    elif fam.tag == "exponential":
        d = event.sum(axis=1)
        ok = d > 0
        theta = (np.where(ok, d, 1) / time.sum(axis=1))[:, None]
    else:
        rows = []
        ok = np.zeros(time.shape[0], dtype=bool)
        for b in range(time.shape[0]):
            try:
                r = fit_mle(SurvivalSample(time[b], event[b]), fam, tol=1e-4)
            except InputError:
                rows.append(fam.start(time[b], event[b]))
                continue
            rows.append(r.theta)
            ok[b] = r.converged
        theta = np.array(rows)
    with np.errstate(all="ignore"):
        loglik = _loglik(fam, theta, time, event)
    info = None
    if information:
        with np.errstate(all="ignore"):
            info = -numeric_hessian(lambda th: _loglik(fam, th, time, event), theta)
    return theta, loglik, info, ok


def fit_results_from_batch(family, time, event, label=""):
    """:class:`FitResult` objects for each row, computed with :func:`fit_batch`."""
    fam = get_family(family)
    theta, loglik, info, ok = fit_batch(fam, time, event)
    event = np.atleast_2d(event)
    return [
        FitResult(
            family=fam.tag,
            theta=theta[b],
            loglik=float(loglik[b]),
            observed_info=info[b],
            n=event.shape[1],
            n_events=int(event[b].sum()),
            converged=bool(ok[b]),
            label=label,
        )
        for b in range(theta.shape[0])
    ]


class ParametricSurvival(BaseEstimator):
    """Scikit-learn style wrapper around :func:`fit_mle`.

    Parameters
    ----------
    family : str
        One of ``weibull``, ``exponential``, ``log_logistic``, ``log_normal``.
    censoring_family : str, optional
        If set, the censoring distribution is fitted as well (needed for the
        parametric bootstrap).
    max_iter : int
        Iteration budget of the simplex search.
    tol : float
        Gradient-norm tolerance (log-parameter space) for ``converged_``.

    Attributes
    ----------
    result_ : FitResult
    theta_, loglik_, aic_, observed_info_, converged_
    """

    def __init__(self, family="weibull", censoring_family=None, max_iter=2000, tol=1e-4):
        self.family = family
        self.censoring_family = censoring_family
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, time, event, label=""):
        sample = SurvivalSample(time, event, label)
        self.result_ = fit_mle(
            sample,
            self.family,
            censoring_family=self.censoring_family,
            max_iter=self.max_iter,
            tol=self.tol,
        )
        res = self.result_
        self.theta_ = res.theta
        self.loglik_ = res.loglik
        self.aic_ = res.aic
        self.observed_info_ = res.observed_info
        self.converged_ = res.converged
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit first")

    def predict(self, t):
        """Survival probability S(t)."""
        self._check_fitted()
        return self.result_.survival(t)

    predict_survival = predict

    def predict_hazard(self, t):
        self._check_fitted()
        return self.result_.hazard(t)

    def score(self, time, event):
        """Mean log-likelihood per observation of held-out data."""
        self._check_fitted()
        sample = SurvivalSample(time, event)
        return log_likelihood(sample, self.family, self.theta_) / sample.n


__all__ = [
    "SurvivalSample",
    "FitResult",
    "aic",
    "log_likelihood",
    "censoring_log_likelihood",
    "observed_information",
    "numeric_hessian",
    "fit_mle",
    "fit_censoring",
    "select_model",
    "fit_batch",
    "fit_results_from_batch",
    "ParametricSurvival",
]
