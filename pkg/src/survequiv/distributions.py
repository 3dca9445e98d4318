"""Parametric event-time families.

Every family with two parameters uses the order ``(shape, scale)``; the
exponential family has the single parameter ``rate``.

=============  ==============================  ==========================
tag            parameters                      survival S(t)
=============  ==============================  ==========================
weibull        (shape k, scale lam)            exp(-(t/lam)**k)
exponential    (rate psi,)                     exp(-psi*t)
log_logistic   (shape b, scale a)              1 / (1 + (t/a)**b)
log_normal     (shape s, scale m)              1 - Phi((log t - log m)/s)
=============  ==============================  ==========================

The log-logistic and log-normal scale parameters equal the median.

Parameters may be given as a vector of length ``n_params`` or, for batched
evaluation, as an array of shape ``(B, n_params)`` together with times of
shape ``(B, n)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from ._validation import check_probability, check_times
from .exceptions import DomainError, NumericalError

_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def _split(theta):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim <= 1:
        return tuple(theta.reshape(-1))
    return tuple(theta[..., i, None] for i in range(theta.shape[-1]))


class Family:
    """Base class of the parametric families.

    Subclasses implement ``logpdf``, ``logsf``, ``ppf`` and ``log_hazard``;
    everything else is derived. ``grad_sf`` and ``grad_log_hazard`` fall back
    to central differences with relative step ``fd_step * |theta_i|`` when no
    analytic derivative is coded.
    """

    tag = None
    n_params = None
    param_names = ()
    fd_step = 1e-5

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return isinstance(other, Family) and other.tag == self.tag

    def __hash__(self):
        return hash(self.tag)

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1:] != (self.n_params,):
            raise DomainError(
                f"{self.tag} expects {self.n_params} parameter(s) {self.param_names}, "
                f"got shape {theta.shape}"
            )
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise DomainError(f"{self.tag} parameters must be strictly positive, got {theta}")
        return theta

    # derived curves
    def sf(self, t, theta):
        return np.exp(self.logsf(t, theta))

    def cdf(self, t, theta):
        return -np.expm1(self.logsf(t, theta))

    def pdf(self, t, theta):
        return np.exp(self.logpdf(t, theta))

    def hazard(self, t, theta):
        return np.exp(self.log_hazard(t, theta))

    def cumhazard(self, t, theta):
        return -self.logsf(t, theta)

    def grad_sf(self, t, theta):
        return _central_difference(self.sf, t, theta, self.fd_step)

    def grad_log_hazard(self, t, theta):
        return _central_difference(self.log_hazard, t, theta, self.fd_step)

    def start(self, time, event):
        """Crude starting value inside the parameter domain."""
        med = float(np.median(time))
        return np.array([1.0, med])

    def sample(self, n, theta, rng):
        u = rng.random(n)
        # random() may return exactly 0, where some quantiles are 0 or -inf
        return self.ppf(np.clip(u, 1e-300, 1 - 1e-16), theta)


def _central_difference(fun, t, theta, rel_step):
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    p = theta.shape[-1]
    out = np.empty(t.shape + (p,))
    for i in range(p):
        h = rel_step * np.abs(theta[..., i])
        up, dn = theta.copy(), theta.copy()
        up[..., i] += h
        dn[..., i] -= h
        if theta.ndim > 1:
            h = h[:, None]
        out[..., i] = (fun(t, up) - fun(t, dn)) / (2 * h)
    return out


class Weibull(Family):
    tag = "weibull"
    n_params = 2
    param_names = ("shape", "scale")

    def logsf(self, t, theta):
        k, lam = _split(theta)
        return -((t / lam) ** k)

    def logpdf(self, t, theta):
        k, lam = _split(theta)
        x = t / lam
        return np.log(k) - np.log(lam) + (k - 1) * np.log(x) - x**k

    def log_hazard(self, t, theta):
        k, lam = _split(theta)
        return np.log(k) - np.log(lam) + (k - 1) * np.log(t / lam)

    def ppf(self, p, theta):
        k, lam = _split(theta)
        return lam * (-np.log1p(-p)) ** (1 / k)

    def grad_sf(self, t, theta):
        k, lam = _split(theta)
        t = np.asarray(t, dtype=float)
        x = t / lam
        z = x**k
        s = np.exp(-z)
        return np.stack([-s * z * np.log(x), s * z * k / lam], axis=-1)

    def grad_log_hazard(self, t, theta):
        k, lam = _split(theta)
        dk = 1 / k + np.log(np.asarray(t, dtype=float) / lam)
        return np.stack([dk, np.broadcast_to(-k / lam, dk.shape)], axis=-1)

    def start(self, time, event):
        # median of a shape-1 Weibull is scale * ln 2
        return np.array([1.0, float(np.median(time)) / np.log(2)])


class Exponential(Family):
    tag = "exponential"
    n_params = 1
    param_names = ("rate",)

    def logsf(self, t, theta):
        (rate,) = _split(theta)
        return -rate * np.asarray(t, dtype=float)

    def logpdf(self, t, theta):
        (rate,) = _split(theta)
        return np.log(rate) - rate * t

    def log_hazard(self, t, theta):
        (rate,) = _split(theta)
        return np.log(rate) + np.zeros_like(np.asarray(t, dtype=float))

    def ppf(self, p, theta):
        (rate,) = _split(theta)
        return -np.log1p(-p) / rate

    def grad_sf(self, t, theta):
        (rate,) = _split(theta)
        t = np.asarray(t, dtype=float)
        return (-t * np.exp(-rate * t))[..., None]

    def grad_log_hazard(self, t, theta):
        (rate,) = _split(theta)
        return (np.zeros_like(np.asarray(t, dtype=float)) + 1 / rate)[..., None]

    def start(self, time, event):
        return np.array([np.log(2) / float(np.median(time))])


class LogLogistic(Family):
    tag = "log_logistic"
    n_params = 2
    param_names = ("shape", "scale")

    def logsf(self, t, theta):
        b, a = _split(theta)
        return -np.log1p((t / a) ** b)

    def logpdf(self, t, theta):
        b, a = _split(theta)
        x = t / a
        return np.log(b) - np.log(a) + (b - 1) * np.log(x) - 2 * np.log1p(x**b)

    def log_hazard(self, t, theta):
        b, a = _split(theta)
        x = t / a
        return np.log(b) - np.log(a) + (b - 1) * np.log(x) - np.log1p(x**b)

    def ppf(self, p, theta):
        b, a = _split(theta)
        return a * (p / (1 - p)) ** (1 / b)

    def grad_sf(self, t, theta):
        b, a = _split(theta)
        t = np.asarray(t, dtype=float)
        x = t / a
        z = x**b
        w = z / (1 + z) ** 2
        return np.stack([-w * np.log(x), w * b / a], axis=-1)

    def grad_log_hazard(self, t, theta):
        b, a = _split(theta)
        t = np.asarray(t, dtype=float)
        x = t / a
        inv = 1 / (1 + x**b)
        return np.stack([1 / b + np.log(x) * inv, -b / a * inv], axis=-1)


class LogNormal(Family):
    tag = "log_normal"
    n_params = 2
    param_names = ("shape", "scale")

    def logsf(self, t, theta):
        s, m = _split(theta)
        return special.log_ndtr(-(np.log(t) - np.log(m)) / s)

    def logpdf(self, t, theta):
        s, m = _split(theta)
        logt = np.log(t)
        w = (logt - np.log(m)) / s
        return -logt - np.log(s) - _LOG_SQRT_2PI - 0.5 * w**2

    def log_hazard(self, t, theta):
        return self.logpdf(t, theta) - self.logsf(t, theta)

    def ppf(self, p, theta):
        s, m = _split(theta)
        return m * np.exp(s * special.ndtri(p))

    def grad_sf(self, t, theta):
        s, m = _split(theta)
        t = np.asarray(t, dtype=float)
        w = (np.log(t) - np.log(m)) / s
        phi = np.exp(-0.5 * w**2 - _LOG_SQRT_2PI)
        return np.stack([phi * w / s, phi / (s * m)], axis=-1)

    def start(self, time, event):
        return np.array([1.0, float(np.median(time))])


FAMILIES = {cls.tag: cls() for cls in (Weibull, Exponential, LogLogistic, LogNormal)}
_ALIASES = {"exp": "exponential", "loglogistic": "log_logistic", "lognormal": "log_normal",
            "log-logistic": "log_logistic", "log-normal": "log_normal"}


def get_family(family):
    """Look up a family by tag (or return ``family`` if already a Family)."""
    if isinstance(family, Family):
        return family
    key = str(family).lower()
    key = _ALIASES.get(key, key)
    try:
        return FAMILIES[key]
    except KeyError:
        raise DomainError(
            f"unknown family {family!r}; choose from {sorted(FAMILIES)}"
        ) from None


@dataclass(frozen=True)
class CurveValues:
    pdf: np.ndarray
    cdf: np.ndarray
    sf: np.ndarray
    hazard: np.ndarray
    cumhazard: np.ndarray


def evaluate(family, theta, t):
    """All five curves of ``family`` at times ``t`` (which must be > 0)."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    t = check_times(t)
    logsf = fam.logsf(t, theta)
    logpdf = fam.logpdf(t, theta)
    return CurveValues(
        pdf=np.exp(logpdf),
        cdf=-np.expm1(logsf),
        sf=np.exp(logsf),
        hazard=np.exp(fam.log_hazard(t, theta)),
        cumhazard=-logsf,
    )


def quantile(family, theta, p):
    """Inverse of the cdf: the time ``q`` with ``F(q) = p``."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    return fam.ppf(check_probability(p), theta)


def sample(family, theta, n, rng):
    """Draw ``n`` i.i.d. event times by inverse-cdf transform."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    if n < 1:
        raise DomainError("n must be at least 1")
    return fam.sample(int(n), theta, rng)


def grad_survival(family, theta, t):
    """Gradient of S(t) with respect to the parameters, shape ``t.shape + (p,)``."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    return fam.grad_sf(check_times(t), theta)


def grad_log_hazard(family, theta, t):
    """Gradient of log h(t) with respect to the parameters."""
    fam = get_family(family)
    theta = fam.check_theta(theta)
    t = check_times(t)
    if not np.all(fam.hazard(t, theta) > 0):
        raise NumericalError(f"hazard of {fam.tag} vanishes at t; log hazard undefined")
    return fam.grad_log_hazard(t, theta)
