"""Non-inferiority and equivalence tests built from pointwise confidence bounds.

The tested quantity is always ``reference minus test``: D(t) = S_ref - S_test
for survival, r(t) = log(h_ref / h_test) for hazards. Non-inferiority of the
test treatment is claimed when the upper ``1 - alpha`` bound is at most the
margin; equivalence additionally needs the lower bound to be at least minus
the margin (intersection-union test, same bounds for both sides).
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_alpha, check_times
from .bands import BandTarget, ConfidenceBand, pointwise_band
from .exceptions import DomainError

DEFAULT_INTERVAL_POINTS = 102  # 100 interior points plus both endpoints

KINDS = ("noninferiority", "equivalence")


def parse_kind(kind):
    key = str(kind).lower()
    key = {"noninf": "noninferiority", "equiv": "equivalence", "non-inferiority": "noninferiority"}.get(key, key)
    if key not in KINDS:
        raise DomainError(f"unknown test kind {kind!r}")
    return key


@dataclass(frozen=True)
class Margin:
    value: float
    target: BandTarget = BandTarget.SURVIVAL_DIFFERENCE

    def __post_init__(self):
        if not self.value > 0:
            raise DomainError(f"margin must be positive, got {self.value}")
        object.__setattr__(self, "target", BandTarget.parse(self.target))


@dataclass(frozen=True)
class TimeSpec:
    """A single time point (``t2 is None``) or an interval with a grid."""

    t1: float
    t2: float = None
    grid_n: int = DEFAULT_INTERVAL_POINTS

    def __post_init__(self):
        check_times([self.t1] + ([] if self.t2 is None else [self.t2]))
        if self.t2 is not None and self.t2 < self.t1:
            raise DomainError("interval end must not precede its start")

    @property
    def is_point(self):
        return self.t2 is None

    def grid(self):
        if self.is_point or self.t2 == self.t1:
            return np.array([float(self.t1)])
        if self.grid_n < 2:
            raise DomainError("interval grid needs at least 2 points")
        return np.linspace(self.t1, self.t2, self.grid_n)

    def to_dict(self):
        if self.is_point:
            return {"kind": "point", "t0": self.t1}
        return {"kind": "interval", "t1": self.t1, "t2": self.t2, "grid_n": self.grid_n}


@dataclass
class TestDecision:
    kind: str
    target: BandTarget
    margin: Margin
    time: TimeSpec
    alpha: float
    reject: bool
    critical_bounds: dict
    direction: str
    method: str = "asymptotic"
    band: ConfidenceBand = field(default=None, repr=False)

    __test__ = False  # not a pytest class

    def to_dict(self):
        return {
            "kind": self.kind,
            "target": self.target.value,
            "margin": self.margin.value,
            "time": self.time.to_dict(),
            "alpha": self.alpha,
            "method": self.method,
            "reject": self.reject,
            "critical_bounds": self.critical_bounds,
            "direction": self.direction,
        }


def decide(kind, band, margin):
    """Apply the decision rule to a band; returns ``(reject, critical_bounds)``.

    Over several grid points the extremal bounds decide: the largest upper
    bound must be <= margin and, for equivalence, the smallest lower bound
    must be >= -margin.
    """
    kind = parse_kind(kind)
    delta = margin.value if isinstance(margin, Margin) else float(margin)
    iu = int(np.argmax(band.upper))
    il = int(np.argmin(band.lower))
    bounds = {
        "max_upper": float(band.upper[iu]),
        "t_max_upper": float(band.grid[iu]),
        "min_lower": float(band.lower[il]),
        "t_min_lower": float(band.grid[il]),
    }
    if band.grid.size == 1:
        bounds.update(estimate=float(band.estimate[0]), sigma=float(band.sigma[0]))
    reject = bounds["max_upper"] <= delta
    if kind == "equivalence":
        reject = reject and bounds["min_lower"] >= -delta
    return bool(reject), bounds


def _direction(fit_ref, fit_test):
    return f"{fit_ref.label or 'reference'} minus {fit_test.label or 'test'}"


def run_test(kind, fit_ref, fit_test, time, margin, alpha, method, n_boot, random_state, **kwargs):
    """Band plus decision for a :class:`TimeSpec` (point or interval)."""
    if not isinstance(margin, Margin):
        margin = Margin(float(margin))
    alpha = check_alpha(alpha)
    band = pointwise_band(
        fit_ref, fit_test, time.grid(), margin.target, method, alpha, n_boot, random_state, **kwargs
    )
    reject, bounds = decide(kind, band, margin)
    return TestDecision(
        kind=parse_kind(kind),
        target=margin.target,
        margin=margin,
        time=time,
        alpha=alpha,
        reject=reject,
        critical_bounds=bounds,
        direction=_direction(fit_ref, fit_test),
        method=method,
        band=band,
    )


def noninferiority_test(
    fit_ref, fit_test, t0, margin, alpha=0.05, method="asymptotic", n_boot=500, random_state=None, **kwargs
):
    """Reject "test is worse by at least the margin" at ``t0`` iff U(t0) <= margin."""
    return run_test("noninferiority", fit_ref, fit_test, TimeSpec(t0), margin, alpha, method, n_boot,
                random_state, **kwargs)


def equivalence_test(
    fit_ref, fit_test, t0, margin, alpha=0.05, method="asymptotic", n_boot=500, random_state=None, **kwargs
):
    """Reject non-equivalence at ``t0`` iff U(t0) <= margin and L(t0) >= -margin."""
    return run_test("equivalence", fit_ref, fit_test, TimeSpec(t0), margin, alpha, method, n_boot,
                random_state, **kwargs)


def interval_test(
    fit_ref,
    fit_test,
    t1,
    t2,
    margin,
    alpha=0.05,
    kind="equivalence",
    method="asymptotic",
    n_boot=500,
    random_state=None,
    grid_n=DEFAULT_INTERVAL_POINTS,
    **kwargs,
):
    """Test over ``[t1, t2]``: every bound on the grid must lie in the region."""
    return run_test(kind, fit_ref, fit_test, TimeSpec(t1, t2, grid_n), margin, alpha, method, n_boot,
                random_state, **kwargs)


def noninferiority_onset(band, margin):
    """Earliest grid time from which U(t) <= margin holds up to the grid end.

    Returns ``None`` if the last grid point does not satisfy the bound.
    """
    delta = margin.value if isinstance(margin, Margin) else float(margin)
    ok = band.upper <= delta
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    start = 0 if bad.size == 0 else bad[-1] + 1
    return float(band.grid[start])

