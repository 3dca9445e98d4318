"""Input validation helpers shared by the estimators and functions."""

import numbers

import numpy as np

from .exceptions import DomainError, InputError


def check_times(t, name="t", allow_zero=False):
    """Return ``t`` as a float array, raising if any entry is not positive."""
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if allow_zero:
        if np.any(arr < 0):
            raise DomainError(f"{name} must be nonnegative")
    elif np.any(arr <= 0):
        raise DomainError(f"{name} must be strictly positive")
    return arr


def check_probability(p, name="p"):
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0) | ~(arr < 1)):
        raise DomainError(f"{name} must lie in the open interval (0, 1)")
    return arr


def check_alpha(alpha):
    if not isinstance(alpha, numbers.Real) or not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def check_survival_arrays(time, event):
    """Validate right-censored data and return ``(time, event)`` arrays.

    ``time`` must be strictly positive and finite; ``event`` must contain only
    0 (censored) and 1 (event) and have the same length as ``time``.
    """
    time = np.asarray(time, dtype=float).ravel()
    event = np.asarray(event).ravel()
    if time.shape != event.shape:
        raise InputError(
            f"time and event have different lengths ({time.size} != {event.size})"
        )
    if time.size == 0:
        raise InputError("empty sample")
    if not np.all(np.isfinite(time)) or np.any(time <= 0):
        bad = np.flatnonzero(~np.isfinite(time) | (time <= 0))
        raise InputError(f"times must be positive and finite (bad rows: {bad[:10].tolist()})")
    if not np.all(np.isin(event, (0, 1))):
        raise InputError("event indicators must be 0 (censored) or 1 (event)")
    return time, event.astype(np.int8)


def check_grid(grid):
    """Validate an evaluation grid: nonempty, positive, nondecreasing."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a nonempty one-dimensional sequence")
    if np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise DomainError("grid times must be positive and finite")
    if np.any(np.diff(grid) < 0):
        raise DomainError("grid must be ascending")
    return grid


def check_seed_sequence(random_state):
    """Turn ``random_state`` into a :class:`numpy.random.SeedSequence`.

    Accepts ``None``, an integer seed, a ``SeedSequence`` or a ``Generator``.
    A generator is consumed once to derive the root entropy, so passing the
    same seeded generator state always yields the same substreams.
    """
    if isinstance(random_state, np.random.SeedSequence):
        return random_state
    if random_state is None or isinstance(random_state, numbers.Integral):
        return np.random.SeedSequence(random_state)
    if isinstance(random_state, np.random.Generator):
        return np.random.SeedSequence(int(random_state.integers(2**63)))
    raise TypeError(f"cannot build a seed sequence from {type(random_state).__name__}")


def substream(root, *key):
    """Generator addressed by ``key`` below ``root``; independent of call order."""
    ss = np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + tuple(key))
    return np.random.default_rng(ss)
