"""First-crossing search for monotone functions and compensated sums."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

__all__ = ["ConvergenceError", "first_crossing", "ksum", "T_MAX"]

T_MAX = 1e6


class ConvergenceError(RuntimeError):
    """A crossing could not be bracketed or resolved to tolerance."""


def ksum(values) -> float:
    """Compensated sum of an array (exactly rounded, via ``math.fsum``)."""
    return math.fsum(np.asarray(values, dtype=float).ravel())


def first_crossing(
    f: Callable[[float], float],
    t0: float = 0.0,
    *,
    t_max: float = T_MAX,
    rtol: float = 1e-12,
    max_iter: int = 200,
) -> tuple[float, bool]:
    """Return ``(inf{t >= t0 : f(t) <= 0}, stopped_at_t0)`` for nonincreasing ``f``.

    The bracket grows by doubling from ``t0`` (from 1 when ``t0 = 0``) up to
    ``t_max``; bisection then shrinks it until its width is below
    ``rtol * hi``. The right end is returned, so ``f(t) <= 0`` holds at the
    returned point.
    """
    t0 = float(t0)
    if f(t0) <= 0:
        return t0, True
    lo = t0
    hi = 2.0 * t0 if t0 > 0 else 1.0
    while f(hi) > 0:
        if hi >= t_max:
            raise ConvergenceError(f"no crossing found in [{t0:g}, {t_max:g}]")
        lo, hi = hi, min(2.0 * hi, t_max)
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            return hi, False
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return hi, False
        if f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    raise ConvergenceError(f"bisection did not reach rtol={rtol:g} within {max_iter} iterations")
