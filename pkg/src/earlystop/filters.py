"""Spectral regularisation filters ``g(t, lambda)``.

Time ``t`` is the regularisation parameter (larger means less smoothing).
For iterative methods the iteration count is ``m = t**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SpectralSequence

__all__ = [
    "Regulariser",
    "KINDS",
    "make_regulariser",
    "g",
    "log_one_minus_g",
    "filter_vector",
    "landweber_discrete_index",
    "EnvelopeReport",
    "check_R3_envelope",
]

KINDS = ("landweber", "tikhonov", "iterated_tikhonov", "showalter")


@dataclass(frozen=True)
class Regulariser:
    """A filter family with its envelope constants.

    ``rho``, ``beta_minus`` and ``beta_plus`` are the two-sided envelope
    ``beta_- min((t lam)^rho, 1) <= g <= min(beta_+ (t lam)^rho, 1)``;
    ``qualification`` is the exponent ``q`` in ``1 - g <= C (t lam)^(-2q)``.
    They are derived from ``kind`` (and ``alpha``) and cannot be set by hand.
    """

    kind: str
    alpha: float = 1.0
    rho: float = field(init=False)
    beta_minus: float = field(init=False)
    beta_plus: float = field(init=False)
    qualification: float = field(init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown filter {self.kind!r}; expected one of {KINDS}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        if self.kind == "iterated_tikhonov":
            bm, bp, q = 0.5 * self.alpha**-2, self.alpha**-2, math.inf
        elif self.kind == "tikhonov":
            bm, bp, q = 0.5, 1.0, 1.0
        else:
            bm, bp, q = 0.5, 1.0, math.inf
        object.__setattr__(self, "rho", 2.0)
        object.__setattr__(self, "beta_minus", bm)
        object.__setattr__(self, "beta_plus", bp)
        object.__setattr__(self, "qualification", q)

    @property
    def name(self) -> str:
        if self.kind == "iterated_tikhonov":
            return f"iterated_tikhonov(alpha={self.alpha:g})"
        return self.kind


def make_regulariser(kind: str, alpha: float = 1.0) -> Regulariser:
    return Regulariser(kind, alpha)


def _check_lambda(lam: np.ndarray) -> None:
    if np.any(~(lam > 0)) or np.any(lam > 1):
        raise ValueError("lambda must lie in (0, 1]")


def _check_t(t: float) -> float:
    t = float(t)
    if not t >= 0:
        raise ValueError(f"t must be nonnegative, got {t!r}")
    return t


def log_one_minus_g(reg: Regulariser, t: float, lam) -> np.ndarray:
    """``log(1 - g(t, lam))``, ``-inf`` where the filter equals 1 exactly."""
    t = _check_t(t)
    lam = np.asarray(lam, dtype=float)
    _check_lambda(lam)
    t2 = t * t
    with np.errstate(divide="ignore", invalid="ignore"):
        if reg.kind == "landweber":
            if t <= 1.0:
                out = np.log1p(-t2 * lam * lam)
            else:
                out = t2 * np.log1p(-lam * lam)
        elif reg.kind == "tikhonov":
            out = -np.log1p(t2 * lam * lam)
        elif reg.kind == "iterated_tikhonov":
            out = -t2 * np.log1p(lam * lam / reg.alpha**2)
        else:
            out = -t2 * lam * lam
    if t == 0.0:
        out = np.zeros_like(lam)
    return out


def g(reg: Regulariser, t: float, lam):
    """Evaluate the filter; vectorised over ``lam``.

    Landweber uses ``(t lam)^2`` on ``[0, 1]`` and ``1 - (1 - lam^2)^(t^2)``
    beyond, both of which equal ``lam^2`` at ``t = 1``.
    """
    scalar = np.ndim(lam) == 0
    t = _check_t(t)
    lam = np.asarray(lam, dtype=float)
    _check_lambda(lam)
    x = (t * lam) ** 2
    if reg.kind == "tikhonov":
        out = x / (1.0 + x)
    elif reg.kind == "landweber" and t <= 1.0:
        out = x
    else:
        out = -np.expm1(log_one_minus_g(reg, t, lam))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if scalar else out


def filter_vector(reg: Regulariser, t: float, spectrum: SpectralSequence) -> np.ndarray:
    """``gamma_i = g(t, lambda_i)`` for the whole spectrum."""
    return g(reg, t, spectrum.lambdas)


def landweber_discrete_index(t: float, rtol: float = 1e-9) -> int:
    """Number of Landweber iterations ``ceil(t^2)`` covering continuous time ``t``.

    ``t^2`` within ``rtol`` of an integer is snapped to it first, so
    ``t = sqrt(51)`` gives 51 and not 52 through rounding.
    """
    t2 = _check_t(t) ** 2
    nearest = round(t2)
    if abs(t2 - nearest) <= rtol * max(1.0, nearest):
        return int(nearest)
    return int(math.ceil(t2))


@dataclass
class EnvelopeReport:
    passed: bool
    worst_lower_slack: float
    worst_upper_slack: float
    violations: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)


def check_R3_envelope(
    reg: Regulariser,
    t_grid,
    lam_grid,
    *,
    rho: float | None = None,
    beta_minus: float | None = None,
    beta_plus: float | None = None,
    atol: float = 1e-14,
) -> EnvelopeReport:
    """Check ``beta_- min((t lam)^rho, 1) <= g <= min(beta_+ (t lam)^rho, 1)`` on a grid.

    The stored constants are used unless overridden, which is how a wrong
    constant can be tested. Slacks are ``g - lower`` and ``upper - g``; a
    violation is a negative slack beyond ``atol``, reported as
    ``(t, lam, g, lower, upper)``.
    """
    rho = reg.rho if rho is None else rho
    bm = reg.beta_minus if beta_minus is None else beta_minus
    bp = reg.beta_plus if beta_plus is None else beta_plus
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    lam_grid = np.atleast_1d(np.asarray(lam_grid, dtype=float))
    violations = []
    worst_lo = worst_hi = math.inf
    for t in t_grid:
        val = g(reg, t, lam_grid)
        x = (t * lam_grid) ** rho
        lower = bm * np.minimum(x, 1.0)
        upper = np.minimum(bp * x, 1.0)
        lo_slack = val - lower
        hi_slack = upper - val
        worst_lo = min(worst_lo, float(lo_slack.min()))
        worst_hi = min(worst_hi, float(hi_slack.min()))
        bad = (lo_slack < -atol) | (hi_slack < -atol)
        for j in np.flatnonzero(bad):
            violations.append((float(t), float(lam_grid[j]), float(val[j]), float(lower[j]), float(upper[j])))
    return EnvelopeReport(
        passed=not violations,
        worst_lower_slack=worst_lo,
        worst_upper_slack=worst_hi,
        violations=violations,
        constants={"rho": rho, "beta_minus": bm, "beta_plus": bp},
    )
