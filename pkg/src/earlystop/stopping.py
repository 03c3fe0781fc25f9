"""Residual-based stopping rules and the filter estimator."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .filters import Regulariser, filter_vector, landweber_discrete_index
from .model import Observation, Signal, SpectralSequence
from .numerics import ConvergenceError, first_crossing

__all__ = [
    "StoppingOutcome",
    "residual_sq",
    "stop_tau",
    "stop_discrete",
    "estimate",
    "weak_norm_sq",
    "kappa_default",
    "kappa_perturbed",
    "M_MAX",
]

M_MAX = 10**6


@dataclass(frozen=True)
class StoppingOutcome:
    tau: float
    m_hat: int
    residual_at_tau: float
    stopped_at_floor: bool


def _check_obs(spectrum: SpectralSequence, obs: Observation) -> None:
    if spectrum.D != obs.D:
        raise ValueError(f"spectrum has D={spectrum.D} but observation has D={obs.D}")


def residual_sq(reg: Regulariser, t: float, spectrum: SpectralSequence, obs: Observation) -> float:
    """``R_t^2 = sum (1 - gamma_i)^2 y_i^2``."""
    _check_obs(spectrum, obs)
    w = 1.0 - filter_vector(reg, t, spectrum)
    wy = w * obs.y
    return float(np.dot(wy, wy))


def stop_tau(
    reg: Regulariser,
    spectrum: SpectralSequence,
    obs: Observation,
    kappa: float,
    t0: float = 0.0,
) -> StoppingOutcome:
    """``tau = inf{t >= t0 : R_t^2 <= kappa}`` in continuous time.

    ``m_hat`` is ``ceil(tau^2)``, the Landweber iteration that covers
    ``tau``; use :func:`stop_discrete` for the rule on the integer grid.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa!r}")
    if not t0 >= 0:
        raise ValueError(f"t0 must be nonnegative, got {t0!r}")
    tau, floor = first_crossing(lambda t: residual_sq(reg, t, spectrum, obs) - kappa, t0)
    return StoppingOutcome(
        tau=tau,
        m_hat=landweber_discrete_index(tau),
        residual_at_tau=residual_sq(reg, tau, spectrum, obs),
        stopped_at_floor=floor,
    )


def stop_discrete(
    reg: Regulariser,
    spectrum: SpectralSequence,
    obs: Observation,
    kappa: float,
    m0: int = 0,
    m_max: int = M_MAX,
) -> int:
    """Smallest integer ``m >= m0`` with ``R^2`` at ``t = sqrt(m)`` below ``kappa``.

    Binary search over the integers, valid because the residual is
    nonincreasing in ``m``.

    Raises
    ------
    ConvergenceError
        If the residual is still above ``kappa`` at ``m_max``.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa!r}")
    m0 = int(m0)
    if m0 < 0:
        raise ValueError(f"m0 must be nonnegative, got {m0}")

    def stops(m):
        return residual_sq(reg, math.sqrt(m), spectrum, obs) <= kappa

    if stops(m0):
        return m0
    if m_max <= m0 or not stops(m_max):
        raise ConvergenceError(f"no stop within budget: residual above kappa at m_max={m_max}")
    lo, hi = m0, m_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if stops(mid):
            hi = mid
        else:
            lo = mid
    return hi


def estimate(reg: Regulariser, t: float, spectrum: SpectralSequence, obs: Observation) -> Signal:
    """Filter estimator ``mu_hat_i = gamma_i y_i / lambda_i``."""
    _check_obs(spectrum, obs)
    gam = filter_vector(reg, t, spectrum)
    return Signal(gam * obs.y / spectrum.lambdas, {"kind": "estimate", "t": float(t), "filter": reg.name})


def weak_norm_sq(v, spectrum: SpectralSequence) -> float:
    """``||A v||^2``, which is ``||lambda * v||^2`` in SVD coordinates."""
    lv = spectrum.lambdas * np.asarray(v, dtype=float)
    return float(np.dot(lv, lv))


def kappa_default(D: int, delta: float) -> float:
    """The threshold ``D delta^2`` (expected squared norm of the noise)."""
    _check_kappa_args(D, delta)
    return D * delta * delta


def kappa_perturbed(D: int, delta: float, C_kappa: float, sign: int = 1) -> float:
    """``D delta^2 + sign * C_kappa sqrt(D) delta^2``."""
    _check_kappa_args(D, delta)
    if C_kappa < 0:
        raise ValueError(f"C_kappa must be nonnegative, got {C_kappa}")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign!r}")
    return D * delta * delta + sign * C_kappa * math.sqrt(D) * delta * delta


def _check_kappa_args(D, delta) -> None:
    if int(D) != D or D < 1:
        raise ValueError(f"D must be a positive integer, got {D!r}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
