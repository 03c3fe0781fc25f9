"""Expectation-level functionals and the deterministic stopping indices.

Everything here is exact given ``(filter, spectrum, signal, delta)``: no
randomness is involved. All index definitions are first-crossing times of
monotone continuous maps and go through :func:`numerics.first_crossing`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .filters import Regulariser, filter_vector
from .model import Signal, SpectralSequence
from .numerics import first_crossing, ksum

__all__ = [
    "BiasVariance",
    "OracleReport",
    "bias_variance",
    "expected_residual_sq",
    "mise",
    "t_circ",
    "oracle_proxy",
    "balanced_oracle",
    "min_error",
    "oracle_report",
    "l1_l2_ratio",
]

NORMS = ("weak", "strong")


@dataclass(frozen=True)
class BiasVariance:
    t: float
    strong_bias_sq: float
    strong_variance: float
    weak_bias_sq: float
    weak_variance: float

    def mise(self, norm: str = "strong") -> float:
        _check_norm(norm)
        if norm == "strong":
            return self.strong_bias_sq + self.strong_variance
        return self.weak_bias_sq + self.weak_variance


def _check_norm(norm: str) -> None:
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")


def _check_pair(spectrum: SpectralSequence, signal: Signal) -> None:
    if spectrum.D != signal.D:
        raise ValueError(f"spectrum has D={spectrum.D} but signal has D={signal.D}")


def _check_delta(delta: float) -> None:
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta!r}")


def bias_variance(
    reg: Regulariser, t: float, spectrum: SpectralSequence, signal: Signal, delta: float
) -> BiasVariance:
    """Strong and weak squared bias and variance of the filter estimator at ``t``."""
    _check_pair(spectrum, signal)
    _check_delta(delta)
    gam = filter_vector(reg, t, spectrum)
    lam2 = spectrum.lambdas**2
    r2 = (1.0 - gam) ** 2 * signal.mu**2
    g2 = gam**2
    d2 = delta * delta
    return BiasVariance(
        t=float(t),
        strong_bias_sq=ksum(r2),
        strong_variance=d2 * ksum(g2 / lam2),
        weak_bias_sq=ksum(r2 * lam2),
        weak_variance=d2 * ksum(g2),
    )


def mise(reg, t, spectrum, signal, delta, norm: str = "strong") -> float:
    """Exact mean integrated squared error in the requested norm."""
    return bias_variance(reg, t, spectrum, signal, delta).mise(norm)


def expected_residual_sq(
    reg: Regulariser, t: float, spectrum: SpectralSequence, signal: Signal, delta: float
) -> float:
    """``E[R_t^2] = B_{t,lam}^2 + delta^2 sum (1 - gamma_i)^2``."""
    _check_pair(spectrum, signal)
    gam = filter_vector(reg, t, spectrum)
    one_m = (1.0 - gam) ** 2
    return ksum(one_m * (spectrum.lambdas * signal.mu) ** 2) + delta * delta * ksum(one_m)


def _weak_variance(reg, t, spectrum, delta) -> float:
    return delta * delta * ksum(filter_vector(reg, t, spectrum) ** 2)


def t_circ(reg: Regulariser, spectrum: SpectralSequence, delta: float, C_circ: float = math.sqrt(2)) -> float:
    """Earliest admissible stopping time: ``V_{t,lam} = C_circ sqrt(D) delta^2``.

    Requires ``1 <= C_circ < sqrt(D)``; the weak variance only increases to
    ``D delta^2``, so larger levels are never reached.
    """
    _check_delta(delta)
    D = spectrum.D
    if not 1.0 <= C_circ < math.sqrt(D):
        raise ValueError(f"C_circ must satisfy 1 <= C_circ < sqrt(D) = {math.sqrt(D):.6g}, got {C_circ}")
    level = C_circ * math.sqrt(D) * delta * delta
    t, _ = first_crossing(lambda t: level - _weak_variance(reg, t, spectrum, delta), 0.0)
    return t


def oracle_proxy(
    reg: Regulariser,
    spectrum: SpectralSequence,
    signal: Signal,
    delta: float,
    kappa: float,
    t0: float,
) -> float:
    """``t* = inf{t >= t0 : E[R_t^2] <= kappa}``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa!r}")
    t, _ = first_crossing(
        lambda t: expected_residual_sq(reg, t, spectrum, signal, delta) - kappa, t0
    )
    return t


def balanced_oracle(
    reg: Regulariser,
    spectrum: SpectralSequence,
    signal: Signal,
    delta: float,
    t0: float,
    norm: str = "weak",
) -> float:
    """First ``t >= t0`` where squared bias no longer exceeds variance.

    ``norm="weak"`` gives the weakly balanced oracle, ``"strong"`` the
    strongly balanced one.
    """
    _check_norm(norm)
    _check_delta(delta)

    def excess(t):
        bv = bias_variance(reg, t, spectrum, signal, delta)
        if norm == "weak":
            return bv.weak_bias_sq - bv.weak_variance
        return bv.strong_bias_sq - bv.strong_variance

    t, _ = first_crossing(excess, t0)
    return t


def _default_window(reg, spectrum, signal, delta) -> tuple[float, float]:
    if spectrum.D >= 2:
        t_min = t_circ(reg, spectrum, delta, 1.0) / 100.0
    else:
        t_min = 1e-3 / spectrum.lambdas[0]
    top = max(
        balanced_oracle(reg, spectrum, signal, delta, 0.0, "strong"),
        balanced_oracle(reg, spectrum, signal, delta, 0.0, "weak"),
        1.0 / spectrum.lambdas[0],
    )
    return t_min, 10.0 * top


def min_error(
    reg: Regulariser,
    spectrum: SpectralSequence,
    signal: Signal,
    delta: float,
    norm: str = "strong",
    *,
    t_min: float | None = None,
    t_max: float | None = None,
    n_grid: int = 512,
) -> tuple[float, float]:
    """Minimise the exact MISE over ``[t_min, t_max]``.

    A log-spaced grid is scanned first and the bracketing cell around the
    best grid point is refined by golden-section search; the MISE is not
    assumed unimodal. Defaults: ``t_min = t_circ(C_circ=1) / 100`` and
    ``t_max`` ten times the larger balanced oracle started from 0.
    """
    _check_norm(norm)
    if t_min is None or t_max is None:
        lo, hi = _default_window(reg, spectrum, signal, delta)
        t_min = lo if t_min is None else t_min
        t_max = hi if t_max is None else t_max
    if not 0 < t_min < t_max:
        raise ValueError(f"need 0 < t_min < t_max, got [{t_min}, {t_max}]")

    def f(t):
        return mise(reg, t, spectrum, signal, delta, norm)

    grid = np.geomspace(t_min, t_max, n_grid)
    vals = np.array([f(t) for t in grid])
    k = int(np.argmin(vals))
    best_t, best = float(grid[k]), float(vals[k])
    if 0 < k < n_grid - 1 and vals[k] < vals[k - 1] and vals[k] < vals[k + 1]:
        t_ref = optimize.golden(f, brack=(grid[k - 1], grid[k], grid[k + 1]), tol=1e-10)
        t_ref = float(np.clip(t_ref, grid[k - 1], grid[k + 1]))
        v_ref = f(t_ref)
        if v_ref < best:
            best_t, best = t_ref, v_ref
    return best_t, best


def l1_l2_ratio(reg: Regulariser, t: float, spectrum: SpectralSequence) -> float:
    """``sum gamma_i / sum gamma_i^2`` at time ``t``."""
    gam = filter_vector(reg, t, spectrum)
    return ksum(gam) / ksum(gam**2)


@dataclass
class OracleReport:
    t0: float
    t_circ: float | None
    t_star: float
    t_w: float
    t_s: float
    kappa: float
    C_circ: float
    strong_mise: dict
    weak_mise: dict
    min_strong: tuple
    min_weak: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def oracle_report(
    reg: Regulariser,
    spectrum: SpectralSequence,
    signal: Signal,
    delta: float,
    *,
    kappa: float | None = None,
    C_circ: float = math.sqrt(2),
    t0: float | str = "t_circ",
) -> OracleReport:
    """All deterministic indices and their exact errors for one configuration.

    ``t0`` is ``"t_circ"`` (default), ``"zero"`` or a number. ``t_circ`` is
    reported as ``None`` when ``C_circ >= sqrt(D)`` makes it undefined.
    """
    kappa = spectrum.D * delta * delta if kappa is None else kappa
    try:
        tc = t_circ(reg, spectrum, delta, C_circ)
    except ValueError:
        tc = None
    if t0 == "t_circ":
        if tc is None:
            raise ValueError(f"t_circ is undefined for C_circ={C_circ} and D={spectrum.D}; use t0='zero'")
        start = tc
    elif t0 == "zero":
        start = 0.0
    else:
        start = float(t0)
    t_star = oracle_proxy(reg, spectrum, signal, delta, kappa, start)
    t_w = balanced_oracle(reg, spectrum, signal, delta, start, "weak")
    t_s = balanced_oracle(reg, spectrum, signal, delta, start, "strong")
    strong, weak = {}, {}
    for name, t in (("t0", start), ("t_star", t_star), ("t_w", t_w), ("t_s", t_s)):
        bv = bias_variance(reg, t, spectrum, signal, delta)
        strong[name] = bv.mise("strong")
        weak[name] = bv.mise("weak")
    return OracleReport(
        t0=start,
        t_circ=tc,
        t_star=t_star,
        t_w=t_w,
        t_s=t_s,
        kappa=kappa,
        C_circ=C_circ,
        strong_mise=strong,
        weak_mise=weak,
        min_strong=min_error(reg, spectrum, signal, delta, "strong"),
        min_weak=min_error(reg, spectrum, signal, delta, "weak"),
    )
