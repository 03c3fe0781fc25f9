"""Sequence model ``Y_i = lambda_i * mu_i + delta * eps_i`` in SVD coordinates.

Spectra, signals and observations are small frozen containers around numpy
arrays. Constructors validate the invariants once, so the numerical code
downstream can assume a nonincreasing spectrum in (0, 1] and a finite signal
of matching length.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .rng import stream

__all__ = [
    "SpectralSequence",
    "Signal",
    "NoiseSpec",
    "Observation",
    "make_spectrum",
    "make_signal",
    "observe",
    "noise_vector",
    "sobolev_norm_sq",
    "in_ellipsoid",
    "class_C_constant",
    "spectrum_to_json",
    "spectrum_from_json",
    "signal_to_json",
    "signal_from_json",
]

NOISE_DISTRIBUTIONS = ("gaussian", "three_point")


def _readonly(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must contain at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpectralSequence:
    """Singular values ``1 >= lambda_1 >= ... >= lambda_D > 0``."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = _readonly(self.lambdas, "lambdas")
        if lam[0] > 1.0 or lam[-1] <= 0.0:
            raise ValueError("singular values must lie in (0, 1]")
        if np.any(np.diff(lam) > 0):
            i = int(np.argmax(np.diff(lam) > 0))
            raise ValueError(
                f"singular values must be nonincreasing (lambda_{i + 1}={lam[i]!r} < "
                f"lambda_{i + 2}={lam[i + 1]!r})"
            )
        object.__setattr__(self, "lambdas", lam)

    @property
    def D(self) -> int:
        return self.lambdas.size

    def __len__(self):
        return self.lambdas.size

    def __eq__(self, other):
        return isinstance(other, SpectralSequence) and np.array_equal(self.lambdas, other.lambdas)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Signal:
    """Signal coefficients ``mu`` in the SVD basis, with free-form metadata."""

    mu: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mu", _readonly(self.mu, "mu"))

    @property
    def D(self) -> int:
        return self.mu.size

    def __len__(self):
        return self.mu.size

    def __eq__(self, other):
        return isinstance(other, Signal) and np.array_equal(self.mu, other.mu)

    __hash__ = None


@dataclass(frozen=True)
class NoiseSpec:
    """Noise level and distribution of ``eps``.

    ``"three_point"`` draws ``+-sqrt(3)`` with probability 1/6 each and 0
    otherwise, matching the first four Gaussian moments. ``delta = 0`` is
    accepted to express the noiseless limit.
    """

    delta: float
    distribution: str = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ValueError(f"delta must be a finite nonnegative number, got {self.delta!r}")
        if self.distribution not in NOISE_DISTRIBUTIONS:
            raise ValueError(
                f"unknown noise distribution {self.distribution!r}; "
                f"expected one of {NOISE_DISTRIBUTIONS}"
            )


@dataclass(frozen=True, eq=False)
class Observation:
    y: np.ndarray
    delta: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "y", _readonly(self.y, "y"))

    @property
    def D(self) -> int:
        return self.y.size


def make_spectrum(
    kind: str,
    D: int | None = None,
    *,
    c: float = 1.0,
    nu: float = 2.0,
    p: float = 0.0,
    shift: int = 0,
    values=None,
) -> SpectralSequence:
    """Build a spectrum.

    Parameters
    ----------
    kind : {"polynomial", "polylog", "explicit"}
        ``polynomial``: ``lambda_i = c * i**(-1/nu)``.
        ``polylog``: ``lambda_i = c * (i+shift)**(-1/nu) * log(i+shift+1)**p``.
        ``explicit``: the list ``values``.
    D : int
        Dimension; inferred from ``values`` for explicit spectra.
    shift : int
        Index offset for ``polylog``. A positive log power makes the raw
        sequence increase for small ``i``; shifting past the maximum restores
        monotonicity.

    Raises
    ------
    ValueError
        For nonpositive ``c`` or ``nu``, values above 1, or a sequence that is
        not nonincreasing.
    """
    if kind == "explicit":
        if values is None:
            raise ValueError("explicit spectrum needs 'values'")
        lam = np.asarray(values, dtype=float)
        if D is not None and lam.size != D:
            raise ValueError(f"explicit spectrum has {lam.size} values, expected D={D}")
        return SpectralSequence(lam)

    if D is None or int(D) < 1:
        raise ValueError(f"D must be a positive integer, got {D!r}")
    if c <= 0 or nu <= 0:
        raise ValueError(f"c and nu must be positive (got c={c}, nu={nu})")
    i = np.arange(1, int(D) + 1, dtype=float)
    if kind == "polynomial":
        lam = c * i ** (-1.0 / nu)
    elif kind == "polylog":
        if shift < 0:
            raise ValueError("shift must be nonnegative")
        j = i + shift
        lam = c * j ** (-1.0 / nu) * np.log(j + 1.0) ** p
    else:
        raise ValueError(f"unknown spectrum kind {kind!r}")
    if lam.max() > 1.0:
        raise ValueError(f"{kind} spectrum with c={c} exceeds 1 (max {lam.max():.6g}); reduce c")
    return SpectralSequence(lam)


def make_signal(
    kind: str,
    D: int | None = None,
    *,
    R: float = 1.0,
    s: float = 1.0,
    sign: str = "constant",
    i0: int = 1,
    amplitude: float = 1.0,
    beta: float = 1.0,
    d: int = 1,
    seed: int = 0,
    values=None,
) -> Signal:
    """Build a test signal.

    ``poly_decay`` gives ``R * sign_i * i**(-s)`` with ``sign`` either
    ``"constant"`` or ``"alternating"``; ``spike`` puts ``amplitude`` at the
    1-based index ``i0``; ``sobolev_random`` draws a random direction and
    rescales it onto the boundary of the ellipsoid
    ``sum_i i**(2 beta/d) mu_i**2 = R**2``.
    """
    if kind == "explicit":
        if values is None:
            raise ValueError("explicit signal needs 'values'")
        mu = np.asarray(values, dtype=float)
        if D is not None and mu.size != D:
            raise ValueError(f"explicit signal has {mu.size} values, expected D={D}")
        return Signal(mu, {"kind": "explicit"})

    if D is None or int(D) < 1:
        raise ValueError(f"D must be a positive integer, got {D!r}")
    D = int(D)
    i = np.arange(1, D + 1, dtype=float)
    if kind == "poly_decay":
        if s <= 0:
            raise ValueError("poly_decay needs s > 0")
        if R <= 0:
            raise ValueError("radius R must be positive")
        if sign == "constant":
            signs = np.ones(D)
        elif sign == "alternating":
            signs = np.where(np.arange(D) % 2 == 0, 1.0, -1.0)
        else:
            raise ValueError(f"unknown sign pattern {sign!r}")
        mu = R * signs * i**-s
        meta = {"kind": kind, "R": R, "s": s, "sign": sign}
    elif kind == "spike":
        if not 1 <= int(i0) <= D:
            raise ValueError(f"spike index i0={i0} outside 1..{D}")
        mu = np.zeros(D)
        mu[int(i0) - 1] = amplitude
        meta = {"kind": kind, "i0": int(i0), "amplitude": amplitude}
    elif kind == "sobolev_random":
        if R <= 0:
            raise ValueError("radius R must be positive")
        if beta < 0 or int(d) < 1:
            raise ValueError("sobolev_random needs beta >= 0 and d >= 1")
        z = stream(seed, "sobolev_random").standard_normal(D)
        weights = i ** (beta / d)
        mu = R * z / np.linalg.norm(z) / weights
        meta = {"kind": kind, "beta": beta, "d": int(d), "R": R, "seed": int(seed)}
    else:
        raise ValueError(f"unknown signal kind {kind!r}")
    return Signal(mu, meta)


def noise_vector(D: int, seed: int, distribution: str = "gaussian") -> np.ndarray:
    """The ``eps`` stream used by :func:`observe` for a given seed."""
    gen = stream(seed, "observe")
    if distribution == "gaussian":
        return gen.standard_normal(D)
    if distribution == "three_point":
        u = gen.random(D)
        r3 = math.sqrt(3.0)
        return np.where(u < 1 / 6, -r3, np.where(u < 1 / 3, r3, 0.0))
    raise ValueError(f"unknown noise distribution {distribution!r}")


def observe(spectrum: SpectralSequence, signal: Signal, noise: NoiseSpec, seed: int) -> Observation:
    """Draw ``y = lambda * mu + delta * eps`` deterministically from ``seed``."""
    if spectrum.D != signal.D:
        raise ValueError(f"spectrum has D={spectrum.D} but signal has D={signal.D}")
    eps = noise_vector(spectrum.D, seed, noise.distribution)
    y = spectrum.lambdas * signal.mu + noise.delta * eps
    return Observation(y, noise.delta, int(seed))


def _check_sobolev(beta: float, d: int) -> None:
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}")


def sobolev_norm_sq(signal: Signal, beta: float, d: int = 1) -> float:
    """``sum_i i**(2 beta/d) mu_i**2``."""
    _check_sobolev(beta, d)
    i = np.arange(1, signal.D + 1, dtype=float)
    return math.fsum(i ** (2.0 * beta / d) * signal.mu**2)


def in_ellipsoid(signal: Signal, beta: float, d: int, R: float) -> bool:
    if R <= 0:
        raise ValueError(f"radius R must be positive, got {R}")
    return sobolev_norm_sq(signal, beta, d) <= R * R


def class_C_constant(signal: Signal, L: int) -> float | None:
    """Largest ``c_mu`` with ``mu_{(L-1)i+1}^2 + ... + mu_{Li}^2 >= c_mu mu_i^2``.

    The inequality is imposed for ``i = 1..floor(D/L)``. Indices with
    ``mu_i = 0`` impose nothing; if no index imposes anything the class
    membership is vacuous and ``None`` is returned.
    """
    if int(L) != L or L < 2:
        raise ValueError(f"L must be an integer >= 2, got {L}")
    L = int(L)
    mu2 = signal.mu**2
    best = math.inf
    for i in range(1, signal.D // L + 1):
        if mu2[i - 1] == 0.0:
            continue
        block = math.fsum(mu2[(L - 1) * i : L * i])
        best = min(best, block / mu2[i - 1])
    return None if best == math.inf else best


def _dump(obj: dict[str, Any], path: str | Path | None) -> str:
    text = json.dumps(obj)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def spectrum_to_json(spectrum: SpectralSequence, path: str | Path | None = None) -> str:
    return _dump({"lambdas": [float(v) for v in spectrum.lambdas]}, path)


def signal_to_json(signal: Signal, path: str | Path | None = None) -> str:
    return _dump({"mu": [float(v) for v in signal.mu]}, path)


def _load(source: str | Path | dict) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
        return json.loads(Path(source).read_text())
    return json.loads(source)


def spectrum_from_json(source: str | Path | dict) -> SpectralSequence:
    doc = _load(source)
    if set(doc) != {"lambdas"}:
        raise ValueError(f"spectrum document must have exactly the key 'lambdas', got {sorted(doc)}")
    return SpectralSequence(np.asarray(doc["lambdas"], dtype=float))


def signal_from_json(source: str | Path | dict) -> Signal:
    doc = _load(source)
    if set(doc) != {"mu"}:
        raise ValueError(f"signal document must have exactly the key 'mu', got {sorted(doc)}")
    return Signal(np.asarray(doc["mu"], dtype=float), {"kind": "explicit"})
