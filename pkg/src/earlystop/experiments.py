"""Monte Carlo harness: replications, summaries, rate studies and traces.

Every replication draws its noise from a seed derived from
``(base seed, replication index)``, so records do not depend on how the
work is scheduled across processes.
"""
from __future__ import annotations

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from typing import Sequence

import numpy as np

from .analytics import balanced_oracle, bias_variance, expected_residual_sq, min_error, oracle_proxy, t_circ
from .filters import Regulariser
from .model import NoiseSpec, Signal, SpectralSequence, make_signal, make_spectrum, observe
from .rng import derive_seed
from .stopping import estimate, kappa_default, kappa_perturbed, residual_sq, stop_discrete, stop_tau, weak_norm_sq

__all__ = [
    "MCConfig",
    "Oracles",
    "RunRecord",
    "RUN_FIELDS",
    "RateStudyResult",
    "compute_oracles",
    "run_replication",
    "run_records",
    "run_mc",
    "summarise",
    "nearest_rank",
    "rate_study",
    "rate_dimension",
    "trace",
    "QUANTILES",
]

QUANTILES = (5, 25, 50, 75, 95)
D_CAP = 100_000


@dataclass(frozen=True)
class MCConfig:
    reg: Regulariser
    spectrum: SpectralSequence
    signal: Signal
    delta: float
    C_circ: float = math.sqrt(2)
    kappa_rule: str = "default"  # or "perturbed"
    C_kappa: float = 0.0
    kappa_sign: int = 1
    t0_rule: str = "t_circ"  # "t_circ", "zero" or "auto"
    N: int = 100
    seed: int = 0
    width: int = 1
    noise: str = "gaussian"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be at least 1, got {self.N}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.spectrum.D != self.signal.D:
            raise ValueError(f"spectrum has D={self.spectrum.D} but signal has D={self.signal.D}")
        if self.kappa_rule not in ("default", "perturbed"):
            raise ValueError(f"unknown kappa rule {self.kappa_rule!r}")
        if self.t0_rule not in ("t_circ", "zero", "auto"):
            raise ValueError(f"unknown t0 rule {self.t0_rule!r}")
        if self.width < 1:
            raise ValueError(f"width must be at least 1, got {self.width}")
        NoiseSpec(self.delta, self.noise)

    @property
    def kappa(self) -> float:
        D = self.spectrum.D
        if self.kappa_rule == "default":
            return kappa_default(D, self.delta)
        return kappa_perturbed(D, self.delta, self.C_kappa, self.kappa_sign)

    def t_circ(self) -> float | None:
        if not self.C_circ < math.sqrt(self.spectrum.D):
            return None
        return t_circ(self.reg, self.spectrum, self.delta, self.C_circ)

    def t0(self) -> float:
        """Start time: ``t_circ``, zero, or (``"auto"``) ``t_circ`` when it is defined."""
        if self.t0_rule == "zero":
            return 0.0
        tc = self.t_circ()
        if tc is None:
            if self.t0_rule == "auto":
                return 0.0
            raise ValueError(
                f"t_circ needs C_circ < sqrt(D) (C_circ={self.C_circ}, D={self.spectrum.D}); use t0 'zero' or 'auto'"
            )
        return tc


@dataclass(frozen=True)
class Oracles:
    """Deterministic quantities shared by all replications of a config."""

    t0: float
    t_circ: float | None
    kappa: float
    t_star: float
    t_w: float
    t_s: float
    argmin_s: float
    min_s: float
    argmin_w: float
    min_w: float

    def to_dict(self) -> dict:
        return asdict(self)


def compute_oracles(config: MCConfig) -> Oracles:
    reg, spec, sig, delta = config.reg, config.spectrum, config.signal, config.delta
    t0 = config.t0()
    kappa = config.kappa
    arg_s, m_s = min_error(reg, spec, sig, delta, "strong")
    arg_w, m_w = min_error(reg, spec, sig, delta, "weak")
    return Oracles(
        t0=t0,
        t_circ=config.t_circ(),
        kappa=kappa,
        t_star=oracle_proxy(reg, spec, sig, delta, kappa, t0),
        t_w=balanced_oracle(reg, spec, sig, delta, t0, "weak"),
        t_s=balanced_oracle(reg, spec, sig, delta, t0, "strong"),
        argmin_s=arg_s,
        min_s=m_s,
        argmin_w=arg_w,
        min_w=m_w,
    )


@dataclass(frozen=True)
class RunRecord:
    rep: int
    tau: float
    m_hat: int
    t_star: float
    t_w: float
    t_s: float
    floor: bool
    err_s: float
    err_w: float
    min_s: float
    min_w: float
    argmin_s: float
    argmin_w: float

    def row(self) -> list:
        return [getattr(self, f) for f in RUN_FIELDS]


RUN_FIELDS = tuple(f.name for f in fields(RunRecord))


def run_replication(config: MCConfig, rep: int, oracles: Oracles | None = None) -> RunRecord:
    """One observation, its stopping time and the realised errors at ``tau``.

    ``m_hat`` is the discrete rule on ``t = sqrt(m)`` started at
    ``ceil(t0^2)``.
    """
    if oracles is None:
        oracles = compute_oracles(config)
    seed = derive_seed(config.seed, "replication", rep)
    obs = observe(config.spectrum, config.signal, NoiseSpec(config.delta, config.noise), seed)
    out = stop_tau(config.reg, config.spectrum, obs, oracles.kappa, oracles.t0)
    m0 = math.ceil(oracles.t0**2 * (1 - 1e-12))
    m_hat = stop_discrete(config.reg, config.spectrum, obs, oracles.kappa, m0)
    diff = estimate(config.reg, out.tau, config.spectrum, obs).mu - config.signal.mu
    return RunRecord(
        rep=int(rep),
        tau=out.tau,
        m_hat=m_hat,
        t_star=oracles.t_star,
        t_w=oracles.t_w,
        t_s=oracles.t_s,
        floor=out.stopped_at_floor,
        err_s=float(np.dot(diff, diff)),
        err_w=weak_norm_sq(diff, config.spectrum),
        min_s=oracles.min_s,
        min_w=oracles.min_w,
        argmin_s=oracles.argmin_s,
        argmin_w=oracles.argmin_w,
    )


def _run_block(config: MCConfig, oracles: Oracles, reps: Sequence[int]) -> list[RunRecord]:
    return [run_replication(config, r, oracles) for r in reps]


def _pool_context():
    try:
        return mp.get_context("fork")
    except ValueError:
        return mp.get_context()


def run_records(config: MCConfig, oracles: Oracles | None = None) -> list[RunRecord]:
    """All ``N`` replications, sorted by index whatever the pool width."""
    if oracles is None:
        oracles = compute_oracles(config)
    reps = list(range(config.N))
    if config.width == 1 or config.N == 1:
        records = _run_block(config, oracles, reps)
    else:
        blocks = [reps[i :: config.width] for i in range(config.width)]
        blocks = [b for b in blocks if b]
        with ProcessPoolExecutor(max_workers=len(blocks), mp_context=_pool_context()) as pool:
            records = [r for block in pool.map(partial(_run_block, config, oracles), blocks) for r in block]
    return sorted(records, key=lambda r: r.rep)


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q/100 * n)``-th smallest value."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    k = max(1, math.ceil(q / 100.0 * x.size))
    return float(x[min(k, x.size) - 1])


def _quantiles(values) -> dict:
    return {str(q): nearest_rank(values, q) for q in QUANTILES}


def _mean_se(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _efficiency(min_err: float, errs: np.ndarray) -> dict:
    with np.errstate(divide="ignore"):
        per_rep = np.sqrt(min_err / errs)
    mean_err = float(errs.mean())
    return {
        "per_replication": _quantiles(per_rep),
        "per_replication_mean": float(per_rep.mean()),
        "ratio_of_means": math.sqrt(min_err / mean_err) if mean_err > 0 else math.inf,
    }


def summarise(records: Sequence[RunRecord], oracles: Oracles) -> dict:
    """Aggregate records; efficiencies are oracle RMSE over RMSE at ``tau`` (higher is better)."""
    tau = np.array([r.tau for r in records])
    err_s = np.array([r.err_s for r in records])
    err_w = np.array([r.err_w for r in records])
    mean_s, se_s = _mean_se(err_s)
    mean_w, se_w = _mean_se(err_w)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_w = tau / oracles.t_w
        ratio_s = tau / oracles.t_s
    return {
        "N": len(records),
        "kappa": oracles.kappa,
        "oracles": oracles.to_dict(),
        "tau": _quantiles(tau),
        "m_hat": _quantiles([r.m_hat for r in records]),
        "tau_over_t_w": _quantiles(ratio_w),
        "tau_over_t_s": _quantiles(ratio_s),
        "efficiency_strong": _efficiency(oracles.min_s, err_s),
        "efficiency_weak": _efficiency(oracles.min_w, err_w),
        "floor_rate": float(np.mean([r.floor for r in records])),
        "mean_err_s": mean_s,
        "se_err_s": se_s,
        "mean_err_w": mean_w,
        "se_err_w": se_w,
    }


def run_mc(config: MCConfig) -> tuple[dict, list[RunRecord]]:
    oracles = compute_oracles(config)
    records = run_records(config, oracles)
    return summarise(records, oracles), records


@dataclass
class RateStudyResult:
    deltas: list
    dimensions: list
    mse: list
    se: list
    slope: float
    intercept: float
    exponent: float
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def rate_dimension(delta: float, p: float, d: int) -> int:
    """``D_delta = ceil(delta^(-2d/(2p+d)))``, capped at ``1e5``."""
    return int(min(math.ceil(delta ** (-2.0 * d / (2.0 * p + d)) * (1 - 1e-12)), D_CAP))


def rate_study(
    reg: Regulariser,
    p: float,
    d: int,
    beta: float,
    R: float,
    delta_grid: Sequence[float],
    N_per_delta: int,
    seed: int = 0,
    *,
    C_circ: float = math.sqrt(2),
    t0_rule: str = "auto",
) -> RateStudyResult:
    """Mean squared strong error at ``tau`` on a decreasing grid of noise levels.

    Spectrum ``lam_i = i^(-p/d)``; each replication draws a fresh signal on
    the boundary of the Sobolev ellipsoid of radius ``R``. The exponent
    ``4 beta / (2 beta + 2p + d)`` is compared with the OLS slope of
    log-MSE against log-delta.
    """
    if not 2 * reg.qualification - 1 >= beta / p:
        raise ValueError(
            f"qualification too low: need 2q - 1 >= beta/p, got q={reg.qualification}, beta/p={beta / p:g}"
        )
    deltas = [float(x) for x in delta_grid]
    if len(deltas) < 2 or any(b >= a for a, b in zip(deltas[:-1], deltas[1:])):
        raise ValueError("delta_grid must have at least two strictly decreasing values")
    if N_per_delta < 1:
        raise ValueError("N_per_delta must be at least 1")
    mse, se, dims = [], [], []
    for j, delta in enumerate(deltas):
        D = rate_dimension(delta, p, d)
        spectrum = make_spectrum("polynomial", D, nu=d / p)
        errs = []
        for r in range(N_per_delta):
            sig_seed = derive_seed(seed, "rate_signal", j * N_per_delta + r)
            signal = make_signal("sobolev_random", D, R=R, beta=beta, d=d, seed=sig_seed)
            cfg = MCConfig(reg, spectrum, signal, delta, C_circ=C_circ, t0_rule=t0_rule, N=1,
                           seed=derive_seed(seed, "rate_noise", j * N_per_delta + r))
            obs = observe(spectrum, signal, NoiseSpec(delta), derive_seed(cfg.seed, "replication", 0))
            tau = stop_tau(reg, spectrum, obs, cfg.kappa, cfg.t0()).tau
            diff = estimate(reg, tau, spectrum, obs).mu - signal.mu
            errs.append(float(np.dot(diff, diff)))
        m, s = _mean_se(errs)
        mse.append(m)
        se.append(s)
        dims.append(D)
    slope, intercept = np.polyfit(np.log(deltas), np.log(mse), 1)
    return RateStudyResult(
        deltas=deltas,
        dimensions=dims,
        mse=mse,
        se=se,
        slope=float(slope),
        intercept=float(intercept),
        exponent=4.0 * beta / (2.0 * beta + 2.0 * p + d),
        params={"filter": reg.name, "p": p, "d": d, "beta": beta, "R": R, "N_per_delta": N_per_delta, "seed": seed},
    )


TRACE_FIELDS = (
    "t",
    "residual_sq",
    "expected_residual_sq",
    "strong_bias_sq",
    "strong_variance",
    "weak_bias_sq",
    "weak_variance",
)


def trace(config: MCConfig, t_grid, rep: int = 0) -> tuple[list[dict], dict]:
    """Per-``t`` residual (one realisation) and exact bias/variance terms, plus the indices."""
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0 or np.any(~(t_grid >= 0)):
        raise ValueError("t_grid must be a nonempty list of nonnegative times")
    reg, spec, sig, delta = config.reg, config.spectrum, config.signal, config.delta
    seed = derive_seed(config.seed, "replication", rep)
    obs = observe(spec, sig, NoiseSpec(delta, config.noise), seed)
    rows = []
    for t in t_grid:
        bv = bias_variance(reg, t, spec, sig, delta)
        rows.append(
            {
                "t": float(t),
                "residual_sq": residual_sq(reg, t, spec, obs),
                "expected_residual_sq": expected_residual_sq(reg, t, spec, sig, delta),
                "strong_bias_sq": bv.strong_bias_sq,
                "strong_variance": bv.strong_variance,
                "weak_bias_sq": bv.weak_bias_sq,
                "weak_variance": bv.weak_variance,
            }
        )
    t0 = config.t0()
    out = stop_tau(reg, spec, obs, config.kappa, t0)
    indices = {
        "t0": t0,
        "t_circ": config.t_circ(),
        "kappa": config.kappa,
        "tau": out.tau,
        "m_hat": out.m_hat,
        "stopped_at_floor": out.stopped_at_floor,
        "t_star": oracle_proxy(reg, spec, sig, delta, config.kappa, t0),
        "t_w": balanced_oracle(reg, spec, sig, delta, t0, "weak"),
        "t_s": balanced_oracle(reg, spec, sig, delta, t0, "strong"),
    }
    return rows, indices
