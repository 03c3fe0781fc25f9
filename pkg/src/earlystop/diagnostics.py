"""Numerical checks of the structural assumptions on filters and spectra.

Constants are fitted, i.e. the smallest (or largest) value that makes every
grid inequality true, rather than asserted. A finite grid can refute an
assumption but never certify it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .analytics import t_circ
from .filters import Regulariser, filter_vector, log_one_minus_g
from .model import SpectralSequence
from .rng import stream

__all__ = [
    "AssumptionReport",
    "TailReport",
    "check_S",
    "check_A",
    "default_t_grid",
    "karamata_check",
    "variance_ordering_constants",
    "check_variance_ordering",
    "check_t_circ_floor",
    "concentration_lm",
    "maxsum_drift_check",
    "binomial_ucb",
]

RTOL = 1e-12
PI_FRONTIER = (1.0, 2.0, 4.0, 8.0)


@dataclass
class AssumptionReport:
    id: str
    passed: bool
    constants: dict = field(default_factory=dict)
    worst_slack: float = math.nan
    violations: list = field(default_factory=list)
    warning: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["violations"] = d["violations"][:20]
        return d


def check_S(spectrum: SpectralSequence, L: int = 2) -> AssumptionReport:
    """Fit the indices ``(nu_-, nu_+)`` of the spectral decay condition.

    For ``L <= k <= D`` the condition asks
    ``L^(-1/nu_-) <= lam_k / lam_ceil(k/L)`` and
    ``lam_k / lam_floor(k/L) <= L^(-1/nu_+) < 1``. The largest admissible
    ``nu_-`` and smallest admissible ``nu_+`` are returned; the check fails
    when some upper ratio is not below 1.
    """
    if int(L) != L or L < 2:
        raise ValueError(f"L must be an integer >= 2, got {L}")
    L = int(L)
    lam = spectrum.lambdas
    D = spectrum.D
    if D < L:
        return AssumptionReport("S", False, {"L": L}, note=f"D={D} < L={L}: no index to check")
    k = np.arange(L, D + 1)
    lower = lam[k - 1] / lam[-(-k // L) - 1]
    upper = lam[k - 1] / lam[k // L - 1]
    r_lo = float(lower.min())
    r_hi = float(upper.max())
    logL = math.log(L)
    nu_minus = math.inf if r_lo >= 1.0 else -logL / math.log(r_lo)
    bad = k[upper >= 1.0]
    if bad.size:
        return AssumptionReport(
            "S",
            False,
            {"L": L, "nu_minus": nu_minus, "nu_plus": math.nan},
            worst_slack=1.0 - r_hi,
            violations=[int(v) for v in bad],
            note="lam_k / lam_floor(k/L) >= 1 at the listed k",
        )
    nu_plus = -logL / math.log(r_hi)
    return AssumptionReport(
        "S", True, {"L": L, "nu_minus": nu_minus, "nu_plus": nu_plus}, worst_slack=1.0 - r_hi
    )


def default_t_grid(reg: Regulariser, spectrum: SpectralSequence, delta: float, C_circ: float, n: int = 200):
    tc = t_circ(reg, spectrum, delta, C_circ)
    hi = max(10.0 * tc, 10.0 / spectrum.lambdas[-1])
    return np.geomspace(tc, hi, n)


def _ratio_monotonicity(reg, t_grid, lam) -> tuple[list, float]:
    """Check that ``(1-g(t',.))/(1-g(t,.))`` is nondecreasing in ``lam`` (adjacent t' < t).

    ``lam`` is sorted decreasingly, so the log-ratio must be nonincreasing
    along the array. A ratio of the form x/0 (including 0/0) counts as
    +inf and sits at the large-lambda end.
    """
    violations = []
    worst = math.inf
    t_sorted = np.sort(np.asarray(t_grid, dtype=float))
    prev = log_one_minus_g(reg, t_sorted[0], lam)
    for t_prev, t in zip(t_sorted[:-1], t_sorted[1:]):
        cur = log_one_minus_g(reg, t, lam)
        with np.errstate(invalid="ignore"):
            lr = prev - cur
        lr = np.where(np.isneginf(cur), math.inf, lr)
        a, b = lr[:-1], lr[1:]
        finite = np.isfinite(a)
        with np.errstate(invalid="ignore"):
            slack = np.where(finite, a - b + RTOL * (1.0 + np.abs(a)), math.inf)
        slack = np.where(np.isposinf(b) & finite, -math.inf, slack)
        if slack.size:
            worst = min(worst, float(slack.min()))
        for j in np.flatnonzero(slack < 0)[:5]:
            violations.append((float(t_prev), float(t), int(j + 1)))
        prev = cur
    return violations, worst


def check_A(
    reg: Regulariser,
    spectrum: SpectralSequence,
    delta: float,
    C_circ: float = math.sqrt(2),
    t_grid=None,
) -> list[AssumptionReport]:
    """Check properties A1-A5 on ``t_grid`` (default: 200 log-spaced times from ``t_circ``).

    Also reports the ratio-monotonicity condition on the filter itself as a
    warning-level ``R2``: the other properties hold with looser constants
    without it.
    """
    if t_grid is None:
        t_grid = default_t_grid(reg, spectrum, delta, C_circ)
    t_grid = np.sort(np.atleast_1d(np.asarray(t_grid, dtype=float)))
    if t_grid.size < 2:
        raise ValueError("t_grid needs at least 2 points")
    lam = spectrum.lambdas
    reports = []

    viol, worst = _ratio_monotonicity(reg, t_grid, lam)
    reports.append(AssumptionReport("A1", not viol, {}, worst, viol))

    viol, worst = [], math.inf
    gammas = [filter_vector(reg, t, spectrum) for t in t_grid]
    for t, gam in zip(t_grid, gammas):
        slack = gam[:-1] - gam[1:]
        if slack.size:
            worst = min(worst, float(slack.min()))
        for j in np.flatnonzero(slack < -1e-15)[:5]:
            viol.append((float(t), int(j + 1)))
    reports.append(AssumptionReport("A2", not viol, {}, worst, viol))

    d2 = delta * delta
    V_s = np.array([d2 * math.fsum(gm**2 / lam**2) for gm in gammas])
    V_w = np.array([d2 * math.fsum(gm**2) for gm in gammas])
    rs = V_s[None, :] / V_s[:, None]
    rw = V_w[None, :] / V_w[:, None]
    upper = np.triu(np.ones_like(rs, dtype=bool))
    frontier = {}
    for pi in PI_FRONTIER:
        frontier[pi] = float(np.max((rs / rw**pi)[upper]))
    c_ref = lambda pi: (4.0 * reg.beta_plus**2 / reg.beta_minus**2) ** (1.0 + pi)
    pi_min = None
    for pi in np.linspace(1.0, 64.0, 631):
        if float(np.max((rs / rw**pi)[upper])) <= c_ref(pi):
            pi_min = float(pi)
            break
    ok = all(math.isfinite(v) for v in frontier.values())
    reports.append(
        AssumptionReport(
            "A3",
            ok,
            {"C_V_lambda": frontier, "pi_min": pi_min},
            note="C_V_lambda fitted per pi; pi_min is the smallest pi with fitted C <= (4 beta_+^2/beta_-^2)^(1+pi)",
        )
    )

    inv2 = lam**-2.0
    means = np.cumsum(inv2) / np.arange(1, lam.size + 1)
    c_lam = float(math.sqrt(np.min(means / inv2)))
    reports.append(AssumptionReport("A4", c_lam > 0, {"c_lambda": c_lam}, c_lam))

    ratios = np.array([math.fsum(gm) / math.fsum(gm**2) for gm in gammas])
    reports.append(
        AssumptionReport(
            "A5",
            bool(np.all(np.isfinite(ratios))),
            {"C_l1_l2": float(ratios.max()), "at_t_circ": float(ratios[0])},
            float(ratios.max()),
        )
    )

    lam_grid = np.geomspace(1.0, min(1e-3, float(lam[-1])), 400)
    viol, worst = _ratio_monotonicity(reg, t_grid, lam_grid)
    reports.append(AssumptionReport("R2", not viol, {}, worst, viol, warning=True))
    return reports


def karamata_check(
    spectrum: SpectralSequence,
    L: int,
    nu_minus: float,
    nu_plus: float,
    p: float,
    relations: Sequence[int] | None = None,
) -> AssumptionReport:
    """Evaluate the three one-sided Karamata relations for every admissible ``k``.

    1. ``sum_{j<=k} lam_j^-p / (k lam_k^-p) >= L^(-p/nu_-) (1 - 1/L)``, ``k <= D``
    2. ``sum_{j=k+1}^{Lk} lam_j^p / (k lam_k^p) >= (L-1) L^(-p/nu_-)``, ``k <= D/L``
    3. ``sum_{j=k}^{D} lam_j^p / (k lam_k^p) <= (L-1) / (1 - L^(1-p/nu_+))``, ``p > nu_+``

    With ``relations=None`` the third relation is skipped when ``p <= nu_+``;
    asking for it explicitly in that case is an error.
    """
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    if relations is None:
        relations = (1, 2, 3) if p > nu_plus else (1, 2)
    relations = tuple(relations)
    if 3 in relations and not p > nu_plus:
        raise ValueError(f"relation 3 needs p > nu_+ (p={p}, nu_+={nu_plus})")
    L = int(L)
    lam = spectrum.lambdas
    D = spectrum.D
    k = np.arange(1, D + 1)
    neg = lam**-p
    pos = lam**p
    S_pos = np.concatenate(([0.0], np.cumsum(pos)))
    slacks, viol = {}, []

    if 1 in relations:
        lhs = np.cumsum(neg) / (k * neg)
        rhs = L ** (-p / nu_minus) * (1.0 - 1.0 / L)
        s = lhs / rhs - 1.0
        slacks[1] = float(s.min())
        viol += [(1, int(v)) for v in k[s < -RTOL][:10]]
    if 2 in relations:
        kk = np.arange(1, D // L + 1)
        if kk.size:
            lhs = (S_pos[L * kk] - S_pos[kk]) / (kk * pos[kk - 1])
            rhs = (L - 1) * L ** (-p / nu_minus)
            s = lhs / rhs - 1.0
            slacks[2] = float(s.min())
            viol += [(2, int(v)) for v in kk[s < -RTOL][:10]]
    if 3 in relations:
        lhs = (S_pos[D] - S_pos[k - 1]) / (k * pos)
        rhs = (L - 1) / (1.0 - L ** (1.0 - p / nu_plus))
        s = 1.0 - lhs / rhs
        slacks[3] = float(s.min())
        viol += [(3, int(v)) for v in k[s < -RTOL][:10]]

    return AssumptionReport(
        "karamata",
        not viol,
        {"L": L, "nu_minus": nu_minus, "nu_plus": nu_plus, "p": p, "relations": list(relations), "slack": slacks},
        min(slacks.values()) if slacks else math.nan,
        viol,
    )


def variance_ordering_constants(
    reg: Regulariser, L: int, nu_minus: float, nu_plus: float, C_circ: float, D: int
) -> tuple[float, float]:
    """``(c_V, C_V)`` bounding the ratio of weak variance to rescaled strong variance.

    ``C_V = L^(1+2/nu_-) / (L-1) / beta_-^2``. The lower constant needs
    ``rho > 1 + nu_+/2``.
    """
    rho, bm, bp = reg.rho, reg.beta_minus, reg.beta_plus
    C_V = L ** (1.0 + 2.0 / nu_minus) / (L - 1) / bm**2
    if not rho > 1.0 + nu_plus / 2.0:
        raise ValueError(f"lower constant needs rho > 1 + nu_+/2 (rho={rho}, nu_+={nu_plus})")
    base = C_circ * math.sqrt(D) * (1.0 - L ** (1.0 - 2.0 * rho / nu_plus)) / ((L - 1) * bp)
    c_V = (
        min(1.0, base ** (1.0 / rho))
        * (1.0 - L ** (1.0 - (2.0 * rho - 2.0) / nu_plus))
        * bm**2
        / L ** (2.0 * (rho + 1.0) / nu_minus)
    )
    return c_V, C_V


def check_variance_ordering(
    reg: Regulariser,
    spectrum: SpectralSequence,
    delta: float,
    C_circ: float = math.sqrt(2),
    L: int = 2,
    t_grid=None,
) -> AssumptionReport:
    """Check ``c_V s^-2 V_t <= V_{t,lam} <= C_V s^-2 V_t`` with ``s = min(t, 1/lam_D)``."""
    s_rep = check_S(spectrum, L)
    if not s_rep.passed:
        return AssumptionReport("variance_ordering", False, note="spectral condition fails")
    nu_m, nu_p = s_rep.constants["nu_minus"], s_rep.constants["nu_plus"]
    c_V, C_V = variance_ordering_constants(reg, L, nu_m, nu_p, C_circ, spectrum.D)
    if t_grid is None:
        t_grid = default_t_grid(reg, spectrum, delta, C_circ, n=100)
    lam = spectrum.lambdas
    d2 = delta * delta
    worst, viol = math.inf, []
    for t in np.asarray(t_grid, dtype=float):
        gam = filter_vector(reg, t, spectrum)
        Vs = d2 * math.fsum(gam**2 / lam**2)
        Vw = d2 * math.fsum(gam**2)
        scaled = Vs / min(t, 1.0 / lam[-1]) ** 2
        lo, hi = c_V * scaled, C_V * scaled
        worst = min(worst, Vw / lo - 1.0, 1.0 - Vw / hi)
        if Vw < lo * (1 - RTOL) or Vw > hi * (1 + RTOL):
            viol.append((float(t), Vw, lo, hi))
    return AssumptionReport(
        "variance_ordering",
        not viol,
        {"c_V": c_V, "C_V": C_V, "L": L, "nu_minus": nu_m, "nu_plus": nu_p},
        worst,
        viol,
    )


def check_t_circ_floor(
    reg: Regulariser,
    spectrum: SpectralSequence,
    delta: float,
    C_circ: float = math.sqrt(2),
    L: int = 2,
) -> AssumptionReport:
    """Compare ``t_circ`` with the lower bound ``zeta / lam_1``.

    ``zeta = (C_circ sqrt(D) (1 - L^(1-2rho/nu_+)) / ((L-1) beta_+))^(1/(2 rho))``,
    defined when ``2 rho > nu_+``. Only the slack is reported; its
    tightness is not predicted.
    """
    s_rep = check_S(spectrum, L)
    if not s_rep.passed:
        return AssumptionReport("t_circ_floor", False, note="spectral condition fails")
    nu_p = s_rep.constants["nu_plus"]
    rho = reg.rho
    if not 2 * rho > nu_p:
        return AssumptionReport("t_circ_floor", False, note="needs 2 rho > nu_+")
    zeta = (
        C_circ * math.sqrt(spectrum.D) * (1.0 - L ** (1.0 - 2.0 * rho / nu_p)) / ((L - 1) * reg.beta_plus)
    ) ** (1.0 / (2.0 * rho))
    tc = t_circ(reg, spectrum, delta, C_circ)
    bound = zeta / spectrum.lambdas[0]
    return AssumptionReport(
        "t_circ_floor",
        tc >= bound * (1 - RTOL),
        {"zeta": zeta, "t_circ": tc, "bound": bound},
        tc / bound - 1.0,
    )


@dataclass
class TailReport:
    x: float
    N: int
    threshold: float
    frequency: float
    ucb: float
    bound: float
    passed: bool
    lower_threshold: float | None = None
    lower_frequency: float | None = None
    lower_ucb: float | None = None
    lower_passed: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def binomial_ucb(k: int, n: int, level: float = 0.95) -> float:
    """One-sided Clopper-Pearson upper confidence bound for a binomial rate."""
    if k >= n:
        return 1.0
    return float(stats.beta.ppf(level, k + 1, n - k))


def _chunks(N: int, D: int):
    rows = max(1, (1 << 21) // max(D, 1))
    start, c = 0, 0
    while start < N:
        n = min(rows, N - start)
        yield c, n
        start += n
        c += 1


def _max_partial_sums(weights: np.ndarray, shift: np.ndarray, N: int, seed: int, tag: str) -> np.ndarray:
    """``max_k sum_{i<=k} weights_i (eps_i^2 - 1) - shift_k`` per replication."""
    D = weights.size
    out = np.empty(N)
    pos = 0
    for c, n in _chunks(N, D):
        eps = stream(seed, tag, c).standard_normal((n, D))
        partial = np.cumsum(weights * (eps * eps - 1.0), axis=1) - shift
        out[pos : pos + n] = partial.max(axis=1)
        pos += n
    return out


def concentration_lm(a, x, N: int, seed: int):
    """Empirical tails of ``Z = max_k sum_{i<=k} a_i (Y_i^2 - 1)`` for standard normal ``Y``.

    Compares ``P(Z > 2|a| sqrt(x) + 2|a|_inf x)`` and ``P(Z < -2|a| sqrt(x))``
    against ``exp(-x)``; a tail passes when its 95% upper confidence bound
    is below ``exp(-x) + 0.01``. ``x`` may be a sequence, in which case the
    same samples serve every value and a list is returned.
    """
    a = np.asarray(a, dtype=float).ravel()
    if np.any(a < 0):
        raise ValueError("weights must be nonnegative")
    if N < 1000:
        raise ValueError(f"N must be at least 1000, got {N}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise ValueError("x must be positive")
    Z = _max_partial_sums(a, np.zeros(a.size), N, seed, "concentration_lm")
    na, ninf = float(np.linalg.norm(a)), float(a.max(initial=0.0))
    reports = []
    for xv in xs:
        up = 2 * na * math.sqrt(xv) + 2 * ninf * xv
        lo = -2 * na * math.sqrt(xv)
        k_up = int(np.count_nonzero(Z > up))
        k_lo = int(np.count_nonzero(Z < lo))
        bound = math.exp(-xv)
        ucb_up, ucb_lo = binomial_ucb(k_up, N), binomial_ucb(k_lo, N)
        reports.append(
            TailReport(
                x=float(xv),
                N=N,
                threshold=up,
                frequency=k_up / N,
                ucb=ucb_up,
                bound=bound,
                passed=ucb_up < bound + 0.01,
                lower_threshold=lo,
                lower_frequency=k_lo / N,
                lower_ucb=ucb_lo,
                lower_passed=ucb_lo < bound + 0.01,
            )
        )
    return reports if np.ndim(x) else reports[0]


def maxsum_drift_check(
    spectrum: SpectralSequence, omega: float, x=(1.0, 2.0, 4.0, 8.0), N: int = 10_000, seed: int = 0
) -> tuple[bool, list[TailReport]]:
    """Tail of ``max_{k>=1} sum_{i<=k} lam_i^-2 (eps_i^2 - 1 - omega)`` beyond ``x lam_{floor(x)^D}^-2``.

    The same samples serve all ``x``. Passes when the empirical tail is
    nonincreasing in ``x`` up to three binomial standard errors.
    """
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 1):
        raise ValueError("x must be at least 1")
    lam = spectrum.lambdas
    inv2 = lam**-2.0
    c_lam = math.sqrt(np.min(np.cumsum(inv2) / np.arange(1, lam.size + 1) / inv2))
    if not c_lam > 0:
        raise ValueError("spectrum fails the averaging condition A4")
    drift = omega * np.cumsum(inv2)
    S = _max_partial_sums(inv2, drift, N, seed, "maxsum_drift")
    reports = []
    for xv in xs:
        k_idx = min(int(math.floor(xv)), spectrum.D)
        thr = xv * inv2[k_idx - 1]
        k = int(np.count_nonzero(S > thr))
        reports.append(
            TailReport(x=float(xv), N=N, threshold=float(thr), frequency=k / N, ucb=binomial_ucb(k, N),
                       bound=math.nan, passed=True)
        )
    ok = True
    for r0, r1 in zip(reports[:-1], reports[1:]):
        se = math.sqrt((r0.frequency * (1 - r0.frequency) + r1.frequency * (1 - r1.frequency)) / N)
        if r1.frequency > r0.frequency + 3 * se:
            ok = r1.passed = False
    return ok, reports
