"""The twelve acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are collected into an
``acceptance criteria`` section at the end of the pytest run.
"""
import json
import math
import time

import numpy as np
import pytest

from earlystop.analytics import (
    balanced_oracle,
    bias_variance,
    l1_l2_ratio,
    oracle_proxy,
    t_circ,
)
from earlystop.cli import main
from earlystop.diagnostics import check_S, check_variance_ordering, concentration_lm, karamata_check
from earlystop.experiments import rate_study
from earlystop.filters import KINDS, filter_vector, landweber_discrete_index, make_regulariser
from earlystop.model import NoiseSpec, make_signal, make_spectrum, observe
from earlystop.rng import derive_seed, stream
from earlystop.stopping import estimate, kappa_default, stop_tau, weak_norm_sq

LW = make_regulariser("landweber")
D_REF, DELTA_REF = 10_000, 0.01


@pytest.fixture(scope="module")
def reference_spectrum():
    return make_spectrum("polynomial", D_REF, nu=2)


def test_c01_t_circ_index(criterion, reference_spectrum):
    start = time.perf_counter()
    tc = t_circ(LW, reference_spectrum, DELTA_REF, math.sqrt(2))
    m = landweber_discrete_index(tc)
    elapsed = time.perf_counter() - start
    criterion(1, "t_circ Landweber index", m == 51 and elapsed < 1,
              f"index={m} (target 51), t_circ={tc:.6g}, {elapsed:.2f}s")


def test_c02_kappa(criterion):
    k = kappa_default(D_REF, DELTA_REF)
    criterion(2, "kappa = D delta^2", k == 1.0, f"kappa={k!r}")


def test_c03_l1_l2_ratio(criterion, reference_spectrum):
    start = time.perf_counter()
    tc = t_circ(LW, reference_spectrum, DELTA_REF, math.sqrt(2))
    r = l1_l2_ratio(LW, tc, reference_spectrum)
    elapsed = time.perf_counter() - start
    criterion(3, "l1/l2 ratio at t_circ", 1.03 <= r <= 1.07 and elapsed < 1,
              f"ratio={r:.5f} (target [1.03, 1.07]), {elapsed:.2f}s")


def test_c04_weak_distance_to_proxy(criterion):
    D, delta, N = 500, 0.05, 2000
    spec = make_spectrum("polynomial", D, nu=2)
    kappa = kappa_default(D, delta)
    tc = t_circ(LW, spec, delta, math.sqrt(2))
    signals = {
        "spike": make_signal("spike", D, i0=1),
        "poly_decay": make_signal("poly_decay", D, s=1),
        "sobolev_random": make_signal("sobolev_random", D, beta=1, seed=0),
    }
    start = time.perf_counter()
    ok, parts = True, []
    # with t0 = t_circ every family stops at the floor at this scale, so t0 = 0 is the informative case
    for t0 in (0.0, tc):
        for name, sig in signals.items():
            t_star = oracle_proxy(LW, spec, sig, delta, kappa, t0)
            wb = bias_variance(LW, t_star, spec, sig, delta).weak_bias_sq
            bound = math.sqrt(2 * D * delta**4 + 4 * delta**2 * wb)
            d = np.empty(N)
            for r in range(N):
                obs = observe(spec, sig, NoiseSpec(delta), derive_seed(0, "acceptance_prop1", r))
                tau = stop_tau(LW, spec, obs, kappa, t0).tau
                diff = estimate(LW, tau, spec, obs).mu - estimate(LW, t_star, spec, obs).mu
                d[r] = weak_norm_sq(diff, spec)
            mean, se = d.mean(), d.std(ddof=1) / math.sqrt(N)
            ok &= mean <= bound + 3 * se
            parts.append(f"t0={t0:.3g} {name}: {mean:.3g} <= {bound:.3g}+3*{se:.2g}")
    elapsed = time.perf_counter() - start
    criterion(4, "weak distance tau vs t*", ok and elapsed < 30, "; ".join(parts) + f", {elapsed:.1f}s")


def test_c05_residual_unbiasedness(criterion):
    D, delta, N = 200, 0.05, 5000
    spec = make_spectrum("polynomial", D, nu=2)
    sig = make_signal("poly_decay", D, s=1)
    start = time.perf_counter()
    y = np.stack([observe(spec, sig, NoiseSpec(delta), derive_seed(0, "acceptance_residual", r)).y
                  for r in range(N)])
    tc = t_circ(LW, spec, delta, math.sqrt(2))
    ok, parts = True, []
    for t in tc * np.array([0.5, 1.0, 2.0, 5.0, 20.0]):
        one_m = (1.0 - filter_vector(LW, t, spec)) ** 2
        vals = (y**2) @ one_m - delta**2 * math.fsum(one_m)
        target = bias_variance(LW, t, spec, sig, delta).weak_bias_sq
        z = abs(vals.mean() - target) / (vals.std(ddof=1) / math.sqrt(N))
        ok &= z <= 3
        parts.append(f"t={t:.3g} z={z:.2f}")
    elapsed = time.perf_counter() - start
    criterion(5, "residual unbiasedness", ok and elapsed < 10, ", ".join(parts) + f", {elapsed:.1f}s")


def test_c06_balanced_oracle_factor_two(criterion):
    rng = stream(0, "acceptance_balanced")
    start = time.perf_counter()
    worst, ok = 0.0, True
    for _ in range(20):
        reg = make_regulariser(KINDS[rng.integers(len(KINDS))], float(rng.uniform(0.5, 2.0)))
        D = int(rng.integers(20, 400))
        spec = make_spectrum("polynomial", D, nu=float(rng.uniform(0.5, 3.0)), c=float(rng.uniform(0.3, 1.0)))
        sig = make_signal("poly_decay", D, s=float(rng.uniform(0.5, 2.5)))
        delta = float(10 ** rng.uniform(-3, -1))
        t0 = 0.0
        tw = balanced_oracle(reg, spec, sig, delta, t0, "weak")
        at_tw = bias_variance(reg, tw, spec, sig, delta).mise("weak")
        hi = 100 * max(tw, 1 / spec.lambdas[-1])
        grid = np.concatenate([[t0], np.geomspace(1e-4 / spec.lambdas[0], hi, 400)])
        best = min(bias_variance(reg, t, spec, sig, delta).mise("weak") for t in grid)
        worst = max(worst, at_tw / best)
        ok &= at_tw <= 2 * best * (1 + 1e-12)
    elapsed = time.perf_counter() - start
    criterion(6, "balanced oracle factor 2", ok and elapsed < 5, f"worst ratio={worst:.4f}, {elapsed:.1f}s")


def test_c07_variance_ordering(criterion):
    start = time.perf_counter()
    ok, parts = True, []
    for nu in (1.0, 1.5):
        spec = make_spectrum("polynomial", 1000, nu=nu)
        for kind in KINDS:
            rep = check_variance_ordering(make_regulariser(kind), spec, 0.01)
            ok &= rep.passed
            parts.append(f"{kind}/nu={nu}:{'ok' if rep.passed else 'fail'}")
    elapsed = time.perf_counter() - start
    criterion(7, "variance ordering constants", ok and elapsed < 5, " ".join(parts) + f", {elapsed:.1f}s")


def test_c08_karamata(criterion):
    start = time.perf_counter()
    ok, parts = True, []
    for nu in (1.0, 2.0):
        spec = make_spectrum("polynomial", 2000, nu=nu)
        for L in (2, 3):
            s = check_S(spec, L)
            nm, npl = s.constants["nu_minus"], s.constants["nu_plus"]
            for p in (2.0, npl + 0.5):
                rep = karamata_check(spec, L, nm, npl, p)
                ok &= s.passed and rep.passed
                parts.append(f"nu={nu:g},L={L},p={p:g}:{rep.constants['relations']}")
    elapsed = time.perf_counter() - start
    criterion(8, "Karamata relations", ok and elapsed < 2, " ".join(parts) + f", {elapsed:.2f}s")


def test_c09_laurent_massart(criterion):
    spec = make_spectrum("polynomial", 100, nu=2)
    weights = {"uniform": np.full(100, 0.01), "inverse_lambda_sq": spec.lambdas**-2.0}
    start = time.perf_counter()
    ok, parts = True, []
    for name, a in weights.items():
        for tail in concentration_lm(a, [1.0, 2.0, 4.0], 100_000, seed=0):
            ok &= tail.passed
            parts.append(f"{name},x={tail.x:g}: ucb={tail.ucb:.4f}<{tail.bound + 0.01:.4f}")
    elapsed = time.perf_counter() - start
    criterion(9, "Laurent-Massart tails", ok and elapsed < 20, "; ".join(parts) + f", {elapsed:.1f}s")


def test_c10_rate_slope(criterion):
    start = time.perf_counter()
    res = rate_study(LW, 0.5, 1, 1.0, 1.0, [0.1, 0.05, 0.025, 0.0125], 50, seed=0)
    elapsed = time.perf_counter() - start
    ok = abs(res.slope - res.exponent) <= 0.15 and elapsed < 180
    criterion(10, "rate study slope", ok,
              f"slope={res.slope:.4f}, exponent={res.exponent:.4f}, D={list(res.dimensions)}, {elapsed:.1f}s")


def test_c11_determinism_across_widths(criterion, tmp_path):
    cfg = tmp_path / "mc.json"
    cfg.write_text(json.dumps({"D": 200, "delta": 0.05, "replications": 64, "seed": 12345,
                               "signal": {"kind": "sobolev_random", "beta": 1, "seed": 4}}))
    start = time.perf_counter()
    codes = [main(["mc", "--config", str(cfg), "--out", str(tmp_path / f"w{w}"), "--width", str(w), "--quiet"])
             for w in (1, 8)]
    a, b = ((tmp_path / f"w{w}" / "runs.csv").read_bytes() for w in (1, 8))
    elapsed = time.perf_counter() - start
    rows = len(a.splitlines()) - 1
    criterion(11, "runs.csv identical, widths 1 and 8", codes == [0, 0] and a == b and elapsed < 10,
              f"{rows} rows, {elapsed:.1f}s")


def test_c12_counterexample(criterion):
    D, delta = 500, 1e-3
    spec = make_spectrum("polynomial", D, nu=2)
    assert spec.lambdas[0] == 1.0
    tk = make_regulariser("tikhonov")
    sig = make_signal("spike", D, i0=1)
    start = time.perf_counter()
    tw = balanced_oracle(tk, spec, sig, delta, 0.0, "weak")
    ts = balanced_oracle(tk, spec, sig, delta, 0.0, "strong")
    elapsed = time.perf_counter() - start
    criterion(12, "spike counterexample t_w > t_s", tw > ts and elapsed < 1,
              f"t_w={tw:.6g}, t_s={ts:.6g}, {elapsed:.2f}s")
