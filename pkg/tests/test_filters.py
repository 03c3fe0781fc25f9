import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earlystop.filters import (
    KINDS,
    Regulariser,
    check_R3_envelope,
    filter_vector,
    g,
    landweber_discrete_index,
    log_one_minus_g,
    make_regulariser,
)
from earlystop.model import make_spectrum

from oracles import g_mp

REGS = [make_regulariser(k) for k in KINDS] + [make_regulariser("iterated_tikhonov", 2.0)]
reg_st = st.sampled_from(REGS)


def test_stored_constants():
    lw, tk, it, sw = (make_regulariser(k) for k in KINDS)
    assert (lw.beta_minus, lw.beta_plus, lw.qualification) == (0.5, 1.0, math.inf)
    assert (tk.beta_minus, tk.beta_plus, tk.qualification) == (0.5, 1.0, 1.0)
    assert (sw.beta_minus, sw.beta_plus, sw.qualification) == (0.5, 1.0, math.inf)
    it2 = make_regulariser("iterated_tikhonov", 2.0)
    assert (it2.beta_minus, it2.beta_plus) == (0.125, 0.25)
    for r in REGS:
        assert r.rho == 2.0 and r.beta_minus <= r.beta_plus
    with pytest.raises(TypeError):
        Regulariser("landweber", rho=3.0)
    with pytest.raises(ValueError):
        make_regulariser("cutoff")
    with pytest.raises(ValueError):
        make_regulariser("iterated_tikhonov", 0.0)


def test_examples():
    lw = make_regulariser("landweber")
    assert g(lw, 1.0, 0.5) == 0.25 == 1 - (1 - 0.25) ** 1
    assert g(make_regulariser("tikhonov"), 1.0, 1.0) == 0.5
    assert g(make_regulariser("showalter"), 0.0, 0.7) == 0.0
    sp = make_spectrum("explicit", values=[1.0, 2**-0.5])
    np.testing.assert_allclose(filter_vector(lw, math.sqrt(3), sp), [1.0, 0.875], rtol=1e-14)
    for r in REGS:
        assert np.all(filter_vector(r, 0.0, sp) == 0)
        const = filter_vector(r, 1.7, make_spectrum("explicit", values=[0.6] * 5))
        assert np.all(const == const[0])


def test_domain_errors():
    lw = make_regulariser("landweber")
    for lam in (0.0, -0.1, 1.0001):
        with pytest.raises(ValueError):
            g(lw, 1.0, lam)
    with pytest.raises(ValueError):
        g(lw, -1.0, 0.5)


@settings(max_examples=200)
@given(reg_st, st.floats(0, 50), st.floats(1e-3, 1.0))
def test_matches_reference_formula(reg, t, lam):
    ref = g_mp(reg.kind, t, lam, reg.alpha)
    assert math.isclose(g(reg, t, lam), ref, rel_tol=1e-12, abs_tol=1e-300)


@settings(max_examples=200)
@given(reg_st, st.floats(0, 100), st.floats(0, 100), st.floats(1e-3, 1), st.floats(1e-3, 1))
def test_monotone_in_t_and_lambda(reg, t1, t2, l1, l2):
    (ta, tb), (la, lb) = sorted((t1, t2)), sorted((l1, l2))
    assert g(reg, ta, la) <= g(reg, tb, la) + 1e-15
    assert g(reg, ta, la) <= g(reg, ta, lb) + 1e-15
    assert 0.0 <= g(reg, tb, lb) <= 1.0


@pytest.mark.parametrize("reg", REGS, ids=lambda r: r.name)
def test_limit_one(reg):
    lam = np.linspace(0.1, 1.0, 50)
    assert np.all(g(reg, 1e4, lam) >= 1 - 1e-6)


def test_landweber_continuity_at_one():
    lam = np.geomspace(1e-3, 1, 1000)
    lw = make_regulariser("landweber")
    left = g(lw, 1.0, lam)
    right = 1 - (1 - lam**2)
    np.testing.assert_allclose(left, right, rtol=0, atol=1e-15)
    np.testing.assert_allclose(g(lw, 1.0 + 1e-15, lam), left, rtol=0, atol=1e-14)


def test_large_t_is_exactly_one_near_lambda_one():
    lw = make_regulariser("landweber")
    assert g(lw, 1e5, 1.0) == 1.0
    assert log_one_minus_g(lw, 5.0, 1.0) == -math.inf


@pytest.mark.parametrize("reg", REGS, ids=lambda r: r.name)
def test_ratio_monotonicity_R2(reg):
    lam = np.geomspace(1.0, 1e-3, 300)
    ts = np.concatenate(([0.0], np.geomspace(1e-2, 1e3, 60)))
    for tp, t in zip(ts[:-1], ts[1:]):
        with np.errstate(invalid="ignore"):
            lr = log_one_minus_g(reg, tp, lam) - log_one_minus_g(reg, t, lam)
        lr = np.where(np.isneginf(log_one_minus_g(reg, t, lam)), np.inf, lr)
        # lam decreasing along the array, so the log-ratio must not increase
        finite = np.isfinite(lr[:-1])
        assert np.all(lr[1:][finite] <= lr[:-1][finite] + 1e-12 * (1 + np.abs(lr[:-1][finite])))


@pytest.mark.parametrize("reg", REGS, ids=lambda r: r.name)
def test_R3_envelope_holds(reg):
    t_grid = np.concatenate(([0.0], np.geomspace(1e-3, 1e3, 100)))
    rep = check_R3_envelope(reg, t_grid, np.geomspace(1e-3, 1, 100))
    assert rep.passed, rep.violations[:3]


def test_R3_envelope_tikhonov_example_and_t0():
    tk = make_regulariser("tikhonov")
    rep = check_R3_envelope(tk, np.geomspace(1e-2, 1e2, 100), np.geomspace(1e-2, 1, 100))
    assert rep.passed and rep.violations == []
    rep0 = check_R3_envelope(tk, [0.0], [0.3, 1.0])
    assert rep0.worst_lower_slack == 0 and rep0.worst_upper_slack == 0


def test_R3_envelope_iterated_tikhonov_small_alpha():
    # the stored lower constant alpha^-2/2 exceeds 1 when alpha < 1, so saturation breaks it
    it = make_regulariser("iterated_tikhonov", 0.5)
    assert it.beta_minus == 2.0
    rep = check_R3_envelope(it, [1e3], [1.0])
    assert not rep.passed
    assert check_R3_envelope(make_regulariser("iterated_tikhonov", 1.0), np.geomspace(1e-3, 1e3, 80),
                             np.geomspace(1e-3, 1, 80)).passed


def test_R3_envelope_wrong_constant_detected():
    lw = make_regulariser("landweber")
    rep = check_R3_envelope(lw, [3.0], [0.3], beta_minus=0.99)
    assert not rep.passed
    t, lam, val, lower, _ = rep.violations[0]
    assert math.isclose(val, 1 - 0.91**9, rel_tol=1e-12)
    assert math.isclose(lower, 0.99 * 0.81, rel_tol=1e-12)


def test_landweber_discrete_index():
    assert landweber_discrete_index(0.0) == 0
    assert landweber_discrete_index(math.sqrt(51)) == 51
    assert landweber_discrete_index(2.5) == 7
    assert landweber_discrete_index(math.sqrt(51) * (1 + 1e-6)) == 52


@given(st.integers(0, 10**6))
def test_discrete_index_inverts_sqrt(m):
    assert landweber_discrete_index(math.sqrt(m)) == m
