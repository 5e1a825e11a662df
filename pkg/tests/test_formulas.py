import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate, stats

from walshpen import formulas as F
from walshpen.formulas import PenaltyParams
from walshpen.spider import RaySpace

HALF = RaySpace(np.array([0.5, 0.5]))
MU = RaySpace(np.array([0.3, 0.7]))

# exponents are either 0 or bounded away from it: several closed forms have
# 1/beta^2 factors and the case tables switch rows at 0
betas = st.one_of(st.just(0.0), st.floats(1e-3, 3), st.floats(-3, -1e-3))
xs = st.floats(0, 5, allow_nan=False)
ts = st.floats(0.5, 100, allow_nan=False)


# --- J and its majorant ---------------------------------------------------

def test_J_examples():
    assert F.eval_J(0.0, 1.0, 1.0).value == pytest.approx(2 * stats.norm.cdf(1) - 1, rel=1e-12)
    assert F.eval_J(0.7, 0.0, 3.0).value == 0.0
    assert F.eval_J(0.0, 1.0, 1.0).kind == F.EXACT
    lhs = F.eval_J_quadrature(1.0, 1.0, 2.0).value
    rhs = F.eval_J(-1.0, 1.0, 2.0).value + 2 * math.sinh(1.0) * math.e
    assert lhs == pytest.approx(rhs, rel=1e-8)


@given(betas, xs, ts)
@settings(max_examples=60, deadline=None)
def test_J_matches_quadrature(b, x, t):
    assume(b * b * t / 2 + abs(b) * x < 300)
    q = F.eval_J_quadrature(b, x, t).value
    assume(q > 1e-280)
    assert F.eval_J(b, x, t).value == pytest.approx(q, rel=1e-8)


@given(betas, xs, ts)
@settings(max_examples=80, deadline=None)
def test_L_dominates_J(b, x, t):
    assume(b * b * t / 2 < 600)
    J = F.eval_J(b, x, t).value
    L = F.eval_L_majorant(b, x, t).value
    assert J <= L * (1 + 1e-12) + 1e-300


def test_L_examples():
    assert F.eval_L_majorant(0.0, 2.0, 4.0).value == pytest.approx(math.sqrt(2 / (4 * math.pi)) * 2,
                                                                   rel=1e-12)
    assert F.eval_L_majorant(-1.0, 0.0, 1.0).value == 0.0
    assert F.eval_L_majorant(1.0, 1.0, 2.0).value == pytest.approx(
        math.sqrt(2 / (8 * math.pi)) + 2 * math.sinh(1) * math.e, rel=1e-12)
    assert F.eval_L_majorant(1.0, 1.0, 2.0).kind == F.MAJORANT


def test_vectorized_J_agrees_with_scalar():
    b = np.array([-2.0, 0.0, 1.5])
    x = np.array([0.3, 1.0, 2.0])
    v = F.eval_J(b, x, 2.0).value
    assert np.allclose(v, [F.eval_J(bb, xx, 2.0).value for bb, xx in zip(b, x)], rtol=1e-14)


@pytest.mark.parametrize("bad", [dict(x=-1.0), dict(t=0.0), dict(beta=math.nan)])
def test_J_rejects_bad_input(bad):
    args = dict(beta=0.0, x=1.0, t=1.0) | bad
    with pytest.raises(ValueError):
        F.eval_J(**args)


# --- law of (|Y_t|, L_t) ---------------------------------------------------

def test_density_total_mass():
    m0, _ = integrate.quad(lambda z: F.density_L_plus_X(z, 0.0, 1.3), 0, np.inf, epsabs=1e-13)
    assert m0 == pytest.approx(1.0, abs=1e-8)
    m1, _ = integrate.quad(lambda z: F.density_L_plus_X(z, 0.8, 2.0), 0, np.inf, epsabs=1e-13)
    assert m1 == pytest.approx(2 * (1 - stats.norm.cdf(0.8 / math.sqrt(2.0))), abs=1e-8)
    assert F.hit_probability(0.8, 2.0) == pytest.approx(m1, abs=1e-8)
    assert F.density_L_plus_X(0.0, 0.4, 1.0) == 0.0


def test_cdf_matches_density():
    z = 1.7
    q, _ = integrate.quad(lambda v: F.density_L_plus_X(v, 0.5, 1.5), 0, z, epsabs=1e-13)
    assert F.cdf_L_plus_X(z, 0.5, 1.5) == pytest.approx(q, abs=1e-10)


def test_joint_density_consistency():
    x, t, z = 0.4, 1.2, 1.1
    # integrate along the line y + l = z
    line, _ = integrate.quad(lambda y: F.joint_density_XL(y, z - y, x, t), 0, z, epsabs=1e-13)
    assert line == pytest.approx(F.density_L_plus_X(z, x, t), rel=1e-8)
    assert F.joint_density_XL(0.3, 0.5, 0.9, 1.0) == pytest.approx(F.joint_density_XL(0.9, 0.5, 0.3, 1.0))


def test_joint_marginal_plus_atom_is_half_normal():
    t, y = 1.0, 0.7
    cont, _ = integrate.quad(lambda l: F.joint_density_XL(y, l, 0.0, t), 0, np.inf, epsabs=1e-13)
    assert cont == pytest.approx(2 * stats.norm.pdf(y, scale=math.sqrt(t)), rel=1e-6)


# --- I and K --------------------------------------------------------------

def test_I_examples():
    assert F.eval_I(0.0, 0.0, 0.0, 3.0).value == pytest.approx(1.0, rel=1e-14)
    assert F.eval_I(0.0, 0.0, 1.0, 1.0).value == pytest.approx(2 * (1 - stats.norm.cdf(1)), rel=1e-12)


@given(betas, betas, xs, st.floats(0.5, 60))
@settings(max_examples=60, deadline=None)
def test_I_matches_quadrature(b, g, x, t):
    m = max(b, g, 0.0)
    assume(m * m * t / 2 + m * x < 300)
    q = F.eval_I_quadrature(b, g, x, t).value
    assume(q > 1e-250)
    assert F.eval_I(b, g, x, t).value == pytest.approx(q, rel=1e-8)


def test_I_equal_exponents_continuous():
    a = F.eval_I(0.7, 0.7, 0.5, 2.0).value
    b = F.eval_I(0.7 + 1e-7, 0.7, 0.5, 2.0).value
    assert a == pytest.approx(b, rel=1e-6)


@given(betas, betas, xs, ts)
@settings(max_examples=100, deadline=None)
def test_K_dominates_I(b, g, x, t):
    assume(max(b, g, 0) ** 2 * t / 2 < 600)
    I = F.eval_I(b, g, x, t).value
    K = F.eval_K(b, g, x, t).value
    assert I <= K * (1 + 1e-12)


def test_K_examples():
    assert F.eval_K(0.0, 0.0, 1.0, 1.0).value == 1.0
    assert F.eval_K(-1.0, -1.0, 1.0, 1.0).value == pytest.approx(math.sqrt(2 / math.pi) * 3, rel=1e-12)
    K = F.eval_K(-1.0, -2.0, 0.0, 100.0).value
    I = F.eval_I_quadrature(-1.0, -2.0, 0.0, 100.0).value
    assert K >= I and abs(K / I - 1) < 0.05


@pytest.mark.parametrize("b,g,row", [(-1, -1, 1), (0, -1, 2), (-1, 0, 3), (0, 0, 4), (1, 0.5, 5),
                                     (0.5, -1, 5), (-1, 1, 6), (0.2, 0.8, 6), (1, 1, 7)])
def test_k_rows(b, g, row):
    assert F.k_row(b, g) == row


# --- Q, R, regimes and M --------------------------------------------------

def test_Q_examples():
    p = PenaltyParams((-1.0, -2.0), -1.0)
    q0 = F.eval_Q(HALF, p, 0.0, 0, 5.0).value
    assert q0 == pytest.approx(sum(0.5 * F.eval_K(a, -1.0, 0.0, 5.0).value for a in (-1.0, -2.0)))
    one = RaySpace(np.array([1.0]))
    for x, t in [(0.0, 1.0), (1.3, 2.0), (4.0, 50.0)]:
        assert F.eval_Q(one, PenaltyParams((0.0,), 0.0), x, 0, t).value == pytest.approx(
            1 + math.sqrt(2 / (math.pi * t)) * x, rel=1e-12)


small = st.one_of(st.just(0.0), st.floats(1e-3, 0.6), st.floats(-2, -1e-3))


@given(small, small, small, xs, st.integers(0, 1), st.floats(0.5, 40))
@settings(max_examples=60, deadline=None)
def test_R_below_Q(a0, a1, g, x, k, t):
    p = PenaltyParams((a0, a1), g)
    R = F.eval_R(MU, p, x, k, t).value
    Q = F.eval_Q(MU, p, x, k, t).value
    assert R <= Q * (1 + 1e-12)


def test_R_trivial_cases():
    assert F.eval_R(MU, PenaltyParams((0.0, 0.0), 0.0), 0.7, 1, 3.0).value == pytest.approx(1.0, rel=1e-12)


def test_regime_examples():
    assert F.classify_regime(HALF, PenaltyParams((-1.0, -2.0), 0.0)).tag == F.NULL_SPIDER
    r = F.classify_regime(HALF, PenaltyParams((1.0, 1.0), 0.0))
    assert r.tag == F.MAX_DRIFT and set(r.argmax_set) == {0, 1}
    one = RaySpace(np.array([1.0]))
    assert F.classify_regime(one, PenaltyParams((0.5,), 0.5)).tag == F.BANG_BANG
    r = F.classify_regime(HALF, PenaltyParams((-1.0, -1.0), -1.0))
    assert r.tag == F.ALL_NEGATIVE and np.allclose(r.theta, [1.0, 1.0])


@given(st.lists(betas, min_size=1, max_size=4), betas)
@settings(max_examples=150, deadline=None)
def test_exactly_one_regime(alpha, g):
    rs = RaySpace.uniform(len(alpha))
    reg = F.classify_regime(rs, PenaltyParams(tuple(alpha), g))
    assert reg.tag in F.REGIMES
    if reg.tag in (F.FLAT_RAYS, F.ALL_NEGATIVE):
        assert float(np.dot(rs.weights, reg.theta)) == pytest.approx(abs(g), rel=1e-10)


def test_params_validation():
    with pytest.raises(ValueError, match="^alpha"):
        PenaltyParams((0.0, 1.0, 2.0), 0.0).check(HALF)
    with pytest.raises(ValueError):
        PenaltyParams((math.inf, 0.0), 0.0)


def test_M_examples():
    rng = np.random.default_rng(3)
    p = PenaltyParams((-1.0, -2.0), 0.0)
    s, x, l = rng.uniform(0, 5, 10), rng.uniform(0, 5, 10), rng.uniform(0, 5, 10)
    assert np.allclose(F.eval_M(MU, p, s, x, 1, l), 1.0)
    for alpha, g in [((0.0, -0.5), 1.0), ((1.0, -1.0), 0.25), ((0.0, -1.0), -1.0), ((-1.0, -2.0), -1.0)]:
        assert float(F.eval_M(MU, PenaltyParams(alpha, g), 0.0, 0.0, 0, 0.0)) == pytest.approx(1.0)
    pa = PenaltyParams((-1.0, -1.0), -1.0)
    assert float(F.eval_M(HALF, pa, 2.0, 0.7, 1, 0.4)) == pytest.approx(math.exp(-0.4) * 1.7)


def test_Q_asymptotic_examples():
    p = PenaltyParams((0.0, -1.0), 0.0)
    for x, k in [(0.0, 0), (1.0, 1)]:
        assert F.eval_Q_asymptotic(MU, p, x, k, 1e4).value == pytest.approx(0.3)
    pn = PenaltyParams((-1.0, -2.0), 0.0)
    u = 400.0
    assert F.eval_Q_asymptotic(MU, pn, 0.5, 0, u).value == pytest.approx(
        math.sqrt(2 / (math.pi * u)) * (0.3 / 1 + 0.7 / 2))


def _draw(regime, g):
    # positive exponents stay below 0.35 so that exp(u e^2 / 2) is finite at u = 1e4
    if regime == F.BANG_BANG:
        gam = g.uniform(0.1, 0.35)
        return (gam - g.uniform(0, 1), gam - g.uniform(0, 1)), gam
    if regime == F.MAX_DRIFT:
        a = g.uniform(0.1, 0.35)
        return (a, a - g.uniform(0.2, 2)), g.uniform(-1, a - 0.05)
    if regime == F.NULL_SPIDER:
        return (-g.uniform(0.3, 2), -g.uniform(0.3, 2)), 0.0
    if regime == F.FLAT_RAYS:
        return (0.0, -g.uniform(0.3, 2)), -g.uniform(0.3, 2)
    return (-g.uniform(0.3, 2), -g.uniform(0.3, 2)), -g.uniform(0.3, 2)


@pytest.mark.parametrize("regime", F.REGIMES)
def test_Q_over_asymptotic_tends_to_one(regime):
    g = np.random.default_rng(17)
    for _ in range(5):
        alpha, gam = _draw(regime, g)
        p = PenaltyParams(alpha, gam)
        assert F.classify_regime(MU, p).tag == regime
        x, k = g.uniform(0, 2), int(g.integers(0, 2))
        errs = [abs(F.eval_Q(MU, p, x, k, u).value / F.eval_Q_asymptotic(MU, p, x, k, u).value - 1)
                for u in (1e2, 1e3, 1e4)]
        assert errs[2] < 0.05
        assert errs[2] <= errs[0] + 1e-12


def test_return_probability():
    assert F.eval_return_prob(1.0, 0.0) == pytest.approx(1.0)
    assert F.eval_return_prob(1.0, 1.0) == pytest.approx(math.exp(-1) / math.cosh(1), rel=1e-12)
    with pytest.raises(ValueError):
        F.eval_return_prob(0.0, 1.0)


def test_M_ray_law_worked_example():
    law = F.m_ray_law(HALF, PenaltyParams((-1.0, -2.0), -1.0))
    assert np.allclose(law, [7 / 11, 4 / 11], atol=1e-12)
    law = F.m_ray_law(MU, PenaltyParams((0.0, -2.0), -1.0))
    assert np.allclose(law, [1.0, 0.0])
