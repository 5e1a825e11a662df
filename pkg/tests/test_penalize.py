import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from walshpen import formulas as F
from walshpen import penalize as P
from walshpen.formulas import PenaltyParams
from walshpen.spider import RaySpace
from walshpen.suites import REGIME_PARAMS

MU = RaySpace(np.array([0.3, 0.7]))


@given(st.floats(-50, 50))
@settings(max_examples=30, deadline=None)
def test_self_normalization_scale_invariant(c):
    g = np.random.default_rng(0)
    v, lw = g.random(500), g.normal(size=500)
    a = P._weighted_mean(v, lw)
    b = P._weighted_mean(v, lw + c)
    assert a.estimate == pytest.approx(b.estimate, rel=1e-12)
    assert a.se == pytest.approx(b.se, rel=1e-10)


def test_log_R_matches_eval_R():
    p = PenaltyParams((0.5, -1.0), -0.3)
    for x, k, u in [(0.0, 0, 1.0), (0.7, 1, 3.0), (2.0, 0, 10.0)]:
        lr = P.log_R(MU, p, np.array([x]), np.array([k]), u)[0]
        assert math.exp(lr) == pytest.approx(F.eval_R(MU, p, x, k, u).value, rel=1e-12)


@pytest.mark.parametrize("regime", list(REGIME_PARAMS))
def test_limit_normalization(regime):
    est = P.limit_expectation(P.constant_one(1.0), MU, REGIME_PARAMS[regime], 100_000, 11, steps=1,
                              raise_unreliable=False)
    se = est.se if est.se > 0 else 1e-15
    assert abs(est.estimate - 1.0) <= 3 * se + 1e-12


def test_direct_and_markov_agree_at_small_t():
    p = PenaltyParams((0.5, -1.0), 0.2)
    f = [P.on_ray(1.0, 0), P.exp_minus_local_time(1.0)]
    d = P.penalized_expectation(f, 2.0, MU, p, 100_000, 21, method="direct", steps=4)
    m = P.penalized_expectation(f, 2.0, MU, p, 100_000, 22, method="markov", steps=4)
    for a, b in zip(d, m):
        assert abs(a.estimate - b.estimate) <= 4 * math.hypot(a.se, b.se)


def test_unreliable_estimate_raised():
    p = PenaltyParams((2.0, -1.0), -1.0)
    with pytest.raises(P.UnreliableEstimate) as exc:
        P.penalized_expectation(P.constant_one(1.0), 60.0, MU, p, 200, 3, method="direct", steps=1)
    assert exc.value.ess < P.MIN_ESS


def test_functional_validation():
    with pytest.raises(ValueError):
        P.PathFunctional(0.0, lambda p: np.ones(p.n_paths))
    bad = P.PathFunctional(1.0, lambda p: np.ones(3))
    with pytest.raises(ValueError):
        P.penalized_expectation(bad, 2.0, MU, PenaltyParams((0.0, 0.0), 0.0), 10, 1, steps=1)
    with pytest.raises(ValueError):
        P.penalized_expectation(P.constant_one(2.0), 1.0, MU, PenaltyParams((0.0, 0.0), 0.0), 10, 1)


def test_convergence_report_nullspider_rows_equal():
    rows = P.convergence_report([P.x_below(1.0, 1.0)], [2.0, 5.0], MU, PenaltyParams((0.0, 0.0), 0.0),
                                50_000, 4, steps=1)
    lim = rows[-1]
    assert math.isinf(lim["t"])
    for r in rows[:-1]:
        assert abs(r["estimate"] - lim["estimate"]) <= 4 * math.hypot(r["se"], lim["se"])


def test_convergence_report_bangbang_ray_law():
    p = PenaltyParams((0.0, -0.5), 1.0)
    rows = P.convergence_report([P.on_ray(1.0, 0)], [2.0], MU, p, 50_000, 5, steps=1)
    lim = rows[-1]
    assert abs(lim["estimate"] - 0.3) <= 3 * lim["se"]


def test_conditional_R_unbiased():
    p = PenaltyParams((-1.0, -2.0), -1.0)
    exact = F.eval_R(MU, p, 0.3, 1, 20.0).value
    est = P.conditional_R(MU, p, 0.3, 1, 20.0, 200_000, 9)
    assert abs(est.estimate - exact) <= 4 * est.se


def test_martingale_check_and_negative_control():
    p = REGIME_PARAMS[F.MAX_DRIFT]
    ok = P.martingale_check(MU, p, 1.0, 0.5, 50_000, 3, steps=1)
    assert all(r.passed for r in ok)
    bad = P.martingale_check(MU, p, 1.0, 1.0, 50_000, 3, steps=1, corrupt=True, threshold=5.0)
    assert all(r.negative_control for r in bad)
    assert any(not r.passed for r in bad)


def test_corrupted_M_differs():
    for tag, p in REGIME_PARAMS.items():
        reg = F.classify_regime(MU, p)
        bad = P.corrupted_M(MU, p, reg)
        diffs = [not np.isclose(float(bad(1.5, 0.8, k, 0.4)), float(F.eval_M(MU, p, 1.5, 0.8, k, 0.4, reg)))
                 for k in (0, 1)]
        assert any(diffs), tag


def test_exact_oracle_known_limits():
    from walshpen.suites import exact_penalized

    p = REGIME_PARAMS[F.NULL_SPIDER]
    assert exact_penalized(MU, p, 0, 1.0, None) == pytest.approx(0.3, abs=1e-8)
    assert exact_penalized(MU, p, 2, 1.0, None) == pytest.approx(math.erf(1 / math.sqrt(2)), abs=1e-8)
    # bang-bang rays are mu-distributed in the limit, and t = 40 is close to it
    bb = REGIME_PARAMS[F.BANG_BANG]
    assert exact_penalized(MU, bb, 0, 1.0, 40.0) == pytest.approx(0.3, abs=1e-4)
