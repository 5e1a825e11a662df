import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from walshpen.spider import (ORIGIN, RaySpace, SpiderPoint, bridge_local_time, bridge_max, grid,
                             label_excursions, paths_to_rows, simulate_radial_with_local_time,
                             simulate_spider, spider_distance)

MU = RaySpace(np.array([0.3, 0.7]), ("a", "b"))


# --- ray space and points -------------------------------------------------

@pytest.mark.parametrize("w", [[0.5, 0.6], [1.0, 0.0], [-0.5, 1.5], [], [np.nan, 1.0]])
def test_ray_space_rejects_bad_weights(w):
    with pytest.raises(ValueError, match="^mu:"):
        RaySpace(np.array(w, dtype=float))


def test_ray_space_names_and_index():
    assert MU.index("b") == 1 and MU.index(0) == 0
    assert RaySpace.uniform(3).names == ("r0", "r1", "r2")
    with pytest.raises(KeyError):
        MU.index("c")
    with pytest.raises(ValueError):
        RaySpace(np.array([0.5, 0.5]), ("x", "x"))


def test_origin_identifies_rays():
    assert SpiderPoint(0.0, 0) == SpiderPoint(0.0, 1)
    assert hash(SpiderPoint(0.0, 0)) == hash(SpiderPoint(0.0, 1))
    assert SpiderPoint(1.0, 0) != SpiderPoint(1.0, 1)
    with pytest.raises(ValueError):
        SpiderPoint(-1.0, 0)


coords = st.tuples(st.floats(0, 10, allow_nan=False), st.integers(0, 2))


@given(coords, coords, coords)
def test_spider_distance_is_a_metric(a, b, c):
    p, q, r = (SpiderPoint(*v) for v in (a, b, c))
    assert spider_distance(p, q) == spider_distance(q, p)
    assert spider_distance(p, p) == 0
    assert spider_distance(p, r) <= spider_distance(p, q) + spider_distance(q, r) + 1e-9
    assert spider_distance(p, ORIGIN) == p.radius


# --- bridge primitives ----------------------------------------------------

def test_bridge_max_law():
    g = np.random.default_rng(0)
    u = g.random(20000)
    m = bridge_max(0.3, -0.2, 1.0, u)
    assert np.all(m >= 0.3)
    # P(M >= m) = exp(-2 (m - y0)(m - y1) / h)
    cdf = lambda v: 1 - np.exp(-2 * (v - 0.3) * (v + 0.2))
    assert stats.kstest(m, cdf).pvalue > 0.001


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 5), st.floats(1e-6, 1 - 1e-6))
def test_bridge_max_bounds(y0, y1, h, u):
    m = bridge_max(y0, y1, h, u)
    assert m >= max(y0, y1) - 1e-12


def test_bridge_local_time_atom():
    # the bridge from a to b > 0 avoids 0 with probability 1 - exp(-2ab/h)
    g = np.random.default_rng(1)
    ell = bridge_local_time(0.5, 0.8, 1.0, g.random(40000))
    p_zero = 1 - math.exp(-2 * 0.5 * 0.8)
    assert abs((ell == 0).mean() - p_zero) < 4 * math.sqrt(p_zero * (1 - p_zero) / ell.size)


def test_grid_pieces():
    t = grid((1.0, 4), (3.0, 1))
    assert np.allclose(t, [0, 0.25, 0.5, 0.75, 1.0, 3.0])


# --- simulation -----------------------------------------------------------

def test_radial_marginal_is_half_normal():
    _, X, L, _ = simulate_radial_with_local_time(0.0, 2.0, 1, 3, 20000)
    assert stats.kstest(X[:, -1], stats.halfnorm(scale=math.sqrt(2.0)).cdf).pvalue > 0.001
    # Levy: L_t has the law of the running maximum, also half-normal
    assert stats.kstest(L[:, -1], stats.halfnorm(scale=math.sqrt(2.0)).cdf).pvalue > 0.001


def test_radial_from_positive_start_no_local_time_before_hit():
    _, X, L, touched = simulate_radial_with_local_time(1.0, 0.5, 10, 4, 2000)
    assert np.all(L[~touched.any(axis=1)] == 0)
    assert np.all(X >= 0) and np.all(np.diff(L, axis=1) >= 0)


def test_spider_shapes_and_invariants():
    p = simulate_spider(MU, SpiderPoint(0.5, 1), 1.0, 20, 5, 300)
    assert p.X.shape == p.N.shape == p.L.shape == (300, 21)
    assert p.touched.shape == (300, 20)
    assert np.all(p.N[:, 0] == 1)
    # the ray changes only across a step that touched 0
    changed = p.N[:, 1:] != p.N[:, :-1]
    assert not np.any(changed & ~p.touched)
    # local time grows only across touching steps
    grew = np.diff(p.L, axis=1) > 0
    assert not np.any(grew & ~p.touched)


def test_spider_ray_law_after_zero():
    p = simulate_spider(MU, ORIGIN, 1.0, 1, 6, 20000)
    frac = (p.N[:, -1] == 0).mean()
    assert abs(frac - 0.3) < 4 * math.sqrt(0.21 / 20000)


def test_labels_respect_excursions():
    radial = np.array([[0.0, 0.5, 0.7, 0.0, 0.4]])
    touched = np.array([[True, False, True, False]])
    n = label_excursions(radial, touched, MU, np.random.default_rng(0), start_ray=1)
    assert n[0, 1] == n[0, 2]
    assert n[0, 3] == n[0, 4]  # a point at the origin carries the next label


def test_simulation_reproducible_and_worker_free():
    a = simulate_spider(MU, ORIGIN, 1.0, 4, 123, 5000, workers=1)
    b = simulate_spider(MU, ORIGIN, 1.0, 4, 123, 5000, workers=3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.N, b.N) and np.array_equal(a.L, b.L)


@given(st.integers(1, 9000))
@settings(max_examples=8, deadline=None)
def test_path_prefix_property(n):
    big = simulate_spider(MU, ORIGIN, 1.0, 2, 77, 9000)
    small = simulate_spider(MU, ORIGIN, 1.0, 2, 77, n)
    assert np.array_equal(small.X, big.X[:n])


def test_paths_helpers():
    p = simulate_spider(MU, ORIGIN, 2.0, 4, 8, 50)
    r = p.restrict(1.0)
    assert r.times[-1] == 1.0 and r.X.shape[1] == 3 and r.touched.shape[1] == 2
    X, N, L = p.at(1.5)
    assert np.array_equal(X, p.X[:, 3])
    with pytest.raises(ValueError):
        p.time_index(0.3)
    rows = list(paths_to_rows(p, MU, weights=np.ones(50)))
    assert len(rows) == 50 * 5 and len(rows[0]) == 7
    assert rows[0][3] in ("a", "b")
