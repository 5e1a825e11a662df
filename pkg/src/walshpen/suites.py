"""Named verification suites.

Each suite is a function ``(seed, workers=1, scale=1.0) -> list[TestReport]``.
``scale`` multiplies every Monte Carlo sample size (use < 1 for smoke runs;
the documented sizes correspond to ``scale=1``). Sub-experiments draw from
``Streams(seed).child(tag)`` so adding a case never shifts another one.
"""

from __future__ import annotations

import io
import math
from typing import Callable

import numpy as np
from scipy import integrate, special, stats as sps

from walshpen import formulas as F
from walshpen import penalize as P
from walshpen.formulas import PenaltyParams
from walshpen.formulas import m_ray_law
from walshpen.limits import (LimitLawSpec, sample_bangbang, sample_M_ray, sample_maxdrift_weighted,
                             sample_negative_gamma)
from walshpen.rng import Streams
from walshpen.spider import (RaySpace, SpiderPoint, grid, simulate_radial_with_local_time,
                             simulate_spider)
from walshpen.stats import (TestReport, chi_square_rays, independence_check, ks_one_sample,
                            ks_two_sample, make_report, tolerance_report, write_reports, z_report)

AUX_Z = 4.0  # z threshold for extra cross-checks (many of them per suite)

MU = RaySpace(np.array([0.3, 0.7]), ("a", "b"))

# one parameter set per regime, shared by the martingale, convergence and PDE suites
REGIME_PARAMS = {
    F.BANG_BANG: PenaltyParams((0.0, -0.5), 1.0),
    F.MAX_DRIFT: PenaltyParams((1.0, -1.0), 0.25),
    F.NULL_SPIDER: PenaltyParams((-1.0, -2.0), 0.0),
    F.FLAT_RAYS: PenaltyParams((0.0, -1.0), -1.0),
    F.ALL_NEGATIVE: PenaltyParams((-1.0, -2.0), -1.0),
}


def _n(n, scale):
    return max(200, int(round(n * scale)))


# --------------------------------------------------------------------------
# 1. law of (|Y_t|, L_t)


def suite_lemma(seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    st = Streams(seed)
    out = []
    n = _n(10_000, scale)
    t = 1.0
    for j, x0 in enumerate((0.0, 0.5)):
        sub = st.child(10 + j)
        _, X, L, _ = simulate_radial_with_local_time(x0, t, 1, sub, n, workers=workers)
        X, L = X[:, -1], L[:, -1]
        hit = L > 0
        z = L[hit] + X[hit]
        theta = X[hit] / z
        tag = f"x={x0:g},t={t:g}"
        out.append(ks_one_sample(theta, lambda u: np.clip(u, 0, 1), name=f"C1a Theta uniform [{tag}]",
                                 seed=sub.seed))
        out.append(independence_check(theta, z, name=f"C1b Theta indep of L+X [{tag}]", seed=sub.seed))
        mass = F.hit_probability(x0, t)
        out.append(ks_one_sample(z, lambda v: F.cdf_L_plus_X(v, x0, t) / mass,
                                 name=f"C1c L+X density [{tag}]", seed=sub.seed))
        # the defective total mass equals the hitting probability, by quadrature
        q, _ = integrate.quad(lambda v: F.density_L_plus_X(v, x0, t), 0, np.inf, epsabs=1e-13,
                              epsrel=1e-12)
        out.append(tolerance_report(f"C1c density mass = P(T<=t) [{tag}]", q, mass, 1e-8))
        out.append(independence_check(X, L, name=f"C1 neg: X_t indep of L_t [{tag}]",
                                      seed=sub.seed, negative_control=True))
        out.append(ks_one_sample(theta ** 2, lambda u: np.clip(u, 0, 1),
                                 name=f"C1 neg: Theta^2 uniform [{tag}]", seed=sub.seed,
                                 negative_control=True))
    return out


# --------------------------------------------------------------------------
# 2. closed forms against quadrature and Monte Carlo

I_MC_POINTS = [  # (beta, gamma, x, t); K rows 1..7
    (-1.0, -2.0, 0.5, 50.0), (-0.5, -1.0, 0.0, 2.0), (-2.0, -0.5, 2.0, 4.0),
    (0.0, -1.0, 1.0, 1.0),
    (-1.0, 0.0, 0.3, 2.0),
    (0.0, 0.0, 1.0, 1.0),
    (1.0, 0.5, 0.3, 2.0), (0.5, -1.0, 0.0, 1.0),
    (-1.0, 1.0, 0.5, 1.0), (0.2, 0.8, 0.0, 1.5),
    (0.5, 0.5, 1.0, 1.0), (1.0, 1.0, 0.0, 1.0),
]


def formula_grid(seed: int, n: int = 200):
    g = Streams(seed).generator(8, 424242)
    beta = np.round(g.uniform(-3, 3, n), 3)
    x = np.round(g.uniform(0, 5, n), 3)
    t = np.round(np.exp(g.uniform(np.log(0.5), np.log(200), n)), 3)
    return beta, x, t


def suite_formulas(seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    st = Streams(seed)
    out = []
    beta, x, t = formula_grid(seed)
    # keep the exponent of the integrand representable
    ok = beta * beta * t / 2 + abs(beta) * x < 600
    beta, x, t = beta[ok], x[ok], t[ok]
    closed = F.eval_J(beta, x, t).value
    quad = np.array([F.eval_J_quadrature(b, xx, tt).value for b, xx, tt in zip(beta, x, t)])
    nz = quad > 0
    err = np.max(np.abs(closed[nz] / quad[nz] - 1.0))
    out.append(make_report(f"C2 J closed form vs quadrature ({nz.sum()} points)", err, 1e-8, "x<=",
                           int(nz.sum()), seed))
    pos = (beta > 0) & (x > 0)
    worst = 0.0
    for b, xx, tt in zip(beta[pos], x[pos], t[pos]):
        lhs = F.eval_J_quadrature(b, xx, tt).value - F.eval_J(-b, xx, tt).value
        rhs = 2.0 * math.sinh(b * xx) * math.exp(tt * b * b / 2.0)
        scale_ = F.eval_J_quadrature(b, xx, tt).value
        worst = max(worst, abs(lhs - rhs) / scale_)
    out.append(make_report(f"C2 reflection identity J(b)-J(-b) ({pos.sum()} points)", worst, 1e-8,
                           "x<=", int(pos.sum()), seed))
    n = _n(1_000_000, scale)
    for j, (b, g, xx, tt) in enumerate(I_MC_POINTS):
        sub = st.child(200 + j)
        _, X, L, _ = simulate_radial_with_local_time(xx, tt, 1, sub, n, workers=workers)
        v = np.where(L[:, -1] > 0, np.exp(b * X[:, -1] + g * L[:, -1]), 0.0)
        ref = F.eval_I_quadrature(b, g, xx, tt).value
        se = v.std(ddof=1) / math.sqrt(n)
        out.append(z_report(f"C2 I quadrature vs MC [row {F.k_row(b, g)}: b={b:g},g={g:g},x={xx:g},"
                            f"t={tt:g}]", v.mean(), ref, se, 3.0, n, sub.seed))
    exact = F.eval_I([p[0] for p in I_MC_POINTS], [p[1] for p in I_MC_POINTS],
                     [p[2] for p in I_MC_POINTS], [p[3] for p in I_MC_POINTS]).value
    quad = np.array([F.eval_I_quadrature(*p).value for p in I_MC_POINTS])
    out.append(make_report("C2 I closed form vs quadrature (MC points)",
                           np.max(np.abs(exact / quad - 1)), 1e-8, "x<=", len(I_MC_POINTS), seed))
    return out


# --------------------------------------------------------------------------
# 3. R <= Q and R ~ Q

MU_HALF = RaySpace(np.array([0.5, 0.5]))

MAJORANT_DRAWS = [  # (K row, alpha, gamma, x, k, t)
    (1, (-3.0, -3.0), -3.0, 0.1, 0, 100.0), (1, (-2.0, -4.0), -2.0, 0.0, 0, 100.0),
    (2, (0.0, 0.0), -1.0, 0.1, 0, 100.0), (2, (0.0, 0.0), -2.0, 0.0, 0, 100.0),
    (3, (-1.0, -2.0), 0.0, 0.1, 0, 100.0), (3, (-3.0, -1.0), 0.0, 0.2, 1, 100.0),
    (4, (0.0, 0.0), 0.0, 0.2, 0, 100.0), (4, (0.0, 0.0), 0.0, 0.1, 1, 100.0),
    (5, (0.3, 0.3), -2.0, 0.5, 0, 50.0), (5, (0.3, 0.2), -2.0, 0.5, 1, 50.0),
    (6, (-1.0, -1.0), 0.3, 0.0, 0, 50.0), (6, (-2.0, -1.0), 0.35, 0.5, 0, 50.0),
    (7, (0.3, 0.3), 0.3, 0.0, 0, 50.0), (7, (0.3, 0.3), 0.3, 0.2, 1, 50.0),
]


def suite_majorant(seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    st = Streams(seed)
    out = []
    n = _n(1_000_000, scale)
    for j, (row, alpha, g, x, k, t) in enumerate(MAJORANT_DRAWS):
        sub = st.child(300 + j)
        p = PenaltyParams(alpha, g)
        assert all(F.k_row(a, g) == row for a in alpha)
        Q = F.eval_Q(MU_HALF, p, x, k, t).value
        exact = float(np.exp(P.log_R(MU_HALF, p, np.array([x]), np.array([k]), t))[0])
        tag = f"row {row}: alpha={alpha},g={g:g},x={x:g},k={k},t={t:g}"
        # main estimator: endpoint simulated, running maximum integrated out
        est = P.conditional_R(MU_HALF, p, x, k, t, n, sub, workers)
        se = max(est.se, 1e-12 * abs(est.estimate))
        out.append(make_report(f"C3 R<=Q (z) [{tag}]", (est.estimate - Q) / se, 3.0, "x<=", n, sub.seed))
        out.append(make_report(f"C3 |R/Q-1|<0.05 [{tag}]", abs(est.estimate / Q - 1.0), 0.05, "x<=", n,
                               sub.seed))
        out.append(z_report(f"C3 exact R vs conditional MC [{tag}]", est.estimate, exact, se, AUX_Z, n,
                            sub.seed))
        # plain estimator on simulated spider paths
        paths = simulate_spider(MU_HALF, SpiderPoint(x, k), t, 1, sub.child(1), n, workers=workers)
        v = np.exp(p.alpha[paths.N[:, -1]] * paths.X[:, -1] + g * paths.L[:, -1])
        se = max(v.std(ddof=1) / math.sqrt(n), 1e-12 * exact)
        out.append(z_report(f"C3 exact R vs plain MC [{tag}]", v.mean(), exact, se, AUX_Z, n, sub.seed))
    # dominance on a random grid (exact I and J)
    g = st.generator(8, 31337)
    b = g.uniform(-3, 3, 2000)
    c = g.uniform(-3, 3, 2000)
    c[:300] = b[:300]
    b[300:400] = 0.0
    c[350:450] = 0.0
    x = g.uniform(0, 5, 2000)
    t = np.exp(g.uniform(np.log(0.5), np.log(200), 2000))
    keep = np.maximum(np.maximum(b, c), 0) ** 2 * t / 2 < 600
    I = F.eval_I(b[keep], c[keep], x[keep], t[keep]).value
    K = F.eval_K(b[keep], c[keep], x[keep], t[keep]).value
    J = F.eval_J(b[keep], x[keep], t[keep]).value
    Lm = F.eval_L_majorant(b[keep], x[keep], t[keep]).value
    out.append(make_report("C3 K >= I on random grid (max (I-K)/K)", np.max((I - K) / K), 1e-12, "x<=",
                           int(keep.sum()), seed))
    pos = Lm > 0
    out.append(make_report("C3 L >= J on random grid (max (J-L)/L)", np.max((J[pos] - Lm[pos]) / Lm[pos]),
                           1e-12, "x<=", int(pos.sum()), seed))
    return out


# --------------------------------------------------------------------------
# 4. martingale property of M


def suite_theorem1(seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    st = Streams(seed)
    out = []
    n = _n(100_000, scale)
    for j, (tag, p) in enumerate(REGIME_PARAMS.items()):
        for i, h in enumerate((0.5, 1.0)):
            sub = st.child(400 + 10 * j + i)
            rep = P.martingale_check(MU, p, 1.0, h, n, sub, steps=1, workers=workers)
            out += [_rename(r, "C4 " + r.name) for r in rep]
        sub = st.child(400 + 10 * j + 5)
        out.append(_rename(P.normalization_check(MU, p, 1.0, n, sub, workers=workers), None, "C4 "))
        sub = st.child(400 + 10 * j + 7)
        neg = P.martingale_check(MU, p, 1.0, 1.0, n, sub, functionals=[P.constant_one(1.0)], steps=1,
                                 corrupt=True, threshold=5.0, workers=workers,
                                 name="corrupted M")
        out += [_rename(r, "C4 neg: " + r.name) for r in neg]
    return out


def _rename(r: TestReport, name=None, prefix="") -> TestReport:
    return TestReport(name if name is not None else prefix + r.name, r.statistic, r.threshold, r.rule,
                      r.passed, r.n, r.seed, r.p_value, r.negative_control)


# --------------------------------------------------------------------------
# 5. convergence of the penalized laws


def convergence_functionals(s=1.0):
    return [P.on_ray(s, 0), P.exp_minus_local_time(s), P.x_below(s, 1.0)]


# (rays, local-time exponent shift, upper bound on X_s) for each convergence functional
_ORACLE_SHAPES = [((0,), 0.0, None), (None, -1.0, None), (None, 0.0, 1.0)]


def exact_penalized(ray_space: RaySpace, params: PenaltyParams, which: int, s: float,
                    t: float | None) -> float:
    """Exact value of convergence functional ``which`` under the penalized law at ``t``.

    ``t=None`` gives the limit law. Started at the origin, ``N_s`` is a
    ``mu`` draw independent of ``(X_s, L_s)``, whose joint density is known;
    at finite ``t`` the Markov weight ``exp(gamma L_s) R(X_s, N_s, t-s)/R(0, t)``
    is used, otherwise ``M_s``.
    """
    rays, shift, top = _ORACLE_SHAPES[which]
    mu = ray_space.weights
    rays = range(mu.size) if rays is None else rays
    ymax = 30.0 if top is None else top
    total = 0.0
    if t is None:
        reg = F.classify_regime(ray_space, params)
        for k in rays:
            f = lambda l, y, k=k: (math.exp(shift * l) * F.joint_density_XL(y, l, 0.0, s)
                                   * float(F.eval_M(ray_space, params, s, y, k, l, reg)))
            total += mu[k] * integrate.dblquad(f, 0.0, ymax, 0.0, 30.0, epsabs=1e-12, epsrel=1e-10)[0]
        return total
    for k in rays:
        # the local time integrates out in closed form: int e^{c l} p_s(y, l) dl = G(c, y, s)
        f = lambda y, k=k: (float(F._G(params.gamma + shift, y, s))
                            * math.exp(P.log_R(ray_space, params, np.array([y]), np.array([k]), t - s)[0]))
        total += mu[k] * integrate.quad(f, 0.0, ymax, epsabs=1e-14, epsrel=1e-10, limit=200)[0]
    return total / F.eval_R(ray_space, params, 0.0, 0, t).value


def suite_convergence(seed: int, workers: int = 1, scale: float = 1.0,
                      t_grid=(2.0, 3.0, 5.0, 9.0, 17.0)) -> list[TestReport]:
    st = Streams(seed)
    out = []
    n = _n(100_000, scale)
    for j, (tag, p) in enumerate(REGIME_PARAMS.items()):
        sub = st.child(500 + j)
        rows = P.convergence_report(convergence_functionals(), list(t_grid), MU, p, n, sub,
                                    steps=1, workers=workers)
        for which, name in enumerate(f.name for f in convergence_functionals()):
            mine = [r for r in rows if r["functional"] == name and np.isfinite(r["t"])]
            first, last = mine[0], mine[-1]
            comb = math.hypot(last["se"], last["limit_se"])
            out.append(make_report(f"C5 [{tag}] {name}: t={last['t']:g} vs limit (z)",
                                   (last["estimate"] - last["limit_estimate"]) / comb, 3.0, "|x|<=",
                                   n, sub.seed))
            # exact oracles separate estimator error from the finite-t gap itself
            at_t = exact_penalized(MU, p, which, 1.0, last["t"])
            at_inf = exact_penalized(MU, p, which, 1.0, None)
            out.append(z_report(f"C5 [{tag}] {name}: t={last['t']:g} vs exact finite-t value (z)",
                                last["estimate"], at_t, last["se"], AUX_Z, n, sub.seed))
            out.append(z_report(f"C5 [{tag}] {name}: limit vs exact limit (z)", last["limit_estimate"],
                                at_inf, last["limit_se"], AUX_Z, n, sub.seed))
            gap0 = abs(first["estimate"] - first["limit_estimate"])
            gap1 = abs(last["estimate"] - last["limit_estimate"])
            comb0 = math.hypot(first["se"], first["limit_se"])
            out.append(make_report(f"C5 [{tag}] {name}: gap shrinks t={first['t']:g}->{last['t']:g}"
                                   f" (gap1-gap0)/se", (gap1 - gap0) / math.hypot(comb, comb0), 3.0,
                                   "x<=", n, sub.seed))
    return out


# --------------------------------------------------------------------------
# 6. limit processes


def maxdrift_ray_law(ray_space: RaySpace, params: PenaltyParams, t: float) -> np.ndarray:
    """Exact law of ``N_t`` under the ``gamma = 0`` MaxDrift limit, by quadrature."""
    reg = F.classify_regime(ray_space, params)
    ab = reg.abar
    mu = ray_space.weights
    J = list(reg.argmax_set)

    def expect(f):
        dens = lambda y: (sps.norm.pdf(y, ab * t, math.sqrt(t)) + sps.norm.pdf(-y, ab * t, math.sqrt(t)))
        v, _ = integrate.quad(lambda y: f(y) * dens(y), 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
        return v

    stay = expect(lambda y: np.tanh(ab * y))
    back = expect(lambda y: 2.0 * special.expit(-2.0 * ab * y))
    law = mu * back
    law[J] += stay * mu[J] / mu[J].sum()
    return law


def suite_theorem2(seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    st = Streams(seed)
    out = []
    n = _n(10_000, scale)

    # (a) bang-bang
    p = PenaltyParams((0.0, -0.5), 1.0)
    spec = LimitLawSpec(MU, p, 20.0, 40)
    sub = st.child(600)
    bb = sample_bangbang(spec, sub, n, workers)
    out.append(ks_one_sample(bb.X[:, -1], sps.expon(scale=1 / (2 * p.gamma)).cdf,
                             name="C6a BangBang X_20 ~ Exp(2 gamma)", seed=sub.seed))
    frac = bb.zero_in_window(10.0, 20.0).mean()
    out.append(make_report("C6a BangBang zero in [10,20] fraction >= 0.99", frac, 0.99, "p>=", n,
                           sub.seed))
    sp = simulate_spider(MU, horizon=20.0, steps=1, rng=st.child(601), n_paths=n, workers=workers)
    out.append(ks_two_sample(bb.X[:, -1], sp.X[:, -1], name="C6a neg: BangBang X_20 vs spider X_20",
                             seed=sub.seed, negative_control=True))

    # (b) max drift, weighted
    p = REGIME_PARAMS[F.MAX_DRIFT]
    reg = F.classify_regime(MU, p)
    spec = LimitLawSpec(MU, p, 20.0, 200)
    sub = st.child(610)
    ws = sample_maxdrift_weighted(spec, sub, n, workers)
    rate = reg.abar - p.gamma
    out.append(ks_one_sample(ws.L_inf, sps.expon(scale=1 / rate).cdf, weights=ws.weights,
                             name="C6b MaxDrift weighted L_inf ~ Exp(abar-gamma)", seed=sub.seed))
    out.append(ks_one_sample(ws.L_inf, sps.expon(scale=1 / reg.abar).cdf, weights=ws.weights,
                             name="C6b neg: weighted L_inf ~ Exp(abar)", seed=sub.seed,
                             negative_control=True))
    last = np.where(ws.returned, ws.final_ray, ws.paths.N[:, -1])
    bad = (~np.isin(last, reg.argmax_set)).sum() + (~np.isin(ws.final_ray, reg.argmax_set)).sum()
    out.append(make_report("C6b last-excursion ray in J (violations)", bad, 0, "x<=", n, sub.seed))
    late = ws.paths.zero_in_window(10.0, 20.0).mean()
    out.append(make_report("C6b MaxDrift zero in [10,20] fraction <= 0.01", late, 0.01, "x<=", n,
                           sub.seed))
    # gamma = 0 sub-case against the martingale-weighted spider and the exact ray law
    p0 = PenaltyParams(p.alpha, 0.0)
    t = 2.0
    spec0 = LimitLawSpec(MU, p0, t, 20)
    sub = st.child(620)
    w0 = sample_maxdrift_weighted(spec0, sub, n, workers)
    out.append(make_report("C6b gamma=0 weights identically 1", np.max(np.abs(w0.weights - 1)), 0.0,
                           "x<=", n, sub.seed))
    sub2 = st.child(621)
    sp = simulate_spider(MU, horizon=t, steps=1, rng=sub2, n_paths=4 * n, workers=workers)
    Xs, Ns, Ls = sp.at(t)
    M = F.eval_M(MU, p0, t, Xs, Ns, Ls)
    out.append(ks_two_sample(w0.paths.X[:, -1], Xs, weights_b=M,
                             name="C6b gamma=0 X_2: sampler vs M-weighted spider", seed=sub.seed))
    counts = np.bincount(w0.paths.N[:, -1], minlength=MU.size)
    out.append(chi_square_rays(counts, maxdrift_ray_law(MU, p0, t),
                               name="C6b gamma=0 N_2 counts vs exact law", seed=sub.seed))
    out.append(chi_square_rays(counts, MU.weights, name="C6b neg: N_2 counts vs mu", seed=sub.seed,
                               negative_control=True))

    # (c) gamma < 0
    for j, tag in enumerate((F.FLAT_RAYS, F.ALL_NEGATIVE)):
        p = REGIME_PARAMS[tag]
        T = 30.0
        spec = LimitLawSpec(MU, p, T, 300)
        sub = st.child(630 + j)
        q = sample_negative_gamma(spec, sub, n, workers)
        e, tau = q.extra["e"], q.extra["tau"]
        g = abs(p.gamma)
        out.append(ks_one_sample(e, sps.expon(scale=1 / g).cdf,
                                 name=f"C6c [{tag}] L_inf ~ Exp(|gamma|)", seed=sub.seed))
        # observed local time at T is min(e, spider local time at T)
        cdf_LT = lambda l: 1.0 - np.exp(-g * l) * special.erfc(l / math.sqrt(2 * T))
        out.append(ks_one_sample(q.L[:, -1], cdf_LT, name=f"C6c [{tag}] simulated L_T vs law of "
                                 "min(e, L_T)", seed=sub.seed))
        done = np.isfinite(tau)
        out.append(make_report(f"C6c [{tag}] L_T = e after tau_e (max abs diff)",
                               np.max(np.abs(q.L[done, -1] - e[done])) if done.any() else 0.0, 1e-12,
                               "x<=", int(done.sum()), sub.seed))
        law = m_ray_law(MU, p)
        cnt = np.bincount(sample_M_ray(MU, p, st.child(640 + j), n), minlength=MU.size)
        out.append(chi_square_rays(cnt, law, name=f"C6c [{tag}] sample_M_ray counts vs P(M=m)",
                                   seed=sub.seed))
        out.append(chi_square_rays(np.bincount(q.extra["M"], minlength=MU.size), law,
                                   name=f"C6c [{tag}] escape-ray counts vs P(M=m)", seed=sub.seed))
        ok = done & (tau < T)
        out.append(ks_one_sample(q.X[ok, -1] / np.sqrt(T - tau[ok]), sps.maxwell.cdf,
                                 name=f"C6c [{tag}] post-tau_e X/sqrt(u) ~ Bessel(3) marginal",
                                 seed=sub.seed))
        # before tau_e: paths with tau_e > s are spider paths reweighted by exp(gamma L_s)
        s = 1.0
        keep = tau > s
        spd = simulate_spider(MU, horizon=s, steps=1, rng=st.child(650 + j), n_paths=2 * n,
                              workers=workers)
        thin_u = st.generator(8, 650 + j).random(2 * n)
        thin = thin_u < np.exp(p.gamma * spd.L[:, -1])
        i_s = q.time_index(s)
        out.append(ks_two_sample(q.X[keep, i_s], spd.X[thin, -1],
                                 name=f"C6c [{tag}] pre-tau_e X_s vs exp(gamma L_s)-thinned spider",
                                 seed=sub.seed))
        zfrac = q.zero_in_window(T / 2, T).mean()
        out.append(make_report(f"C6c [{tag}] zero in [T/2,T] fraction <= 0.1", zfrac, 0.1, "x<=", n,
                               sub.seed))

    # the worked two-ray example
    pw = PenaltyParams((-1.0, -2.0), -1.0)
    half = RaySpace(np.array([0.5, 0.5]))
    law = m_ray_law(half, pw)
    out.append(make_report("C6c worked example P(M) = (7/11, 4/11) (max abs err)",
                           np.max(np.abs(law - [7 / 11, 4 / 11])), 1e-12, "x<=", 2, seed))
    cnt = np.bincount(sample_M_ray(half, pw, st.child(660), n), minlength=2)
    out.append(chi_square_rays(cnt, [7 / 11, 4 / 11], name="C6c worked example counts vs (7/11, 4/11)",
                               seed=seed))
    out.append(chi_square_rays(cnt, [0.5, 0.5], name="C6c neg: worked example counts vs (1/2, 1/2)",
                               seed=seed, negative_control=True))
    pj = PenaltyParams((0.0, -2.0), -1.0)
    cnt = np.bincount(sample_M_ray(half, pj, st.child(661), n), minlength=2)
    out.append(chi_square_rays(cnt, [1.0, 0.0], name="C6c J={a}: P(M=a)=1", seed=seed))
    return out


# --------------------------------------------------------------------------
# 7. space-time harmonicity and the flux condition at the origin


def _harmonic_residual(M, s, x, k, l, h=1e-3):
    ds = (M(s + h, x, k, l) - M(s - h, x, k, l)) / (2 * h)
    dxx = (M(s, x + h, k, l) - 2 * M(s, x, k, l) + M(s, x - h, k, l)) / h**2
    return np.abs(ds + 0.5 * dxx) / M(s, x, k, l)


def _flux_residual(M, s, l, mu, h=1e-3):
    dl = (M(s, 0.0, 0, l + h) - M(s, 0.0, 0, l - h)) / (2 * h)
    dx = sum(mu[m] * (-3 * M(s, 0.0, m, l) + 4 * M(s, h, m, l) - M(s, 2 * h, m, l)) / (2 * h)
             for m in range(mu.size))
    return abs(dl + dx) / M(s, 0.0, 0, l)


def suite_pde(seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    out = []
    s_grid = np.array([0.5, 1.0, 2.0, 4.0])
    x_grid = np.linspace(0.1, 3.0, 30)
    l_grid = (0.0, 0.5, 2.0)
    for tag, p in REGIME_PARAMS.items():
        reg = F.classify_regime(MU, p)
        M = lambda s, x, k, l, p=p, reg=reg: np.asarray(F.eval_M(MU, p, s, x, k, l, reg), dtype=float)
        worst = 0.0
        for k in range(MU.size):
            for l in l_grid:
                S, Xg = np.meshgrid(s_grid, x_grid)
                worst = max(worst, float(np.max(_harmonic_residual(M, S, Xg, k, l))))
        out.append(make_report(f"C7 [{tag}] max |dM/ds + 1/2 d2M/dx2| / M", worst, 1e-4, "x<=",
                               s_grid.size * x_grid.size * MU.size * len(l_grid), seed))
        flux = max(_flux_residual(M, s, l, MU.weights) for s in s_grid for l in l_grid)
        out.append(make_report(f"C7 [{tag}] origin flux dM/dl + sum mu dM/dx", flux, 1e-4, "x<=",
                               s_grid.size * len(l_grid), seed))
        bad = P.corrupted_M(MU, p, reg)
        Mb = lambda s, x, k, l, bad=bad: np.asarray(bad(s, x, k, l), dtype=float) * np.ones_like(
            np.asarray(x, dtype=float))
        worst_b = 0.0
        for k in range(MU.size):
            S, Xg = np.meshgrid(s_grid, x_grid)
            worst_b = max(worst_b, float(np.max(_harmonic_residual(Mb, S, Xg, k, 0.5))))
        worst_b = max(worst_b, max(_flux_residual(Mb, s, 0.5, MU.weights) for s in s_grid))
        out.append(make_report(f"C7 neg: [{tag}] corrupted M residual", worst_b, 1e-4, "x<=",
                               s_grid.size * x_grid.size, seed, negative_control=True))
    return out


# --------------------------------------------------------------------------
# 8. reproducibility


def reports_csv(reports) -> str:
    buf = io.StringIO()
    write_reports(reports, buf)
    return buf.getvalue()


def suite_reproducibility(seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    out = []
    sc = min(scale, 1.0)
    runs = {}
    for name, fn in (("lemma", suite_lemma), ("theorem2", suite_theorem2)):
        a = reports_csv(fn(seed, 1, sc))
        b = reports_csv(fn(seed, 1, sc))
        c = reports_csv(fn(seed, 3, sc))
        d = reports_csv(fn(seed + 1, 1, sc))
        runs[name] = (a, b, c, d)
        out.append(make_report(f"C8 {name}: same seed, same workers -> identical CSV (differing bytes)",
                               _diff(a, b), 0, "x<=", len(a), seed))
        out.append(make_report(f"C8 {name}: workers 1 vs 3 -> identical CSV (differing bytes)",
                               _diff(a, c), 0, "x<=", len(a), seed))
        out.append(make_report(f"C8 neg: {name}: different seed -> identical CSV (differing bytes)",
                               _diff(a, d), 0, "x<=", len(a), seed, negative_control=True))
    n = _n(20_000, sc)
    p1 = simulate_spider(MU, horizon=1.0, steps=8, rng=seed, n_paths=n, workers=1)
    p4 = simulate_spider(MU, horizon=1.0, steps=8, rng=seed, n_paths=n, workers=4)
    same = np.array_equal(p1.X, p4.X) and np.array_equal(p1.N, p4.N) and np.array_equal(p1.L, p4.L)
    out.append(make_report("C8 spider paths identical for 1 and 4 workers", 0 if same else 1, 0, "x<=",
                           n, seed))
    small = simulate_spider(MU, horizon=1.0, steps=8, rng=seed, n_paths=n // 3, workers=1)
    pref = np.array_equal(small.X, p1.X[: n // 3]) and np.array_equal(small.N, p1.N[: n // 3])
    out.append(make_report("C8 path i independent of n_paths", 0 if pref else 1, 0, "x<=", n, seed))
    return out


def _diff(a: str, b: str) -> int:
    if a == b:
        return 0
    m = min(len(a), len(b))
    return sum(x != y for x, y in zip(a[:m], b[:m])) + abs(len(a) - len(b))


SUITES: dict[str, Callable[..., list[TestReport]]] = {
    "lemma": suite_lemma,
    "formulas": suite_formulas,
    "majorant": suite_majorant,
    "theorem1": suite_theorem1,
    "convergence": suite_convergence,
    "theorem2": suite_theorem2,
    "pde": suite_pde,
    "reproducibility": suite_reproducibility,
}


def run_suite(name: str, seed: int, workers: int = 1, scale: float = 1.0) -> list[TestReport]:
    try:
        fn = SUITES[name]
    except KeyError:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return fn(seed, workers=workers, scale=scale)
