"""Monte Carlo for the penalized laws, their limit and the convergence between them.

Two estimators of the penalized expectation ``W^(t)[F]`` of an ``F_s``
functional are offered:

``method="direct"``
    simulate to ``t`` and self-normalize with ``exp(alpha_{N_t} X_t + gamma L_t)``.
``method="markov"`` (default)
    simulate to ``s`` only and weight by the exact conditional expectation of
    that factor given ``F_s``, namely ``exp(gamma L_s) R(X_s, N_s, t - s)``.
    It targets the same quantity with far smaller weight variance; at large
    ``t`` the direct weights degenerate (a handful of paths carry all mass).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from walshpen import formulas as F
from walshpen import rng as _rng
from walshpen.formulas import PenaltyParams, Regime
from walshpen.spider import ORIGIN, RaySpace, SpiderPaths, grid, simulate_spider
from walshpen.stats import TestReport, z_report

MIN_ESS = 30.0
DEFAULT_STEPS_PER_UNIT = 16


class UnreliableEstimate(RuntimeError):
    """Raised when the effective sample size of a weighted estimate is below ``MIN_ESS``."""

    def __init__(self, ess: float, estimate: float = math.nan, se: float = math.nan):
        super().__init__(f"effective sample size {ess:.1f} < {MIN_ESS:g}; estimate not reliable")
        self.ess = ess
        self.estimate = estimate
        self.se = se


@dataclass(frozen=True)
class PathFunctional:
    """A bounded functional of the path on ``[0, horizon]``.

    ``evaluator`` receives the paths already restricted to ``[0, horizon]``
    and returns one value per path.
    """

    horizon: float
    evaluator: Callable[[SpiderPaths], np.ndarray]
    name: str = "F"

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be finite and > 0")

    def __call__(self, paths: SpiderPaths) -> np.ndarray:
        v = np.asarray(self.evaluator(paths.restrict(self.horizon)), dtype=float)
        if v.shape != (paths.n_paths,):
            raise ValueError(f"{self.name}: evaluator must return one value per path")
        return v


# a few ready-made functionals (values at the horizon s)

def constant_one(s):
    return PathFunctional(s, lambda p: np.ones(p.n_paths), "one")


def x_above(s, c=1.0):
    return PathFunctional(s, lambda p: (p.X[:, -1] > c).astype(float), f"X_s>{c:g}")


def x_below(s, c=1.0):
    return PathFunctional(s, lambda p: (p.X[:, -1] <= c).astype(float), f"X_s<={c:g}")


def on_ray(s, m):
    return PathFunctional(s, lambda p: (p.N[:, -1] == m).astype(float), f"N_s={m}")


def exp_minus_local_time(s):
    return PathFunctional(s, lambda p: np.exp(-p.L[:, -1]), "exp(-L_s)")


def x_at(s):
    return PathFunctional(s, lambda p: p.X[:, -1].copy(), "X_s")


def running_max_below(s, c=1.5):
    """``1{max_{grid in [0,s]} X <= c}``: depends on the whole path."""
    return PathFunctional(s, lambda p: (p.X.max(axis=1) <= c).astype(float), f"maxX<={c:g}")


def battery(s, ray_space: RaySpace, c=1.0):
    """Functionals used by the martingale check."""
    return [constant_one(s), x_above(s, c)] + [on_ray(s, m) for m in range(ray_space.size)] \
        + [exp_minus_local_time(s)]


@dataclass(frozen=True)
class Estimate:
    estimate: float
    se: float
    ess: float = math.nan
    n: int = 0

    def __iter__(self):
        yield self.estimate
        yield self.se


def _weighted_mean(values: np.ndarray, log_w: np.ndarray) -> Estimate:
    """Self-normalized mean with delta-method standard error."""
    w = np.exp(log_w - np.max(log_w))
    sw = w.sum()
    est = float(np.dot(w, values) / sw)
    se = float(math.sqrt(np.sum((w * (values - est)) ** 2)) / sw)
    ess = float(sw**2 / np.sum(w * w))
    return Estimate(est, se, ess, values.size)


def _grid_to(s, steps):
    return grid((s, steps))


def _steps(s, steps):
    return steps if steps is not None else max(1, int(math.ceil(DEFAULT_STEPS_PER_UNIT * s)))


def log_R(ray_space: RaySpace, params: PenaltyParams, x, k, u) -> np.ndarray:
    """``log R(x, k, u)`` for arrays of positions ``x`` and rays ``k``."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=np.int64)
    mu, a, g = ray_space.weights, params.alpha, params.gamma
    tot = np.zeros(x.shape)
    for m in range(mu.size):
        tot += mu[m] * F.eval_I(a[m], g, x, u).value
    tot += F.eval_J(a[k], x, u).value
    return np.log(tot)


def _log_tail_exp(c, a, y, t):
    """``log E[exp(c S); S > a | Y_t = y]`` for the running maximum ``S`` of a
    Brownian motion pinned at ``y`` at time ``t`` (``a >= max(0, y)``)."""
    base = c * a - 2.0 * a * (a - y) / t
    z = math.sqrt(2.0 / t) * (a - (y + c * t / 2.0) / 2.0)
    log_erfcx = z * z + math.log(2.0) + special.log_ndtr(-z * math.sqrt(2.0))
    if c == 0:
        return base
    log_k = 0.5 * math.log(math.pi * t / 8.0)
    if c > 0:
        return base + np.logaddexp(0.0, math.log(c) + log_k + log_erfcx)
    return base + np.log1p(c * np.exp(log_k + log_erfcx))


def conditional_R(ray_space: RaySpace, params: PenaltyParams, x: float, k: int, t: float,
                  n_paths: int, rng=None, workers: int = 1) -> Estimate:
    """Monte Carlo estimate of ``R(x, k, t)`` that integrates out the running maximum.

    Only the Brownian endpoint is simulated; given it, the local time and the
    final ray have an explicit law, and the conditional expectation of
    ``exp(alpha_{N_t} X_t + gamma L_t)`` is evaluated in closed form. This
    keeps the relative error small where the plain estimator is dominated by
    rare paths (negative exponents at large ``t``).
    """
    streams = _rng.as_streams(rng)
    a_, g, mu = params.alpha, params.gamma, ray_space.weights

    def block(b, start, count):
        gen = streams.generator(_rng.STREAM_RADIAL, b)
        return math.sqrt(t) * gen.standard_normal(streams.block_size)[:count]

    y = np.concatenate(_rng.map_blocks(block, streams, n_paths, workers))
    lo = np.maximum(x, y)
    miss = np.where(y < x, -np.expm1(-2.0 * x * (x - y) / t), 0.0)
    h = miss * np.exp(a_[k] * (x - y))
    with np.errstate(divide="ignore"):
        for j in range(mu.size):
            c = a_[j] + g
            h = h + mu[j] * np.exp(-a_[j] * y - g * x + _log_tail_exp(c, lo, y, t))
    return Estimate(float(h.mean()), float(h.std(ddof=1) / math.sqrt(h.size)), math.nan, h.size)


def penalized_expectation(functional: PathFunctional | Sequence[PathFunctional], t: float,
                          ray_space: RaySpace, params: PenaltyParams, n_paths: int,
                          rng=None, method: str = "markov", steps: int | None = None,
                          workers: int = 1, raise_unreliable: bool = True):
    """``W^(t)[F]`` by self-normalized importance weighting of spider paths.

    A list of functionals is evaluated on the same paths and yields a list.
    ``steps`` is the number of grid steps on ``[0, s]``.
    """
    funcs = list(functional) if isinstance(functional, (list, tuple)) else [functional]
    params.check(ray_space)
    s = funcs[0].horizon
    if any(f.horizon != s for f in funcs):
        raise ValueError("all functionals must share one horizon")
    if not t >= s:
        raise ValueError("t must be >= the functional horizon")
    streams = _rng.as_streams(rng)
    n = _steps(s, steps)
    if method == "direct":
        times = grid((s, n), (t, 1)) if t > s else grid((s, n))
        paths = simulate_spider(ray_space, ORIGIN, rng=streams, n_paths=n_paths, times=times,
                                workers=workers)
        X, N, L = paths.X[:, -1], paths.N[:, -1], paths.L[:, -1]
        log_w = params.alpha[N] * X + params.gamma * L
    elif method == "markov":
        paths = simulate_spider(ray_space, ORIGIN, rng=streams, n_paths=n_paths,
                                times=_grid_to(s, n), workers=workers)
        X, N, L = paths.X[:, -1], paths.N[:, -1], paths.L[:, -1]
        log_w = params.gamma * L
        if t > s:
            log_w = log_w + log_R(ray_space, params, X, N, t - s)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = [_weighted_mean(f(paths), log_w) for f in funcs]
    if raise_unreliable and out[0].ess < MIN_ESS:
        raise UnreliableEstimate(out[0].ess, out[0].estimate, out[0].se)
    return out if isinstance(functional, (list, tuple)) else out[0]


def limit_expectation(functional: PathFunctional | Sequence[PathFunctional], ray_space: RaySpace,
                      params: PenaltyParams, n_paths: int, rng=None, steps: int | None = None,
                      workers: int = 1, regime: Regime | None = None,
                      raise_unreliable: bool = True):
    """``W^(inf)[F] = E[F M_s]`` with plain (not self-normalized) averaging."""
    funcs = list(functional) if isinstance(functional, (list, tuple)) else [functional]
    s = funcs[0].horizon
    if any(f.horizon != s for f in funcs):
        raise ValueError("all functionals must share one horizon")
    regime = regime or F.classify_regime(ray_space, params)
    paths = simulate_spider(ray_space, ORIGIN, rng=rng, n_paths=n_paths,
                            times=_grid_to(s, _steps(s, steps)), workers=workers)
    X, N, L = paths.X[:, -1], paths.N[:, -1], paths.L[:, -1]
    m = np.broadcast_to(F.eval_M(ray_space, params, s, X, N, L, regime), X.shape)
    ess = float(m.sum() ** 2 / np.sum(m * m))
    out = []
    for f in funcs:
        v = m * f(paths)
        out.append(Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), ess, v.size))
    if raise_unreliable and ess < MIN_ESS:
        raise UnreliableEstimate(ess, out[0].estimate, out[0].se)
    return out if isinstance(functional, (list, tuple)) else out[0]


REPORT_COLUMNS = ("functional", "t", "estimate", "se", "ess", "limit_estimate", "limit_se")


def convergence_report(functionals: PathFunctional | Sequence[PathFunctional], t_grid,
                       ray_space: RaySpace, params: PenaltyParams, n_paths: int, rng=None,
                       method: str = "markov", steps: int | None = None, workers: int = 1):
    """Penalized estimates along ``t_grid`` next to the limit estimate.

    Returns a list of dict rows (one per functional and ``t``, then one limit
    row per functional with ``t = inf``). Rows whose effective sample size is
    below the threshold carry NaN estimates and ``unreliable=True``.
    """
    funcs = list(functionals) if isinstance(functionals, (list, tuple)) else [functionals]
    s = funcs[0].horizon
    if t_grid is None:
        t_grid = default_t_grid(s)
    t_grid = [float(t) for t in t_grid]
    if any(t < s for t in t_grid):
        raise ValueError("every t in t_grid must be >= s")
    streams = _rng.as_streams(rng)
    lim = limit_expectation(funcs, ray_space, params, n_paths, streams.child(1), steps, workers,
                            raise_unreliable=False)
    rows = []
    for j, t in enumerate(t_grid):
        sub = streams.child(2) if method == "markov" else streams.child(100 + j)
        pen = penalized_expectation(funcs, t, ray_space, params, n_paths, sub, method, steps,
                                    workers, raise_unreliable=False)
        for f, p, l in zip(funcs, pen, lim):
            bad = p.ess < MIN_ESS
            rows.append({"functional": f.name, "t": t,
                         "estimate": math.nan if bad else p.estimate,
                         "se": math.nan if bad else p.se, "ess": p.ess,
                         "limit_estimate": l.estimate, "limit_se": l.se, "unreliable": bad})
    for f, l in zip(funcs, lim):
        rows.append({"functional": f.name, "t": math.inf, "estimate": l.estimate, "se": l.se,
                     "ess": l.ess, "limit_estimate": l.estimate, "limit_se": l.se,
                     "unreliable": l.ess < MIN_ESS})
    return rows


def default_t_grid(s: float) -> list[float]:
    return [s + 1, 2 * s + 1, 4 * s + 1, 8 * s + 1, 16 * s + 1]


def corrupted_M(ray_space: RaySpace, params: PenaltyParams, regime: Regime):
    """A deliberately wrong density process, used as a negative control.

    The time factor ``exp(-s abar^2/2)`` (``exp(-s gamma^2/2)`` in the
    bang-bang case) is dropped; regimes without a time factor get their
    ``X_s`` coefficient doubled instead.
    """
    tag = regime.tag

    def m(s, x, k, l):
        v = F.eval_M(ray_space, params, s, x, k, l, regime)
        if tag == F.BANG_BANG:
            return v * np.exp(s * params.gamma**2 / 2.0)
        if tag == F.MAX_DRIFT:
            return v * np.exp(s * regime.abar**2 / 2.0)
        if tag == F.NULL_SPIDER:
            return np.exp(np.asarray(x, dtype=float)) * np.ones_like(np.asarray(l, dtype=float))
        theta = 2.0 * regime.theta[np.asarray(k)]
        return np.exp(params.gamma * np.asarray(l)) * (1.0 + theta * np.asarray(x))

    return m


def martingale_check(ray_space: RaySpace, params: PenaltyParams, s: float, h: float, n_paths: int,
                     rng=None, functionals=None, c: float = 1.0, steps: int | None = None,
                     corrupt: bool = False, threshold: float = 3.0, workers: int = 1,
                     name: str = "martingale") -> list[TestReport]:
    """z-scores of ``E[(M_{s+h} - M_s) G]`` for ``F_s``-measurable ``G``.

    With ``corrupt=True`` the corrupted density of :func:`corrupted_M` is used
    and the reports are marked as negative controls.
    """
    if not (s > 0 and h > 0):
        raise ValueError("s and h must be > 0")
    streams = _rng.as_streams(rng)
    regime = F.classify_regime(ray_space, params)
    funcs = functionals or battery(s, ray_space, c)
    n = _steps(s, steps)
    paths = simulate_spider(ray_space, ORIGIN, rng=streams, n_paths=n_paths,
                            times=grid((s, n), (s + h, 1)), workers=workers)
    Mfun = corrupted_M(ray_space, params, regime) if corrupt else \
        (lambda *a: F.eval_M(ray_space, params, *a, regime=regime))
    Xs, Ns, Ls = paths.at(s)
    Xt, Nt, Lt = paths.X[:, -1], paths.N[:, -1], paths.L[:, -1]
    d = np.asarray(Mfun(s + h, Xt, Nt, Lt), dtype=float) - np.asarray(Mfun(s, Xs, Ns, Ls), dtype=float)
    d = np.broadcast_to(d, Xs.shape)
    reports = []
    for f in funcs:
        v = d * f(paths)
        se = float(v.std(ddof=1) / math.sqrt(v.size))
        reports.append(z_report(f"{name}[{regime.tag},s={s:g},h={h:g}] {f.name}", float(v.mean()),
                                0.0, se, threshold, v.size, streams.seed, negative_control=corrupt))
    return reports


def normalization_check(ray_space: RaySpace, params: PenaltyParams, s: float, n_paths: int,
                        rng=None, threshold: float = 3.0, workers: int = 1) -> TestReport:
    """``E[M_s] = 1`` within ``threshold`` standard errors."""
    streams = _rng.as_streams(rng)
    est = limit_expectation(constant_one(s), ray_space, params, n_paths, streams, steps=1,
                            workers=workers, raise_unreliable=False)
    regime = F.classify_regime(ray_space, params)
    return z_report(f"E[M_s]=1 [{regime.tag},s={s:g}]", est.estimate, 1.0, est.se, threshold,
                    n_paths, streams.seed)


def log_mean_exp(v):
    return float(special.logsumexp(v) - math.log(len(v)))
