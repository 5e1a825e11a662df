"""Samplers for the limit laws of the penalized spider.

* BangBang: ``X = S - Y`` with ``Y`` a Brownian motion with drift ``gamma``.
* MaxDrift: ``|B|`` for ``B`` a Brownian motion with drift ``abar``, the
  unbounded excursion on a ray of ``J``; for ``gamma != 0`` paths carry the
  weight ``((abar - gamma)/abar) exp(gamma L_inf)``.
* gamma < 0 (FlatRays, AllNegative): a spider until its local time reaches
  ``e ~ Exp(|gamma|)``, then a Bessel(3) escape on a ray drawn from
  :func:`m_ray_law`.

All samplers are exact at the grid times they are asked for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from walshpen import formulas as F
from walshpen import rng as _rng
from walshpen.formulas import PenaltyParams, Regime, m_ray_law
from walshpen.spider import (RaySpace, SpiderPaths, _categorical, _check_grid, _reflected_block,
                             bridge_local_time, bridge_max, label_excursions)


class WrongRegime(ValueError):
    pass


@dataclass(frozen=True)
class LimitLawSpec:
    ray_space: RaySpace
    params: PenaltyParams
    horizon: float = 1.0
    steps: int = 100
    regime: Regime | None = None
    times: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        actual = F.classify_regime(self.ray_space, self.params)
        if self.regime is not None and self.regime.tag != actual.tag:
            raise ValueError(f"regime {self.regime.tag} inconsistent with parameters ({actual.tag})")
        object.__setattr__(self, "regime", actual)
        object.__setattr__(self, "times", _check_grid(self.horizon, self.steps, self.times))


@dataclass
class WeightedSample:
    """Weighted MaxDrift paths.

    ``L_inf`` is the total local time (exact: after the horizon the residual
    is drawn from its exact law); ``returned`` tells whether the path visits 0
    after the horizon; ``final_ray`` is the ray of the unbounded excursion.
    """

    paths: SpiderPaths
    weights: np.ndarray
    L_inf: np.ndarray
    final_ray: np.ndarray
    returned: np.ndarray

    @property
    def n_paths(self):
        return self.paths.n_paths


def _require(spec: LimitLawSpec, *tags):
    if spec.regime.tag not in tags:
        raise WrongRegime(f"sampler needs regime in {tags}, got {spec.regime.tag}")


def _labels(streams, b, x, touched, ray_space, n_times, count):
    gl = streams.generator(_rng.STREAM_LABELS, b)
    draws = gl.random((streams.block_size, n_times))[:count]
    return label_excursions(x, touched, ray_space, gl, None, draws=draws)


def sample_bangbang(spec: LimitLawSpec, rng=None, n_paths: int = 1, workers: int = 1) -> SpiderPaths:
    """Reflected Brownian motion with drift ``-gamma`` and i.i.d. ``mu`` labels."""
    _require(spec, F.BANG_BANG)
    streams = _rng.as_streams(rng)
    t = spec.times
    g = spec.params.gamma

    def block(b, start, count):
        gen = streams.generator(_rng.STREAM_LIMIT, b)
        x, s, touched, _ = _reflected_block(0.0, t, gen, count, streams.block_size, drift=g)
        n = _labels(streams, b, x, touched, spec.ray_space, t.size, count)
        return SpiderPaths(t, x, n, s, touched)

    return SpiderPaths.concat(_rng.map_blocks(block, streams, n_paths, workers))


def _drifted_signed_block(times, gen, count, block_size, drift):
    """Brownian motion with drift from 0, its local time at 0 and zero flags."""
    dt = np.diff(times)
    n = dt.size
    z = gen.standard_normal((block_size, n))[:count]
    u = gen.random((block_size, n))[:count]
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    b = np.zeros((count, n + 1))
    if n:
        np.cumsum(drift * dt + np.sqrt(dt) * z, axis=1, out=b[:, 1:])
    ell = bridge_local_time(b[:, :-1], b[:, 1:], dt, u)
    L = np.zeros_like(b)
    if n:
        np.cumsum(ell, axis=1, out=L[:, 1:])
    touched = ell > 0
    if n:
        touched[:, 0] = True
    return b, L, touched


def sample_maxdrift_weighted(spec: LimitLawSpec, rng=None, n_paths: int = 1,
                             workers: int = 1) -> WeightedSample:
    """Weighted sample of the MaxDrift limit law (exact weights, exact grid marginals)."""
    _require(spec, F.MAX_DRIFT)
    streams = _rng.as_streams(rng)
    t = spec.times
    rs, reg, g = spec.ray_space, spec.regime, spec.params.gamma
    ab = reg.abar
    J = np.asarray(reg.argmax_set)
    law_J = np.zeros(rs.size)
    law_J[J] = rs.weights[J] / rs.weights[J].sum()
    cum_J = np.cumsum(law_J)
    cum_J[-1] = 1.0

    def block(bidx, start, count):
        gen = streams.generator(_rng.STREAM_LIMIT, bidx)
        b, L, touched = _drifted_signed_block(t, gen, count, streams.block_size, ab)
        x = np.abs(b)
        n = _labels(streams, bidx, x, touched, rs, t.size, count)
        aux = streams.generator(_rng.STREAM_AUX, bidx)
        u_ret = aux.random(streams.block_size)[:count]
        resid = aux.exponential(1.0 / ab, streams.block_size)[:count]
        u_ray = aux.random(streams.block_size)[:count]
        end = b[:, -1]
        # return probability after the horizon: 1 below 0, exp(-2 abar b) above
        p_ret = np.where(end > 0, np.exp(-2.0 * ab * np.maximum(end, 0.0)), 1.0)
        returned = u_ret < p_ret
        L_inf = L[:, -1] + np.where(returned, resid, 0.0)
        final = _categorical(u_ray, cum_J)
        # the excursion straddling the horizon is the unbounded one when no return follows
        last_zero = np.where(touched.any(axis=1),
                             touched.shape[1] - 1 - np.argmax(touched[:, ::-1], axis=1), -1)
        cols = np.arange(t.size)
        relabel = (~returned)[:, None] & (cols[None, :] > last_zero[:, None])
        if x.shape[1] > 1:
            relabel |= (~returned)[:, None] & (cols[None, :] == last_zero[:, None]) & (x == 0.0)
        n = np.where(relabel, final[:, None], n)
        w = (ab - g) / ab * np.exp(g * L_inf)
        return SpiderPaths(t, x, n, L, touched), w, L_inf, final, returned

    parts = _rng.map_blocks(block, streams, n_paths, workers)
    return WeightedSample(SpiderPaths.concat([p[0] for p in parts]),
                          np.concatenate([p[1] for p in parts]),
                          np.concatenate([p[2] for p in parts]),
                          np.concatenate([p[3] for p in parts]),
                          np.concatenate([p[4] for p in parts]))


def sample_M_ray(ray_space: RaySpace, params: PenaltyParams, rng=None, size: int | None = None):
    """Escape ray(s) for ``gamma < 0``; see :func:`walshpen.formulas.m_ray_law`."""
    law = m_ray_law(ray_space, params)
    if isinstance(rng, np.random.Generator):
        gen = rng
    else:
        gen = _rng.as_streams(rng).generator(_rng.STREAM_RAY, 0)
    cum = np.cumsum(law)
    cum[-1] = 1.0
    u = gen.random(size)
    return _categorical(np.asarray(u), cum) if size is not None else int(_categorical(np.array([u]), cum)[0])


def sample_bessel3(horizon: float = 1.0, steps: int = 1, rng=None, n_paths: int = 1, times=None,
                   workers: int = 1):
    """Bessel(3) from 0 as the norm of a 3-d Brownian motion; returns ``(times, R)``."""
    t = _check_grid(horizon, steps, times)
    streams = _rng.as_streams(rng)
    dt = np.sqrt(np.diff(t))

    def block(b, start, count):
        gen = streams.generator(_rng.STREAM_BESSEL, b)
        z = gen.standard_normal((streams.block_size, dt.size, 3))[:count]
        w = np.zeros((count, t.size, 3))
        np.cumsum(z * dt[None, :, None], axis=1, out=w[:, 1:, :])
        return np.linalg.norm(w, axis=2)

    return t, np.concatenate(_rng.map_blocks(block, streams, n_paths, workers))


def _first_passage_fraction(a, bb, h, gen, size):
    """Hitting time of level ``a`` above the start by a Brownian bridge over ``[0, h]``.

    ``bb`` is the distance from the level to the bridge's end point. Writing
    the hitting time as ``h s / (1 + s)``, ``s`` is inverse Gaussian with mean
    ``a / bb`` and shape ``a^2 / h``.
    """
    bb = np.maximum(bb, 1e-300)
    s = gen.wald(a / bb, a * a / h, size)
    return h * s / (1.0 + s)


def sample_negative_gamma(spec: LimitLawSpec, rng=None, n_paths: int = 1,
                          workers: int = 1) -> SpiderPaths:
    """Limit law for ``gamma < 0``: spider until ``L = e``, then Bessel(3) on ray ``M``.

    ``extra`` holds ``e`` (= total local time), ``tau`` (inverse local time at
    ``e``; ``inf`` if beyond the horizon, in which case the grid path is just
    the spider with ``L < e`` and the escape lies outside the window) and
    ``M`` (escape ray).
    """
    _require(spec, F.FLAT_RAYS, F.ALL_NEGATIVE)
    streams = _rng.as_streams(rng)
    t = spec.times
    rs, g = spec.ray_space, spec.params.gamma
    law = m_ray_law(rs, spec.params)
    cum = np.cumsum(law)
    cum[-1] = 1.0
    dt = np.diff(t)

    def block(bidx, start, count):
        bs = streams.block_size
        gen = streams.generator(_rng.STREAM_LIMIT, bidx)
        z = gen.standard_normal((bs, dt.size))[:count]
        u = gen.random((bs, dt.size))[:count]
        u = np.where(u == 0.0, np.finfo(float).tiny, u)
        y = np.zeros((count, t.size))
        if dt.size:
            np.cumsum(np.sqrt(dt) * z, axis=1, out=y[:, 1:])
        m = bridge_max(y[:, :-1], y[:, 1:], dt, u)
        S = np.zeros_like(y)
        if dt.size:
            np.maximum.accumulate(np.maximum(m, 0.0), axis=1, out=S[:, 1:])
        touched = m > S[:, :-1]
        if dt.size:
            touched[:, 0] = True
        x = S - y
        np.maximum(x, 0.0, out=x)
        n = _labels(streams, bidx, x, touched, rs, t.size, count)

        eg = streams.generator(_rng.STREAM_EXP_BUDGET, bidx)
        e = eg.exponential(1.0 / abs(g), bs)[:count]
        ray = _categorical(streams.generator(_rng.STREAM_RAY, bidx).random(bs)[:count], cum)
        cross = m >= e[:, None]
        hit = cross.any(axis=1)
        i = np.where(hit, np.argmax(cross, axis=1), dt.size)
        tau = np.full(count, np.inf)

        bes = streams.generator(_rng.STREAM_BESSEL, bidx)
        zb = bes.standard_normal((bs, max(dt.size, 1), 3))[:count]
        aux = streams.generator(_rng.STREAM_AUX, bidx)
        rows = np.flatnonzero(hit)
        if rows.size:
            ii = i[rows]
            y0 = y[rows, ii]
            y1 = y[rows, ii + 1]
            h = dt[ii]
            a = e[rows] - y0
            frac = _first_passage_fraction(a, np.abs(e[rows] - y1), h, aux, rows.size)
            tau[rows] = t[ii] + frac
            for r, k, tk in zip(rows, ii, tau[rows]):
                # Bessel(3) from 0 started at tau on the remaining grid points
                gaps = np.diff(np.concatenate(([tk], t[k + 1:])))
                w = np.cumsum(zb[r, : gaps.size, :] * np.sqrt(gaps)[:, None], axis=0)
                x[r, k + 1:] = np.linalg.norm(w, axis=1)
                S[r, k + 1:] = e[r]
                n[r, k + 1:] = ray[r]
                touched[r, k] = True
                touched[r, k + 1:] = False
        if t.size > 1:
            # a grid point at the origin carries the label of what follows
            at0 = x[:, 0] == 0.0
            n[at0, 0] = n[at0, 1]
        return SpiderPaths(t, x, n, S, touched, {"e": e, "tau": tau, "M": ray})

    return SpiderPaths.concat(_rng.map_blocks(block, streams, n_paths, workers))


def sample_limit(spec: LimitLawSpec, rng=None, n_paths: int = 1, workers: int = 1):
    """Dispatch on the regime; returns ``(paths, weights)`` (weights ``None`` if unweighted)."""
    tag = spec.regime.tag
    if tag == F.BANG_BANG:
        return sample_bangbang(spec, rng, n_paths, workers), None
    if tag == F.MAX_DRIFT:
        ws = sample_maxdrift_weighted(spec, rng, n_paths, workers)
        return ws.paths, ws.weights
    if tag in (F.FLAT_RAYS, F.ALL_NEGATIVE):
        return sample_negative_gamma(spec, rng, n_paths, workers), None
    raise WrongRegime("NullSpider: the limit law is the spider itself; use simulate_spider")
