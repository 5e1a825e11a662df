"""Walsh spider on finitely many rays: state space, metric, exact grid simulation.

The radial part is built through the Skorokhod map: with ``Y_0 = -x0`` and
``S_t = max(0, sup_{u<=t} Y_u)``, the pair ``(S - Y, S)`` is a reflected
Brownian motion started at ``x0`` together with its local time at 0. Between
grid points the running maximum of ``Y`` is drawn exactly from the Brownian
bridge maximum law, so ``(X, L)`` has the exact joint law at every grid time
and a zero between grid points is never missed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from walshpen import rng as _rng
from walshpen.rng import Streams

MU_SUM_TOL = 1e-12


@dataclass(frozen=True)
class RaySpace:
    """Finite ray set with selection probabilities ``weights`` (one per ray)."""

    weights: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1:
            raise ValueError("mu: at least one ray is required")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("mu: every ray weight must be finite and > 0")
        if abs(w.sum() - 1.0) > MU_SUM_TOL:
            raise ValueError(f"mu: weights must sum to 1 (got {float(w.sum())!r})")
        names = tuple(self.names) if self.names else tuple(f"r{k}" for k in range(w.size))
        if len(names) != w.size:
            raise ValueError("rays: number of names differs from number of weights")
        if len(set(names)) != len(names):
            raise ValueError("rays: names must be distinct")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "names", names)

    @classmethod
    def uniform(cls, m: int) -> "RaySpace":
        return cls(np.full(m, 1.0 / m))

    @property
    def size(self) -> int:
        return self.weights.size

    def index(self, ray) -> int:
        """Index of a ray given by name or integer index."""
        if isinstance(ray, (int, np.integer)) and not isinstance(ray, bool):
            if 0 <= int(ray) < self.size:
                return int(ray)
        elif ray in self.names:
            return self.names.index(ray)
        raise KeyError(f"unknown ray {ray!r}")

    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c


@dataclass(frozen=True)
class SpiderPoint:
    """A point ``(radius, ray)``; at radius 0 the ray is irrelevant."""

    radius: float
    ray: int = 0

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValueError("radius must be finite and >= 0")

    def __eq__(self, other):
        if not isinstance(other, SpiderPoint):
            return NotImplemented
        if self.radius == 0 and other.radius == 0:
            return True
        return self.radius == other.radius and self.ray == other.ray

    def __hash__(self):
        return hash((0.0, None) if self.radius == 0 else (self.radius, self.ray))


ORIGIN = SpiderPoint(0.0, 0)


def spider_distance(a: SpiderPoint, b: SpiderPoint) -> float:
    """Tree metric: ``|x-y|`` on a common ray, ``x+y`` across rays."""
    if a.radius == 0 or b.radius == 0 or a.ray == b.ray:
        return abs(a.radius - b.radius)
    return a.radius + b.radius


@dataclass(frozen=True)
class SpiderPath:
    """One discretized trajectory."""

    times: np.ndarray
    radial: np.ndarray
    label: np.ndarray
    local_time: np.ndarray
    touched_zero: np.ndarray  # per step, length len(times) - 1

    def point(self, i: int) -> SpiderPoint:
        return SpiderPoint(float(self.radial[i]), int(self.label[i]))


@dataclass
class SpiderPaths:
    """A batch of trajectories on a common time grid.

    Arrays ``X``, ``N``, ``L`` have shape ``(n_paths, len(times))``;
    ``touched`` has shape ``(n_paths, len(times) - 1)`` and flags steps whose
    bridge reached 0.
    """

    times: np.ndarray
    X: np.ndarray
    N: np.ndarray
    L: np.ndarray
    touched: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    def __len__(self):
        return self.n_paths

    def path(self, i: int) -> SpiderPath:
        return SpiderPath(self.times, self.X[i], self.N[i], self.L[i], self.touched[i])

    def time_index(self, t: float) -> int:
        idx = int(np.searchsorted(self.times, t))
        if idx < self.times.size and np.isclose(self.times[idx], t, rtol=1e-12, atol=1e-12):
            return idx
        if idx > 0 and np.isclose(self.times[idx - 1], t, rtol=1e-12, atol=1e-12):
            return idx - 1
        raise ValueError(f"time {t} is not a grid point")

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(X_t, N_t, L_t)`` across paths at grid time ``t``."""
        i = self.time_index(t)
        return self.X[:, i], self.N[:, i], self.L[:, i]

    def restrict(self, s: float) -> "SpiderPaths":
        """Paths restricted to ``[0, s]`` (``s`` must be a grid time)."""
        i = self.time_index(s)
        return SpiderPaths(self.times[: i + 1], self.X[:, : i + 1], self.N[:, : i + 1],
                           self.L[:, : i + 1], self.touched[:, :i], dict(self.extra))

    def zero_in_window(self, a: float, b: float) -> np.ndarray:
        """Whether each path touched 0 during some step inside ``[a, b]``."""
        ia, ib = self.time_index(a), self.time_index(b)
        return self.touched[:, ia:ib].any(axis=1)

    @staticmethod
    def concat(parts: Sequence["SpiderPaths"]) -> "SpiderPaths":
        extra = {}
        for key in parts[0].extra:
            extra[key] = np.concatenate([p.extra[key] for p in parts])
        return SpiderPaths(parts[0].times,
                           np.concatenate([p.X for p in parts]),
                           np.concatenate([p.N for p in parts]),
                           np.concatenate([p.L for p in parts]),
                           np.concatenate([p.touched for p in parts]),
                           extra)


# --------------------------------------------------------------------------
# bridge primitives


def bridge_max(y0, y1, h, u):
    """Maximum of a Brownian bridge from ``y0`` to ``y1`` over duration ``h``.

    Inverse CDF of ``P(max >= m) = exp(-2 (m - y0)(m - y1) / h)`` evaluated at
    the uniform ``u``.
    """
    d = y1 - y0
    return 0.5 * (y0 + y1 + np.sqrt(d * d - 2.0 * h * np.log(u)))


def bridge_local_time(a, b, h, u):
    """Local time at 0 of a Brownian bridge from ``a`` to ``b`` over ``h``.

    Uses ``P(L > l) = exp(-((|a| + |b| + l)^2 - (b - a)^2) / (2h))``; the atom at
    0 is the probability that the bridge avoids 0.
    """
    d = b - a
    s = np.abs(a) + np.abs(b)
    ell = np.sqrt(d * d - 2.0 * h * np.log(u)) - s
    return np.maximum(ell, 0.0)


def _check_grid(horizon, steps, times):
    if times is not None:
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or t.size < 1 or t[0] != 0.0 or not np.all(np.isfinite(t)):
            raise ValueError("times must be a finite 1-d grid starting at 0")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        return t
    if not np.isfinite(horizon) or horizon < 0:
        raise ValueError("horizon must be finite and >= 0")
    if isinstance(steps, bool) or int(steps) != steps or steps < 1:
        raise ValueError("steps must be a positive integer")
    if horizon == 0:
        return np.zeros(1)
    return np.linspace(0.0, float(horizon), int(steps) + 1)


def grid(*pieces: Iterable[float] | tuple[float, int]) -> np.ndarray:
    """Build a time grid from ``(end, steps)`` pieces, e.g. ``grid((1, 50), (17, 1))``."""
    t = [0.0]
    for end, steps in pieces:
        start = t[-1]
        t.extend(np.linspace(start, end, int(steps) + 1)[1:].tolist())
    return np.asarray(t)


def _reflected_block(x0: float, times: np.ndarray, g: np.random.Generator, count: int,
                     block_size: int, drift: float = 0.0):
    """Skorokhod construction on one block; returns X, L, touched, Y, S."""
    dt = np.diff(times)
    n = dt.size
    z = g.standard_normal((block_size, n))[:count]
    u = g.random((block_size, n))[:count]
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    y = np.empty((count, n + 1))
    y[:, 0] = -x0
    if n:
        np.cumsum(drift * dt + np.sqrt(dt) * z, axis=1, out=y[:, 1:])
        y[:, 1:] -= x0
    m = bridge_max(y[:, :-1], y[:, 1:], dt, u)
    s = np.empty_like(y)
    s[:, 0] = 0.0
    if n:
        np.maximum.accumulate(np.maximum(m, 0.0), axis=1, out=s[:, 1:])
    touched = m > s[:, :-1]
    if x0 == 0.0 and n:
        touched[:, 0] = True
    x = s - y
    np.maximum(x, 0.0, out=x)
    return x, s, touched, y


def simulate_radial_with_local_time(x0: float, horizon: float = 1.0, steps: int = 1,
                                    rng: Streams | int | None = None, n_paths: int = 1,
                                    times=None, drift: float = 0.0, workers: int = 1):
    """Reflected Brownian motion from ``x0`` and its local time at 0.

    Returns ``(times, X, L, touched)`` with ``X`` and ``L`` of shape
    ``(n_paths, len(times))``. ``drift`` is the drift of the driving motion
    ``Y``; a positive value pushes ``X = S - Y`` toward the origin.
    """
    if not np.isfinite(x0) or x0 < 0:
        raise ValueError("x0 must be finite and >= 0")
    if not np.isfinite(drift):
        raise ValueError("drift must be finite")
    t = _check_grid(horizon, steps, times)
    streams = _rng.as_streams(rng)

    def block(b, start, count):
        g = streams.generator(_rng.STREAM_RADIAL, b)
        x, s, touched, _ = _reflected_block(float(x0), t, g, count, streams.block_size, drift)
        return x, s, touched

    parts = _rng.map_blocks(block, streams, n_paths, workers)
    X = np.concatenate([p[0] for p in parts])
    L = np.concatenate([p[1] for p in parts])
    touched = np.concatenate([p[2] for p in parts])
    return t, X, L, touched


def _categorical(u: np.ndarray, cum: np.ndarray) -> np.ndarray:
    return np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)


def label_excursions(radial: np.ndarray, touched: np.ndarray, ray_space: RaySpace,
                     rng: np.random.Generator, start_ray: int | None = None,
                     draws: np.ndarray | None = None) -> np.ndarray:
    """Ray labels: one i.i.d. ``mu`` draw per excursion.

    A new excursion starts after every step flagged in ``touched``. Points
    before the first zero keep ``start_ray``; a point at the origin takes the
    label of the excursion that follows it.
    """
    X = np.atleast_2d(np.asarray(radial, dtype=float))
    T = np.atleast_2d(np.asarray(touched, dtype=bool))
    P, n1 = X.shape
    if T.shape != (P, n1 - 1):
        raise ValueError("touched must have one entry per step")
    if draws is None:
        draws = rng.random((P, n1))
    cat = _categorical(draws, ray_space.cumulative())
    idx = np.zeros((P, n1), dtype=np.int64)
    steps = np.arange(1, n1)
    idx[:, 1:] = np.where(T, steps, 0)
    np.maximum.accumulate(idx, axis=1, out=idx)
    labels = np.take_along_axis(cat, idx, axis=1)
    never = idx == 0
    if start_ray is not None:
        labels = np.where(never, int(start_ray), labels)
    if n1 > 1:
        at_origin = X[:, 0] == 0.0
        labels[at_origin, 0] = labels[at_origin, 1]
    return labels if np.ndim(radial) > 1 else labels[0]


def simulate_spider(ray_space: RaySpace, start: SpiderPoint = ORIGIN, horizon: float = 1.0,
                    steps: int = 1, rng: Streams | int | None = None, n_paths: int = 1,
                    times=None, workers: int = 1) -> SpiderPaths:
    """Simulate ``n_paths`` Walsh spiders from ``start`` on a common grid."""
    if not isinstance(ray_space, RaySpace):
        raise TypeError("ray_space must be a RaySpace")
    start_ray = ray_space.index(start.ray) if start.radius > 0 else None
    t = _check_grid(horizon, steps, times)
    streams = _rng.as_streams(rng)
    x0 = float(start.radius)

    def block(b, begin, count):
        g = streams.generator(_rng.STREAM_RADIAL, b)
        x, s, touched, _ = _reflected_block(x0, t, g, count, streams.block_size)
        gl = streams.generator(_rng.STREAM_LABELS, b)
        draws = gl.random((streams.block_size, t.size))[:count]
        n = label_excursions(x, touched, ray_space, gl, start_ray, draws=draws)
        return SpiderPaths(t, x, n, s, touched)

    return SpiderPaths.concat(_rng.map_blocks(block, streams, n_paths, workers))


def paths_to_rows(paths: SpiderPaths, ray_space: RaySpace, weights=None, first_id: int = 0):
    """Rows ``(path_id, t, X, N, L, touched_zero[, weight])`` for CSV export.

    ``touched_zero`` on row ``i`` refers to the step ending at ``t_i``; on the
    first row it records whether the path starts at the origin.
    """
    names = ray_space.names
    for p in range(paths.n_paths):
        for i, t in enumerate(paths.times):
            touched = bool(paths.X[p, 0] == 0.0) if i == 0 else bool(paths.touched[p, i - 1])
            row = [first_id + p, repr(float(t)), repr(float(paths.X[p, i])),
                   names[int(paths.N[p, i])], repr(float(paths.L[p, i])), int(touched)]
            if weights is not None:
                row.append(repr(float(weights[p])))
            yield row
