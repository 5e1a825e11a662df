"""Adaptive quadrature of positive integrands given on the log scale.

The integrands of this package are products of a Gaussian factor with
exponentials and polynomials; they are unimodal on ``[0, inf)`` but their
peak may sit far from the origin and their magnitude may be astronomically
large or small. Working with ``log f`` lets us locate the peak, rescale by
its height and truncate where ``f`` drops below ``1e-14`` of the peak.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from scipy import integrate, optimize

TRUNCATION = 1e-14
LOG_TRUNCATION = math.log(TRUNCATION)


class QuadratureError(RuntimeError):
    pass


def _peak(logf: Callable[[float], float], lo: float, scales: tuple[float, ...]) -> tuple[float, float]:
    cand = [lo]
    for s in scales:
        if s > 0 and np.isfinite(s):
            cand.extend(lo + s * np.geomspace(1e-6, 1e3, 120))
    cand = np.unique(np.asarray(cand))
    vals = np.array([logf(c) for c in cand])
    vals = np.where(np.isnan(vals), -np.inf, vals)
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]):
        raise QuadratureError("integrand vanishes on every probe point")
    a = cand[max(i - 1, 0)]
    b = cand[min(i + 1, cand.size - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda z: -logf(z), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, abs(b))})
        if res.success and -res.fun >= vals[i]:
            return float(res.x), float(-res.fun)
    return float(cand[i]), float(vals[i])


def _edge(logf, start: float, lmax: float, direction: float, width: float, lo: float) -> float:
    """Walk away from the peak until ``log f`` drops below the truncation level."""
    step = max(width, 1e-12)
    z = start
    for _ in range(400):
        nz = z + direction * step
        if direction < 0 and nz <= lo:
            return lo
        if logf(nz) - lmax < LOG_TRUNCATION - 2.0:
            return nz
        z = nz
        step *= 1.5
    raise QuadratureError("integrand does not decay; truncation failed")


def integrate_log(logf: Callable[[float], float], lo: float = 0.0,
                  scales: tuple[float, ...] = (1.0,), epsrel: float = 1e-11,
                  epsabs: float = 0.0) -> tuple[float, float]:
    """Integrate ``exp(logf)`` over ``[lo, inf)``.

    Returns ``(log_integral, relative_error_estimate)``. ``scales`` are
    characteristic lengths used to probe for the peak.
    """
    zpk, lmax = _peak(logf, lo, scales)
    h = max(1e-4 * max(abs(zpk), 1.0), 1e-6)
    if zpk - h >= lo:
        curv = (logf(zpk + h) - 2.0 * lmax + logf(zpk - h)) / h**2
    else:
        curv = (lmax - 2.0 * logf(zpk + h) + logf(zpk + 2.0 * h)) / h**2
    width = 1.0 / math.sqrt(-curv) if np.isfinite(curv) and curv < 0 else max(scales)
    left = lo if zpk <= lo else _edge(logf, zpk, lmax, -1.0, width, lo)
    right = _edge(logf, zpk, lmax, +1.0, width, lo)

    def g(z):
        v = logf(z) - lmax
        return math.exp(v) if v > -745 else 0.0

    pts = sorted({left, right, *[zpk + k * width for k in (-8, -3, -1, 0, 1, 3, 8)]})
    pts = [p for p in pts if left <= p <= right]
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(pts[:-1], pts[1:]):
            if b <= a:
                continue
            v, e = integrate.quad(g, a, b, epsabs=epsabs, epsrel=epsrel, limit=200)
            total += v
            err += e
    if total <= 0:
        return -math.inf, 0.0
    return lmax + math.log(total), err / total


def integrate_positive(logf, lo=0.0, scales=(1.0,), epsrel=1e-11) -> float:
    lv, _ = integrate_log(logf, lo, scales, epsrel)
    return math.exp(lv)
