"""Closed-form kernel: killed expectations, local-time laws, normalizers, limit martingale.

Notation. ``Y`` is a Brownian motion from ``x >= 0``, ``T`` its first zero
and ``L`` its local time at 0.

* ``J(b, x, t) = E_x[exp(b Y_t); T > t]``
* ``I(b, g, x, t) = E_x[exp(b |Y_t| + g L_t); T <= t]``
* ``K`` and ``L_majorant`` are the simple majorants of ``I`` and ``J`` that
  are also equivalent to them as ``t -> inf``.
* ``R(x, k, t) = W_{x,k}[exp(alpha_{N_t} X_t + gamma L_t)]`` for the spider,
  ``Q`` its majorant built from ``K`` and ``L_majorant``.
* ``M(s, x, k, l)`` is the density on ``F_s`` of the ``t -> inf`` limit of
  the penalized laws.

Every scalar routine here is pure; array arguments are broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from walshpen.quadrature import integrate_log
from walshpen.spider import RaySpace

SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)
DEGENERATE_GAP = 1e-9

EXACT = "exact"
MAJORANT = "majorant"
EQUIVALENT = "asymptotic_equivalent"
QUADRATURE = "quadrature"

BANG_BANG = "BangBang"
MAX_DRIFT = "MaxDrift"
NULL_SPIDER = "NullSpider"
FLAT_RAYS = "FlatRays"
ALL_NEGATIVE = "AllNegative"
REGIMES = (BANG_BANG, MAX_DRIFT, NULL_SPIDER, FLAT_RAYS, ALL_NEGATIVE)


@dataclass(frozen=True)
class FormulaValue:
    value: float | np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in (EXACT, MAJORANT, EQUIVALENT, QUADRATURE):
            raise ValueError(f"unknown kind {self.kind!r}")
        if not np.all(np.isfinite(self.value)):
            raise FloatingPointError(f"non-finite {self.kind} value: {self.value!r}")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class PenaltyParams:
    """Per-ray coefficients ``alpha`` of the radius and coefficient ``gamma`` of local time."""

    alpha: np.ndarray
    gamma: float

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float).ravel()
        if a.size < 1 or not np.all(np.isfinite(a)):
            raise ValueError("alpha: entries must be finite and there must be at least one")
        if not math.isfinite(float(self.gamma)):
            raise ValueError("gamma must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def abar(self) -> float:
        return float(self.alpha.max())

    def check(self, ray_space: RaySpace) -> None:
        if self.alpha.size != ray_space.size:
            raise ValueError(f"alpha: expected {ray_space.size} entries, got {self.alpha.size}")


@dataclass(frozen=True)
class Regime:
    tag: str
    argmax_set: tuple[int, ...] = ()
    theta: np.ndarray | None = field(default=None, compare=False)
    abar: float = 0.0

    @property
    def name(self) -> str:
        return self.tag


def _check_t(t):
    if not np.all(np.isfinite(t)) or np.any(np.asarray(t) <= 0):
        raise ValueError("t must be finite and > 0")


def _check_x(x):
    if not np.all(np.isfinite(x)) or np.any(np.asarray(x) < 0):
        raise ValueError("x must be finite and >= 0")


def _check_real(*vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite input")


# --------------------------------------------------------------------------
# helpers around erfcx
#
# w(c) = 1 - sqrt(pi) c erfcx(c) is the small remainder that appears when the
# Gaussian tail is divided by its leading asymptotic; computing it directly
# for large c would cancel, so an asymptotic series takes over at c >= 8.

_ASYM_N = 40
_ASYM_COEF = np.array([(-1.0) ** (n + 1) * special.factorial2(2 * n - 1, exact=False) / 2.0**n
                       for n in range(1, _ASYM_N + 1)])
_ASYM_CUT = 8.0


def _w(c):
    c = np.asarray(c, dtype=float)
    big = c >= _ASYM_CUT
    cs = np.where(big, _ASYM_CUT, c)
    out = 1.0 - SQRT_PI * cs * special.erfcx(cs)
    if big.any():
        ic2 = 1.0 / (c[big] * c[big])
        out[big] = np.polynomial.polynomial.polyval(ic2, np.concatenate(([0.0], _ASYM_COEF)))
    return out


def _wprime(c):
    c = np.asarray(c, dtype=float)
    big = c >= _ASYM_CUT
    cs = np.where(big, _ASYM_CUT, c)
    out = 2.0 * cs - SQRT_PI * (1.0 + 2.0 * cs * cs) * special.erfcx(cs)
    if big.any():
        ic = 1.0 / c[big]
        n = np.arange(1, _ASYM_N + 1)
        out[big] = np.sum(-2.0 * n * _ASYM_COEF * ic[:, None] ** (2 * n + 1), axis=1)
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_NARROW = 0.5


def _erfcx_diff(c1, width):
    """``erfcx(c1) - erfcx(c1 + width)`` for ``width >= 0`` without cancellation.

    Narrow intervals integrate ``-erfcx' = 2 w / sqrt(pi)`` by Gauss-Legendre;
    wide ones subtract directly, which is then harmless.
    """
    c1, width = np.broadcast_arrays(np.asarray(c1, dtype=float), np.asarray(width, dtype=float))
    c2 = c1 + width
    out = special.erfcx(c1) - special.erfcx(c2)
    narrow = width <= _NARROW
    if narrow.any():
        lo, wd = c1[narrow], width[narrow]
        nodes = lo[:, None] + 0.5 * wd[:, None] * (_GL_X + 1.0)
        out[narrow] = wd / SQRT_PI * (_w(nodes) @ _GL_W)
    return out


# --------------------------------------------------------------------------
# J and its majorant


def _J_nonpos(beta, x, t):
    """J for beta <= 0 (arrays broadcast)."""
    beta, x, t = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(beta, x, t))
    out = np.zeros(beta.shape)
    b = -beta
    rt = np.sqrt(2.0 * t)
    with np.errstate(all="ignore"):
        c1 = (b * t - x) / rt
        c2 = (b * t + x) / rt
        g = np.exp(-x * x / (2.0 * t))
    zero_beta = (beta == 0.0) & (x > 0)
    out[zero_beta] = special.erf(x[zero_beta] / rt[zero_beta])
    mid = (beta < 0.0) & (x > 0) & (c1 >= -5.0)
    out[mid] = 0.5 * g[mid] * _erfcx_diff(c1[mid], 2.0 * x[mid] / rt[mid])
    far = (beta < 0.0) & (x > 0) & (c1 < -5.0)
    if far.any():
        bf, xf, tf = beta[far], x[far], t[far]
        first = np.exp(bf * xf + bf * bf * tf / 2.0 + special.log_ndtr(-c1[far] * math.sqrt(2.0)))
        out[far] = first - 0.5 * g[far] * special.erfcx(c2[far])
    return out


def _J(beta, x, t):
    beta, x, t = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(beta, x, t))
    ab = np.abs(beta)
    out = _J_nonpos(-ab, x, t)
    pos = beta > 0
    if pos.any():
        out[pos] += 2.0 * np.sinh(beta[pos] * x[pos]) * np.exp(t[pos] * beta[pos] ** 2 / 2.0)
    return out


def eval_J(beta, x, t) -> FormulaValue:
    """``E_x[exp(beta Y_t); T > t]`` in closed form (Gaussian tails)."""
    _check_real(beta)
    _check_x(x)
    _check_t(t)
    v = _J(beta, x, t)
    return FormulaValue(v if v.ndim else float(v), EXACT)


def eval_J_quadrature(beta: float, x: float, t: float) -> FormulaValue:
    """Direct quadrature of the reflected-density integral defining J."""
    _check_real(beta)
    _check_x(x)
    _check_t(t)
    if x == 0.0:
        return FormulaValue(0.0, QUADRATURE)
    c = -0.5 * math.log(2.0 * math.pi * t)

    def logf(y):
        if y <= 0.0:
            return -math.inf
        v = 2.0 * x * y / t
        # log(1 - exp(-v)), kept accurate when v underflows
        if v < 1e-8:
            lg = math.log(2.0 * x / t) + math.log(y) + math.log1p(-0.5 * v)
        else:
            lg = math.log(-math.expm1(-v))
        return c - (x - y) ** 2 / (2.0 * t) + beta * y + lg

    scales = tuple(s for s in (math.sqrt(t), x, abs(beta) and 1.0 / abs(beta), x + beta * t) if s > 0)
    lv, _ = integrate_log(logf, 0.0, scales)
    return FormulaValue(math.exp(lv), QUADRATURE)


def _L(beta, x, t):
    beta, x, t = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(beta, x, t))
    nz = beta != 0.0
    safe = np.where(nz, beta, 1.0)
    with np.errstate(over="ignore"):
        v = np.where(nz, np.sqrt(2.0 / (np.pi * t**3)) * x / safe**2, np.sqrt(2.0 / (np.pi * t)) * x)
    v = np.where(x == 0.0, 0.0, v)
    pos = beta > 0.0
    return v + np.where(pos, 2.0 * np.sinh(np.where(pos, beta, 0.0) * x)
                        * np.exp(t * np.where(pos, beta, 0.0) ** 2 / 2.0), 0.0)


def eval_L_majorant(beta, x, t) -> FormulaValue:
    """Majorant of J that is also equivalent to it as ``t -> inf``."""
    _check_real(beta)
    _check_x(x)
    _check_t(t)
    v = _L(beta, x, t)
    return FormulaValue(v if v.ndim else float(v), MAJORANT)


# --------------------------------------------------------------------------
# law of (|Y_t|, L_t)


def density_L_plus_X(z, x, t):
    """Density of ``L_t + |Y_t|`` on ``{L_t > 0}`` (defective when ``x > 0``)."""
    _check_t(t)
    z = np.asarray(z, dtype=float)
    v = np.sqrt(2.0 / (np.pi * t**3)) * z * (x + z) * np.exp(-(x + z) ** 2 / (2.0 * t))
    return np.where(z >= 0, v, 0.0) if v.ndim else float(v if z >= 0 else 0.0)


def cdf_L_plus_X(z, x, t):
    """``P(L_t + |Y_t| <= z, L_t > 0)``; tends to ``P_x(T <= t)`` as ``z -> inf``."""
    _check_t(t)
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    rt = np.sqrt(t)
    v = (-np.sqrt(2.0 / (np.pi * t)) * z * np.exp(-(x + z) ** 2 / (2.0 * t))
         + 2.0 * (special.ndtr((x + z) / rt) - special.ndtr(x / rt)))
    return v if v.ndim else float(v)


def hit_probability(x, t):
    """``P_x(T <= t) = 2 (1 - Phi(x / sqrt t))``."""
    return special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0 * t))


def joint_density_XL(y, l, x, t):
    """Density of ``(|Y_t|, L_t)`` at ``(y, l)`` with ``l > 0``."""
    _check_t(t)
    s = np.asarray(y, dtype=float) + np.asarray(l, dtype=float) + x
    v = np.sqrt(2.0 / (np.pi * t**3)) * s * np.exp(-s * s / (2.0 * t))
    return v if np.ndim(v) else float(v)


# --------------------------------------------------------------------------
# I: exact closed form and quadrature


def _G(phi, x, t):
    """``sqrt(2/(pi t^3)) * int_0^inf (x+z) exp(-(x+z)^2/(2t) + phi z) dz``."""
    phi, x, t = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(phi, x, t))
    c = (x - phi * t) / np.sqrt(2.0 * t)
    g = np.exp(-x * x / (2.0 * t))
    k = np.sqrt(2.0 / (np.pi * t))
    out = np.empty(c.shape)
    right = c >= 0.0
    cr = c[right]
    out[right] = g[right] * (k[right] * _w(cr) + x[right] / t[right] * special.erfcx(cr))
    left = ~right
    pl, xl, tl = phi[left], x[left], t[left]
    h = np.exp(-pl * xl + pl * pl * tl / 2.0) * special.ndtr(-c[left] * math.sqrt(2.0))
    out[left] = k[left] * g[left] + 2.0 * pl * h
    return out


def _Gprime(phi, x, t):
    """Derivative of ``_G`` in ``phi``."""
    phi, x, t = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(phi, x, t))
    c = (x - phi * t) / np.sqrt(2.0 * t)
    g = np.exp(-x * x / (2.0 * t))
    out = np.empty(c.shape)
    right = c >= 0.0
    cr, xr, tr = c[right], x[right], t[right]
    out[right] = g[right] * (-_wprime(cr) / SQRT_PI + xr * np.sqrt(2.0 / (np.pi * tr)) * _w(cr))
    left = ~right
    pl, xl, tl = phi[left], x[left], t[left]
    h = np.exp(-pl * xl + pl * pl * tl / 2.0) * special.ndtr(-c[left] * math.sqrt(2.0))
    hp = (pl * tl - xl) * h + np.sqrt(tl / (2.0 * np.pi)) * g[left]
    out[left] = 2.0 * h + 2.0 * pl * hp
    return out


def _I(beta, gamma, x, t):
    beta, gamma, x, t = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(beta, gamma, x, t))
    d = beta - gamma
    close = np.abs(d) <= 1e-7 * np.maximum(1.0, np.maximum(np.abs(beta), np.abs(gamma)))
    out = np.empty(d.shape)
    out[close] = _Gprime(0.5 * (beta[close] + gamma[close]), x[close], t[close])
    far = ~close
    out[far] = (_G(beta[far], x[far], t[far]) - _G(gamma[far], x[far], t[far])) / d[far]
    return out


def eval_I(beta, gamma, x, t) -> FormulaValue:
    """``E_x[exp(beta |Y_t| + gamma L_t); T <= t]`` in closed form.

    Averaging the exponent over the uniform ratio ``|Y_t| / (L_t + |Y_t|)``
    reduces ``I`` to a divided difference of ``_G``; the equal-exponent case
    uses the derivative.
    """
    _check_real(beta, gamma)
    _check_x(x)
    _check_t(t)
    v = _I(beta, gamma, x, t)
    return FormulaValue(v if v.ndim else float(v), EXACT)


def eval_I_quadrature(beta: float, gamma: float, x: float, t: float) -> FormulaValue:
    """Adaptive quadrature of ``I`` against the density of ``L_t + |Y_t|``."""
    _check_real(beta, gamma)
    _check_x(x)
    _check_t(t)
    c = 0.5 * math.log(2.0 / (math.pi * t**3))
    d = beta - gamma
    hi = max(beta, gamma)

    def log_zm(z):
        # log of z * E[exp(Phi z)], Phi uniform between beta and gamma
        if abs(d) <= DEGENERATE_GAP:
            return math.log(z) + beta * z
        return hi * z + math.log(-math.expm1(-abs(d) * z)) - math.log(abs(d))

    def logf(z):
        if z <= 0.0:
            return -math.inf
        return c + math.log(x + z) - (x + z) ** 2 / (2.0 * t) + log_zm(z)

    scales = [math.sqrt(t)]
    for phi in (beta, gamma):
        if phi != 0.0:
            scales.append(1.0 / abs(phi))
        if phi * t - x > 0:
            scales.append(phi * t - x)
    lv, _ = integrate_log(logf, 0.0, tuple(scales))
    return FormulaValue(math.exp(lv), QUADRATURE)


# --------------------------------------------------------------------------
# K: majorant/equivalent of I


def k_row(beta: float, gamma: float) -> int:
    """Row (1..7) of the K table that applies to ``(beta, gamma)``."""
    if beta < 0 and gamma < 0:
        return 1
    if beta == 0 and gamma < 0:
        return 2
    if gamma == 0 and beta < 0:
        return 3
    if beta == 0 and gamma == 0:
        return 4
    if beta > 0 and beta > gamma:
        return 5
    if gamma > 0 and gamma > beta:
        return 6
    return 7


def _K_scalar(beta: float, gamma: float, x: float, t: float) -> float:
    with np.errstate(over="ignore", divide="ignore"):
        return float(_K_row(k_row(beta, gamma), *map(np.float64, (beta, gamma, x, t))))


def _K_row(row, beta, gamma, x, t):
    # numpy scalars: overflow gives inf (rejected by FormulaValue) instead of raising
    if row == 1:
        return np.sqrt(2.0 / (np.pi * t**3)) * (
            x / (beta * gamma) + (abs(beta) + abs(gamma)) / (beta**2 * gamma**2))
    if row == 2:
        return np.sqrt(2.0 / (np.pi * t)) / abs(gamma)
    if row == 3:
        return np.sqrt(2.0 / (np.pi * t)) / abs(beta)
    if row == 4:
        return 1.0
    if row in (5, 6):
        top, other = (beta, gamma) if row == 5 else (gamma, beta)
        gap = top - other
        return (np.sqrt(2.0 / (np.pi * t)) / gap
                + 2.0 * top / gap * np.exp(-top * x + t * top * top / 2.0))
    g = gamma
    return g * np.sqrt(2.0 * t / np.pi) + 2.0 * (t * g * g + 1.0) * np.exp(-g * x + t * g * g / 2.0)


def eval_K(beta, gamma, x, t) -> FormulaValue:
    """Seven-case majorant of ``I`` (also its equivalent as ``t -> inf``)."""
    _check_real(beta, gamma)
    _check_x(x)
    _check_t(t)
    v = np.vectorize(_K_scalar, otypes=[float])(beta, gamma, x, t)
    return FormulaValue(v if v.ndim else float(v), MAJORANT)


# --------------------------------------------------------------------------
# Q and R for the spider


def _ray_index(ray_space: RaySpace, k):
    if np.ndim(k):
        return np.asarray(k, dtype=np.int64)
    return ray_space.index(k)


def eval_Q(ray_space: RaySpace, params: PenaltyParams, x, k, t) -> FormulaValue:
    """``sum_m mu_m K(alpha_m, gamma, x, t) + L_majorant(alpha_k, x, t)``."""
    params.check(ray_space)
    k = _ray_index(ray_space, k)
    _check_x(x)
    _check_t(t)
    mu, a, g = ray_space.weights, params.alpha, params.gamma
    total = sum(mu[m] * eval_K(a[m], g, x, t).value for m in range(mu.size))
    total = total + eval_L_majorant(a[k], x, t).value
    return FormulaValue(total, MAJORANT)


def eval_R(ray_space: RaySpace, params: PenaltyParams, x, k, t) -> FormulaValue:
    """Exact ``W_{x,k}[exp(alpha_{N_t} X_t + gamma L_t)]``.

    Before the first zero the ray is ``k`` and ``L = 0``; after it the ray at
    time ``t`` is a fresh ``mu`` draw independent of ``(X_t, L_t)``.
    """
    params.check(ray_space)
    k = _ray_index(ray_space, k)
    _check_x(x)
    _check_t(t)
    mu, a, g = ray_space.weights, params.alpha, params.gamma
    total = sum(mu[m] * eval_I(a[m], g, x, t).value for m in range(mu.size))
    total = total + eval_J(a[k], x, t).value
    return FormulaValue(total, EXACT)


# --------------------------------------------------------------------------
# regimes, asymptotics of Q, limit martingale


def classify_regime(ray_space: RaySpace, params: PenaltyParams) -> Regime:
    """Which of the five limit regimes ``(alpha, gamma)`` falls in."""
    params.check(ray_space)
    a, g, mu = params.alpha, params.gamma, ray_space.weights
    abar = float(a.max())
    hits = {
        BANG_BANG: g > 0 and g >= abar,
        MAX_DRIFT: abar > g and abar > 0,
        NULL_SPIDER: g == 0 and abar <= 0,
        FLAT_RAYS: g < 0 and abar == 0,
        ALL_NEGATIVE: g < 0 and abar < 0,
    }
    tags = [name for name, ok in hits.items() if ok]
    assert len(tags) == 1, f"regime conditions overlap or miss: {tags}"
    tag = tags[0]
    if tag == MAX_DRIFT:
        J = tuple(int(m) for m in np.flatnonzero(a == abar))
        return Regime(tag, J, None, abar)
    if tag == FLAT_RAYS:
        J = tuple(int(m) for m in np.flatnonzero(a == 0))
        theta = np.zeros(mu.size)
        theta[list(J)] = abs(g) / mu[list(J)].sum()
        return Regime(tag, J, theta, abar)
    if tag == ALL_NEGATIVE:
        num = 1.0 / a**2 + np.sum(mu / (a * g))
        den = np.sum(mu * (np.abs(a) + abs(g)) / (a**2 * g**2))
        return Regime(tag, (), num / den, abar)
    return Regime(tag, (), None, abar)


def q_row(params: PenaltyParams) -> int:
    """Row (1..7) of the large-``u`` equivalents table of ``Q``."""
    a, g = params.alpha, params.gamma
    abar = float(a.max())
    if g > 0 and g >= abar:
        return 1 if abar == g else 2
    if abar > g and abar > 0:
        return 3
    if g == 0:
        return 4 if abar == 0 else 5
    return 6 if abar == 0 else 7


def eval_Q_asymptotic(ray_space: RaySpace, params: PenaltyParams, x, k, u) -> FormulaValue:
    """Equivalent of ``Q(x, k, u)`` as ``u -> inf`` (seven cases)."""
    params.check(ray_space)
    k = _ray_index(ray_space, k)
    _check_x(x)
    _check_t(u)
    a, g, mu = params.alpha, params.gamma, ray_space.weights
    x = np.asarray(x, dtype=float)
    abar = float(a.max())
    row = q_row(params)
    if row == 1:
        inJ = a == g
        v = 2.0 * mu[inJ].sum() * u * g * g * np.exp(-g * x + u * g * g / 2.0)
    elif row == 2:
        v = np.sum(2.0 * g * mu / (g - a)) * np.exp(-g * x + u * g * g / 2.0)
    elif row == 3:
        inJ = a == abar
        v = np.exp(u * abar**2 / 2.0) * (
            2.0 * abar / (abar - g) * mu[inJ].sum() * np.exp(-abar * x)
            + 2.0 * np.sinh(abar * x) * inJ[k])
    elif row == 4:
        v = mu[a == 0].sum() + 0.0 * x
    elif row == 5:
        v = math.sqrt(2.0 / (math.pi * u)) * np.sum(mu / np.abs(a)) + 0.0 * x
    elif row == 6:
        inJ = a == 0
        v = math.sqrt(2.0 / (math.pi * u)) * (mu[inJ].sum() / abs(g) + x * inJ[k])
    else:
        v = math.sqrt(2.0 / (math.pi * u**3)) * (
            np.sum(mu * (np.abs(a) + abs(g)) / (a**2 * g**2))
            + x * (1.0 / a[k] ** 2 + np.sum(mu / (a * g))))
    return FormulaValue(v if np.ndim(v) else float(v), EQUIVALENT)


def eval_M(ray_space: RaySpace, params: PenaltyParams, s, x, k, l,
           regime: Regime | None = None):
    """Limit martingale ``M(s, X_s, N_s, L_s)``; arrays are broadcast."""
    if regime is None:
        regime = classify_regime(ray_space, params)
    mu = ray_space.weights
    g = params.gamma
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    l = np.asarray(l, dtype=float)
    k = _ray_index(ray_space, k)
    tag = regime.tag
    if tag == BANG_BANG:
        v = np.exp(g * (l - x) - s * g * g / 2.0)
    elif tag == MAX_DRIFT:
        ab = regime.abar
        inJ = np.isin(k, regime.argmax_set)
        coef = (ab - g) / (ab * mu[list(regime.argmax_set)].sum())
        v = np.exp(g * l - s * ab * ab / 2.0) * (np.exp(-ab * x) + coef * np.sinh(ab * x) * inJ)
    elif tag == NULL_SPIDER:
        v = np.ones(np.broadcast(s, x, l, k).shape)
    else:
        v = np.exp(g * l) * (1.0 + regime.theta[k] * x)
    return v if np.ndim(v) else float(v)


def eval_return_prob(abar: float, y):
    """Probability that ``|B|`` (B Brownian with drift ``abar``) revisits 0 after being at ``y``."""
    if not abar > 0:
        raise ValueError("abar must be > 0")
    v = 2.0 * special.expit(-2.0 * abar * np.asarray(y, dtype=float))
    return v if np.ndim(v) else float(v)


def m_ray_law(ray_space: RaySpace, params: PenaltyParams) -> np.ndarray:
    """Law of the escape ray when ``gamma < 0`` and every ``alpha <= 0``."""
    params.check(ray_space)
    a, g, mu = params.alpha, params.gamma, ray_space.weights
    if not (g < 0 and a.max() <= 0):
        raise ValueError("escape ray law needs gamma < 0 and alpha <= 0")
    J = a == 0
    if J.any():
        return np.where(J, mu, 0.0) / mu[J].sum()
    num = mu * (abs(g) / a**2 + np.sum(mu / np.abs(a)))
    return num / np.sum(mu * (np.abs(a) + abs(g)) / a**2)


def regime_from_name(name: str) -> str:
    for r in REGIMES:
        if r.lower() == name.lower():
            return r
    raise KeyError(name)


def as_params(alpha: Sequence[float], gamma: float) -> PenaltyParams:
    return PenaltyParams(np.asarray(alpha, dtype=float), gamma)
