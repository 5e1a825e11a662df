"""Statistical checks used by the verification suites.

Every check returns a :class:`TestReport`. A report carries a rule that
relates its statistic to its threshold, so ``passed`` can always be
recomputed from the stored numbers:

* ``"p>="``: the statistic is a p-value and passes when it is at least the level;
* ``"|x|<="``: passes when the absolute statistic is within the threshold;
* ``"x<="``: passes when the statistic is at most the threshold.

A *negative control* is a check that is expected to fail; a suite succeeds
when all ordinary checks pass and all negative controls fail.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats as sps

from walshpen.rng import STREAM_PERMUTATION, Streams

DEFAULT_LEVEL = 0.01
MIN_SAMPLES = 100
RULES = ("p>=", "|x|<=", "x<=")

REPORT_FIELDS = ("name", "statistic", "threshold", "rule", "p_value", "passed",
                 "negative_control", "n", "seed")


@dataclass(frozen=True)
class TestReport:
    name: str
    statistic: float
    threshold: float
    rule: str
    passed: bool
    n: int
    seed: int | None = None
    p_value: float = math.nan
    negative_control: bool = False

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")
        if bool(self.passed) != _apply_rule(self.rule, self.statistic, self.threshold):
            raise ValueError("passed flag disagrees with statistic and threshold")

    @property
    def ok(self) -> bool:
        """True when the outcome is the expected one (negative controls must fail)."""
        return self.passed != self.negative_control

    def row(self) -> list:
        d = asdict(self)
        return [_fmt(d[k]) for k in REPORT_FIELDS]

    def line(self) -> str:
        tag = "NEG-CONTROL " if self.negative_control else ""
        verdict = "PASS" if self.ok else "FAIL"
        return (f"{verdict} {tag}{self.name}: statistic={self.statistic:.6g} "
                f"rule {self.rule} {self.threshold:.6g} (n={self.n}, seed={self.seed})")


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _apply_rule(rule: str, statistic: float, threshold: float) -> bool:
    if rule == "p>=":
        return bool(statistic >= threshold)
    if rule == "|x|<=":
        return bool(abs(statistic) <= threshold)
    return bool(statistic <= threshold)


def make_report(name, statistic, threshold, rule, n, seed=None, p_value=math.nan,
                negative_control=False) -> TestReport:
    statistic = float(statistic)
    return TestReport(name, statistic, float(threshold), rule,
                      _apply_rule(rule, statistic, float(threshold)), int(n), seed,
                      float(p_value), bool(negative_control))


def suite_ok(reports: Iterable[TestReport]) -> bool:
    return all(r.ok for r in reports)


# --------------------------------------------------------------------------


def _clean(samples, what="samples") -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if np.isnan(x).any():
        raise ValueError(f"{what}: NaN values are not allowed")
    return x


def effective_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w * w))


def _check_weights(w, n):
    w = np.asarray(w, dtype=float).ravel()
    if w.size != n or not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be finite, nonnegative, not all zero, one per sample")
    return w


def weighted_ecdf(samples, weights):
    """Sorted sample points and the weighted ECDF just after each of them."""
    order = np.argsort(samples, kind="stable")
    xs = samples[order]
    c = np.cumsum(weights[order])
    return xs, c / c[-1]


def ks_one_sample(samples, cdf: Callable[[np.ndarray], np.ndarray], level: float = DEFAULT_LEVEL,
                  name: str = "ks_one_sample", seed=None, weights=None,
                  negative_control: bool = False) -> TestReport:
    """Kolmogorov-Smirnov test of ``samples`` against ``cdf`` (asymptotic p-value).

    With ``weights`` the empirical CDF is weighted and the Kish effective
    sample size replaces ``n`` in the asymptotic law.
    """
    x = _clean(samples)
    if weights is None:
        if x.size < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
        res = sps.kstest(x, cdf, method="asymp")
        return make_report(name, res.pvalue, level, "p>=", x.size, seed, res.pvalue, negative_control)
    w = _check_weights(weights, x.size)
    n_eff = effective_size(w)
    if n_eff < MIN_SAMPLES:
        raise ValueError(f"effective sample size {n_eff:.1f} below {MIN_SAMPLES}")
    xs, F = weighted_ecdf(x, w)
    G = np.asarray(cdf(xs), dtype=float)
    Fprev = np.concatenate(([0.0], F[:-1]))
    d = max(np.max(F - G), np.max(G - Fprev))
    p = float(sps.kstwobign.sf(d * math.sqrt(n_eff)))
    return make_report(name, p, level, "p>=", round(n_eff), seed, p, negative_control)


def ks_two_sample(samples_a, samples_b, level: float = DEFAULT_LEVEL, name: str = "ks_two_sample",
                  seed=None, weights_a=None, weights_b=None,
                  negative_control: bool = False) -> TestReport:
    """Two-sample KS test; either side may carry importance weights."""
    a = _clean(samples_a, "samples_a")
    b = _clean(samples_b, "samples_b")
    if weights_a is None and weights_b is None:
        if min(a.size, b.size) < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples per side")
        res = sps.ks_2samp(a, b, method="asymp")
        return make_report(name, res.pvalue, level, "p>=", a.size + b.size, seed, res.pvalue,
                           negative_control)
    wa = np.ones(a.size) if weights_a is None else _check_weights(weights_a, a.size)
    wb = np.ones(b.size) if weights_b is None else _check_weights(weights_b, b.size)
    na, nb = effective_size(wa), effective_size(wb)
    if min(na, nb) < MIN_SAMPLES:
        raise ValueError(f"effective sample sizes ({na:.1f}, {nb:.1f}) below {MIN_SAMPLES}")
    pts = np.union1d(a, b)

    def F(x, w):
        order = np.argsort(x, kind="stable")
        c = np.concatenate(([0.0], np.cumsum(w[order]))) / w.sum()
        return c[np.searchsorted(x[order], pts, side="right")]

    d = float(np.max(np.abs(F(a, wa) - F(b, wb))))
    n_eff = na * nb / (na + nb)
    p = float(sps.kstwobign.sf(d * math.sqrt(n_eff)))
    return make_report(name, p, level, "p>=", round(na + nb), seed, p, negative_control)


def chi_square_rays(counts, expected_law, level: float = DEFAULT_LEVEL, name: str = "chi_square_rays",
                    seed=None, negative_control: bool = False) -> TestReport:
    """Pearson goodness of fit of ray counts to a probability vector.

    Categories with zero expected probability are dropped from the
    statistic; any count observed in one of them fails the test outright.
    """
    obs = np.asarray(counts, dtype=float).ravel()
    p = np.asarray(expected_law, dtype=float).ravel()
    if obs.size != p.size:
        raise ValueError("counts and expected_law differ in length")
    if np.any(obs < 0) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("expected_law must be a probability vector and counts nonnegative")
    n = obs.sum()
    live = p > 0
    if np.any(obs[~live] > 0):
        return make_report(name, 0.0, level, "p>=", n, seed, 0.0, negative_control)
    if live.sum() < 2:
        return make_report(name, 1.0, level, "p>=", n, seed, 1.0, negative_control)
    res = sps.chisquare(obs[live], n * p[live])
    return make_report(name, res.pvalue, level, "p>=", n, seed, res.pvalue, negative_control)


def chi_square_statistic(counts, expected_law) -> float:
    obs = np.asarray(counts, dtype=float)
    p = np.asarray(expected_law, dtype=float)
    e = obs.sum() * p
    live = e > 0
    return float(np.sum((obs[live] - e[live]) ** 2 / e[live]))


def independence_check(samples_a, samples_b, level: float = DEFAULT_LEVEL,
                       name: str = "independence", seed: int = 0, n_perm: int = 1000,
                       negative_control: bool = False) -> TestReport:
    """Spearman rank correlation with a permutation p-value.

    The permutations come from the dedicated permutation stream of ``seed``,
    so the p-value is reproducible.
    """
    a = _clean(samples_a, "samples_a")
    b = _clean(samples_b, "samples_b")
    if a.size != b.size:
        raise ValueError("samples must be paired")
    if a.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} pairs")
    ra = sps.rankdata(a)
    rb = sps.rankdata(b)
    ra = (ra - ra.mean()) / np.linalg.norm(ra - ra.mean())
    rb = (rb - rb.mean()) / np.linalg.norm(rb - rb.mean())
    rho = float(ra @ rb)
    g = Streams(seed).generator(STREAM_PERMUTATION)
    exceed = 0
    done = 0
    while done < n_perm:
        k = min(100, n_perm - done)
        perms = np.argsort(g.random((k, a.size)), axis=1)
        exceed += int(np.sum(np.abs(rb[perms] @ ra) >= abs(rho) - 1e-15))
        done += k
    p = (1 + exceed) / (1 + n_perm)
    return make_report(name, p, level, "p>=", a.size, seed, p, negative_control)


def z_report(name, estimate, target, se, threshold=3.0, n=0, seed=None,
             negative_control=False) -> TestReport:
    """``|estimate - target| / se`` against ``threshold``."""
    z = (estimate - target) / se if se > 0 else (0.0 if estimate == target else math.inf)
    return make_report(name, z, threshold, "|x|<=", n, seed, negative_control=negative_control)


def tolerance_report(name, value, reference, rtol, n=0, seed=None) -> TestReport:
    """Relative error ``|value/reference - 1|`` (absolute when the reference is 0)."""
    err = abs(value - reference) / (abs(reference) if reference != 0 else 1.0)
    return make_report(name, err, rtol, "x<=", n, seed)


def binomial_ci(k: int, n: int, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    """Clopper-Pearson interval."""
    r = sps.binomtest(int(k), int(n)).proportion_ci(confidence_level=1 - level)
    return float(r.low), float(r.high)


def write_reports(reports: Sequence[TestReport], fh) -> None:
    import csv

    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        w.writerow(r.row())
