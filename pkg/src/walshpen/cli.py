"""Command-line front end: ``walshpen <command> [options]``.

Commands: ``simulate``, ``formulas``, ``penalize``, ``limit-sample`` and
``verify``. Options may also come from a plain ``key=value`` file given with
``--config`` (one pair per line, ``#`` starts a comment); command-line flags
override the file. List values are comma separated.

Every CSV starts with a comment line holding the tool version, a hash of the
resolved configuration and the seed. When ``--output`` is omitted the CSV
goes to ``$WALSHPEN_OUTPUT_DIR/<command>.csv`` if that variable is set and to
standard output otherwise.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import itertools
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from walshpen import __version__
from walshpen import formulas as F
from walshpen import penalize as P
from walshpen.limits import LimitLawSpec, sample_limit
from walshpen.spider import RaySpace, SpiderPoint, paths_to_rows, simulate_spider
from walshpen.stats import suite_ok, write_reports
from walshpen.suites import SUITES, run_suite

OUTPUT_DIR_ENV = "WALSHPEN_OUTPUT_DIR"
COMMANDS = ("simulate", "formulas", "penalize", "limit-sample", "verify")
PATH_COLUMNS = ("path_id", "t", "X", "N", "L", "touched_zero")
FORMULA_COLUMNS = ("formula", "beta", "gamma", "x", "k", "t", "value", "kind")
PENALIZE_COLUMNS = ("t", "estimate", "se", "ess", "limit_estimate", "limit_se")
GAMMA_FREE = ("J", "J_quadrature", "L", "density_L_plus_X", "return_prob")
FORMULA_NAMES = ("J", "J_quadrature", "L", "I", "I_quadrature", "K", "Q", "Q_asymptotic", "R", "M",
                 "return_prob", "density_L_plus_X")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    rays: list[str] | None = None
    mu: list[float] = field(default_factory=lambda: [0.5, 0.5])
    alpha: list[float] | None = None
    gamma: float = 0.0
    x: float = 0.0
    k: int = 0
    t: float = 1.0
    t_grid: list[float] | None = None
    s: float = 1.0
    steps: int = 100
    n_paths: int = 1000
    seed: int = 0
    workers: int = 1
    output: str | None = None
    suite: str | None = None
    scale: float = 1.0
    method: str = "markov"
    functional: str = "on_ray:0"
    name: str | None = None
    beta: list[float] | None = None
    gamma_grid: list[float] | None = None
    x_grid: list[float] | None = None
    k_grid: list[int] | None = None
    l: float = 0.0

    def hash(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("output")
        d.pop("workers")  # results do not depend on it
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_LIST_FLOAT = {"mu", "alpha", "t_grid", "beta", "gamma_grid", "x_grid"}
_LIST_INT = {"k_grid"}
_LIST_STR = {"rays"}
_INT = {"k", "steps", "n_paths", "seed", "workers"}
_FLOAT = {"gamma", "x", "t", "s", "scale", "l"}
_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _convert(key: str, raw):
    if raw is None:
        return None
    try:
        if key in _LIST_FLOAT:
            vals = [float(v) for v in str(raw).split(",") if v.strip()]
            if not vals:
                raise ValueError("empty list")
            return vals
        if key in _LIST_INT:
            return [int(v) for v in str(raw).split(",") if v.strip()]
        if key in _LIST_STR:
            return [v.strip() for v in str(raw).split(",") if v.strip()]
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None


def read_config_file(path: str) -> dict:
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("config", f"line {lineno}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FIELDS:
                raise ConfigError(key, f"unknown key (line {lineno})")
            out[key] = _convert(key, value)
    return out


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = _convert(key, v)
    cfg = ExperimentConfig(**values)
    validate(cfg, args.command)
    return cfg


def validate(cfg: ExperimentConfig, command: str) -> None:
    if cfg.steps <= 0:
        raise ConfigError("steps", "must be > 0")
    if cfg.n_paths <= 0:
        raise ConfigError("n_paths", "must be > 0")
    if cfg.workers <= 0:
        raise ConfigError("workers", "must be > 0")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    for name in ("t", "s", "scale"):
        v = getattr(cfg, name)
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(name, "must be finite and > 0")
    if not (math.isfinite(cfg.x) and cfg.x >= 0):
        raise ConfigError("x", "must be finite and >= 0")
    if not math.isfinite(cfg.gamma):
        raise ConfigError("gamma", "must be finite")
    if cfg.rays is not None and len(cfg.rays) != len(cfg.mu):
        raise ConfigError("rays", f"{len(cfg.rays)} names for {len(cfg.mu)} weights")
    rs = ray_space(cfg)
    if cfg.alpha is not None and len(cfg.alpha) != rs.size:
        raise ConfigError("alpha", f"expected {rs.size} values, got {len(cfg.alpha)}")
    if not 0 <= cfg.k < rs.size:
        raise ConfigError("k", f"ray index must be in [0, {rs.size})")
    if cfg.method not in ("markov", "direct"):
        raise ConfigError("method", "must be 'markov' or 'direct'")
    if cfg.t_grid is not None and any(not (math.isfinite(v) and v >= cfg.s) for v in cfg.t_grid):
        raise ConfigError("t_grid", "every value must be finite and >= s")
    if command == "verify" and cfg.suite not in SUITES:
        raise ConfigError("suite", f"choose one of {', '.join(SUITES)}")
    if command == "formulas" and cfg.name not in FORMULA_NAMES:
        raise ConfigError("name", f"choose one of {', '.join(FORMULA_NAMES)}")
    if command == "penalize":
        make_functional(cfg)


def ray_space(cfg: ExperimentConfig) -> RaySpace:
    try:
        names = tuple(cfg.rays) if cfg.rays is not None else None
        return RaySpace(np.asarray(cfg.mu, dtype=float), names) if names else \
            RaySpace(np.asarray(cfg.mu, dtype=float))
    except ValueError as exc:
        msg = str(exc)
        raise ConfigError("mu", msg[4:] if msg.startswith("mu: ") else msg) from None


def params(cfg: ExperimentConfig, rs: RaySpace) -> F.PenaltyParams:
    alpha = cfg.alpha if cfg.alpha is not None else [0.0] * rs.size
    try:
        p = F.PenaltyParams(np.asarray(alpha, dtype=float), cfg.gamma)
        p.check(rs)
    except ValueError as exc:
        msg = str(exc)
        fld = "gamma" if msg.startswith("gamma") else "alpha"
        raise ConfigError(fld, msg.split(": ", 1)[-1]) from None
    return p


def make_functional(cfg: ExperimentConfig) -> P.PathFunctional:
    kind, _, arg = cfg.functional.partition(":")
    try:
        if kind == "one":
            return P.constant_one(cfg.s)
        if kind == "on_ray":
            return P.on_ray(cfg.s, int(arg or 0))
        if kind == "x_below":
            return P.x_below(cfg.s, float(arg or 1.0))
        if kind == "x_above":
            return P.x_above(cfg.s, float(arg or 1.0))
        if kind == "exp_minus_L":
            return P.exp_minus_local_time(cfg.s)
        if kind == "x":
            return P.x_at(cfg.s)
        if kind == "max_below":
            return P.running_max_below(cfg.s, float(arg or 1.5))
    except ValueError:
        pass
    raise ConfigError("functional", "expected one of one, on_ray:<m>, x_below:<c>, x_above:<c>, "
                      "exp_minus_L, x, max_below:<c>")


# --------------------------------------------------------------------------


def _open_output(cfg: ExperimentConfig, command: str):
    path = cfg.output
    if path is None:
        base = os.environ.get(OUTPUT_DIR_ENV)
        if not base:
            return sys.stdout, None
        os.makedirs(base, exist_ok=True)
        path = os.path.join(base, f"{command}.csv")
    if path == "-":
        return sys.stdout, None
    return open(path, "w", newline="", encoding="utf-8"), path


def _header(cfg: ExperimentConfig) -> str:
    return f"# walshpen {__version__} config_sha256={cfg.hash()} seed={cfg.seed}\n"


def _regime_name(rs, p) -> str:
    return F.classify_regime(rs, p).tag


def cmd_simulate(cfg, fh):
    rs = ray_space(cfg)
    regime = _regime_name(rs, params(cfg, rs))
    paths = simulate_spider(rs, SpiderPoint(cfg.x, cfg.k), cfg.t, cfg.steps, cfg.seed, cfg.n_paths,
                            workers=cfg.workers)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PATH_COLUMNS)
    w.writerows(paths_to_rows(paths, rs))
    return 0, f"simulate: {cfg.n_paths} paths to t={cfg.t:g} ({cfg.steps} steps), regime={regime}"


def _formula_rows(cfg, rs, p):
    name = cfg.name
    betas = cfg.beta or [0.0]
    gammas = cfg.gamma_grid or [cfg.gamma]
    xs = cfg.x_grid or [cfg.x]
    ks = cfg.k_grid or [cfg.k]
    ts = cfg.t_grid or [cfg.t]
    spider_level = name in ("Q", "Q_asymptotic", "R", "M")
    if spider_level:
        for g, x, k, t in itertools.product(gammas, xs, ks, ts):
            pp = F.PenaltyParams(p.alpha, g)
            if name == "Q":
                fv = F.eval_Q(rs, pp, x, k, t)
            elif name == "Q_asymptotic":
                fv = F.eval_Q_asymptotic(rs, pp, x, k, t)
            elif name == "R":
                fv = F.eval_R(rs, pp, x, k, t)
            else:
                fv = F.FormulaValue(float(F.eval_M(rs, pp, t, x, k, cfg.l)), F.EXACT)
            yield [name, "", repr(float(g)), repr(float(x)), k, repr(float(t)), repr(float(fv.value)),
                   fv.kind]
        return
    if name in GAMMA_FREE:
        for b, x, t in itertools.product(betas, xs, ts):
            if name == "J":
                fv = F.eval_J(b, x, t)
            elif name == "J_quadrature":
                fv = F.eval_J_quadrature(b, x, t)
            elif name == "L":
                fv = F.eval_L_majorant(b, x, t)
            elif name == "density_L_plus_X":
                # the beta column holds the evaluation point z
                fv = F.FormulaValue(float(F.density_L_plus_X(b, x, t)), F.EXACT)
            else:
                # the beta column holds abar, the x column the distance y
                fv = F.FormulaValue(float(F.eval_return_prob(b, x)), F.EXACT)
            yield [name, repr(float(b)), "", repr(float(x)), "", repr(float(t)), repr(float(fv.value)),
                   fv.kind]
        return
    fn = {"I": F.eval_I, "I_quadrature": F.eval_I_quadrature, "K": F.eval_K}[name]
    for b, g, x, t in itertools.product(betas, gammas, xs, ts):
        fv = fn(b, g, x, t)
        yield [name, repr(float(b)), repr(float(g)), repr(float(x)), "", repr(float(t)),
               repr(float(fv.value)), fv.kind]


def cmd_formulas(cfg, fh):
    rs = ray_space(cfg)
    p = params(cfg, rs)
    rows = list(_formula_rows(cfg, rs, p))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FORMULA_COLUMNS)
    w.writerows(rows)
    regime = _regime_name(rs, p) if cfg.name in ("Q", "Q_asymptotic", "R", "M") else "n/a"
    return 0, f"formulas: {cfg.name}, {len(rows)} rows, regime={regime}"


def cmd_penalize(cfg, fh):
    rs = ray_space(cfg)
    p = params(cfg, rs)
    regime = _regime_name(rs, p)
    func = make_functional(cfg)
    t_grid = cfg.t_grid or P.default_t_grid(cfg.s)
    rows = P.convergence_report([func], t_grid, rs, p, cfg.n_paths, cfg.seed, cfg.method, cfg.steps,
                                cfg.workers)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PENALIZE_COLUMNS)
    for r in rows:
        w.writerow([repr(float(r[c])) for c in PENALIZE_COLUMNS])
    flagged = sum(bool(r["unreliable"]) for r in rows)
    note = f", {flagged} unreliable rows (ESS < {P.MIN_ESS:g})" if flagged else ""
    return 0, f"penalize: {func.name} at s={cfg.s:g}, {len(t_grid)} values of t, regime={regime}{note}"


def cmd_limit_sample(cfg, fh):
    rs = ray_space(cfg)
    p = params(cfg, rs)
    regime = _regime_name(rs, p)
    if regime == F.NULL_SPIDER:
        # the limit law is the spider law itself
        paths = simulate_spider(rs, horizon=cfg.t, steps=cfg.steps, rng=cfg.seed, n_paths=cfg.n_paths,
                                workers=cfg.workers)
        weights = None
    else:
        spec = LimitLawSpec(rs, p, cfg.t, cfg.steps)
        paths, weights = sample_limit(spec, cfg.seed, cfg.n_paths, cfg.workers)
    if weights is None:
        weights = np.ones(paths.n_paths)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PATH_COLUMNS + ("weight",))
    w.writerows(paths_to_rows(paths, rs, weights))
    return 0, f"limit-sample: {cfg.n_paths} paths to t={cfg.t:g}, regime={regime}"


def cmd_verify(cfg, fh):
    reports = run_suite(cfg.suite, cfg.seed, cfg.workers, cfg.scale)
    write_reports(reports, fh)
    ok = suite_ok(reports)
    bad = sum(not r.ok for r in reports)
    for r in reports:
        if not r.ok:
            print(r.line(), file=sys.stderr)
    msg = f"verify: suite {cfg.suite}, {len(reports)} checks, {bad} unexpected outcomes, regime=per-check"
    return (0 if ok else 1), msg


HANDLERS = {"simulate": cmd_simulate, "formulas": cmd_formulas, "penalize": cmd_penalize,
            "limit-sample": cmd_limit_sample, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="walshpen", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"walshpen {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--output", "-o", help="CSV path ('-' for stdout)")
    common.add_argument("--seed", help="64-bit seed")
    common.add_argument("--workers", help="worker threads (does not change results)")

    space = argparse.ArgumentParser(add_help=False)
    space.add_argument("--rays", help="comma-separated ray names")
    space.add_argument("--mu", help="comma-separated ray weights (sum 1)")
    space.add_argument("--alpha", help="comma-separated exponents, one per ray")
    space.add_argument("--gamma", help="local-time exponent")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--steps", help="grid steps")
    mc.add_argument("--n-paths", dest="n_paths", help="number of paths")

    p = sub.add_parser("simulate", parents=[common, space, mc], help="simulate spider paths")
    p.add_argument("--x", help="starting distance to the origin")
    p.add_argument("--k", help="starting ray index")
    p.add_argument("--t", help="horizon")

    p = sub.add_parser("formulas", parents=[common, space], help="evaluate a closed form on a grid")
    p.add_argument("--name", help=", ".join(FORMULA_NAMES))
    p.add_argument("--beta", help="comma-separated beta values")
    p.add_argument("--gamma-grid", dest="gamma_grid", help="comma-separated gamma values")
    p.add_argument("--x", dest="x_grid", help="comma-separated x values")
    p.add_argument("--k", dest="k_grid", help="comma-separated ray indices")
    p.add_argument("--t", dest="t_grid", help="comma-separated t values")
    p.add_argument("--l", help="local time (for M)")

    p = sub.add_parser("penalize", parents=[common, space, mc],
                       help="penalized estimates along t_grid and the limit estimate")
    p.add_argument("--s", help="functional horizon")
    p.add_argument("--t-grid", dest="t_grid", help="comma-separated t values (default geometric)")
    p.add_argument("--functional", help="one, on_ray:<m>, x_below:<c>, x_above:<c>, exp_minus_L, x")
    p.add_argument("--method", help="markov (default) or direct")

    p = sub.add_parser("limit-sample", parents=[common, space, mc], help="sample the limit process")
    p.add_argument("--t", help="horizon")

    p = sub.add_parser("verify", parents=[common], help="run a verification suite")
    p.add_argument("--suite", help=", ".join(SUITES))
    p.add_argument("--scale", help="multiplier for Monte Carlo sample sizes")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"walshpen: error: {exc}", file=sys.stderr)
        return 2
    fh, path = _open_output(cfg, args.command)
    try:
        fh.write(_header(cfg))
        try:
            code, summary = HANDLERS[args.command](cfg, fh)
        except ConfigError as exc:
            print(f"walshpen: error: {exc}", file=sys.stderr)
            return 2
    finally:
        if path is not None:
            fh.close()
        else:
            fh.flush()
    print(summary + (f" -> {path}" if path else ""), file=sys.stderr if path is None else sys.stdout)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
