"""Simulation and verification toolkit for exponentially penalized Walsh spiders."""

from walshpen.spider import (
    RaySpace,
    SpiderPoint,
    SpiderPath,
    SpiderPaths,
    spider_distance,
    simulate_radial_with_local_time,
    label_excursions,
    simulate_spider,
)
from walshpen.formulas import (
    FormulaValue,
    PenaltyParams,
    Regime,
    classify_regime,
    eval_J,
    eval_L_majorant,
    eval_I,
    eval_I_quadrature,
    eval_K,
    eval_Q,
    eval_R,
    eval_Q_asymptotic,
    eval_M,
    eval_return_prob,
    density_L_plus_X,
    cdf_L_plus_X,
    joint_density_XL,
)
from walshpen.penalize import (
    PathFunctional,
    UnreliableEstimate,
    penalized_expectation,
    limit_expectation,
    convergence_report,
    martingale_check,
)
from walshpen.limits import LimitLawSpec, WrongRegime, sample_limit

__version__ = "0.1.0"

__all__ = [
    "RaySpace",
    "SpiderPoint",
    "SpiderPath",
    "SpiderPaths",
    "spider_distance",
    "simulate_radial_with_local_time",
    "label_excursions",
    "simulate_spider",
    "FormulaValue",
    "PenaltyParams",
    "Regime",
    "classify_regime",
    "eval_J",
    "eval_L_majorant",
    "eval_I",
    "eval_I_quadrature",
    "eval_K",
    "eval_Q",
    "eval_R",
    "eval_Q_asymptotic",
    "eval_M",
    "eval_return_prob",
    "density_L_plus_X",
    "cdf_L_plus_X",
    "joint_density_XL",
    "PathFunctional",
    "UnreliableEstimate",
    "penalized_expectation",
    "limit_expectation",
    "convergence_report",
    "martingale_check",
    "LimitLawSpec",
    "WrongRegime",
    "sample_limit",
    "__version__",
]
