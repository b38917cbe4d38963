"""Stopping rules (posterior sampling and GLR) and the recommendation rule."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .calibration import Calibration, budget_M, inflation_c
from .estimator import EstimatorState
from .learners import DrawStream, ScanContext, joint_scan
from .oracle import glr_infimum
from .pareto import ParetoSet, in_alt, pareto_set

LARGE_BUDGET = 10 ** 7


@dataclass
class StoppingDecision:
    stopped: bool
    recommended: Optional[ParetoSet]
    m_t_delta: int
    draws_used: int
    statistic: float = math.nan


def ps_scan(ctx: ScanContext, stream: DrawStream, budget: int, inflation: float,
            region: int = kernels.REGION_NONE, param: float = 0.0) -> Tuple[bool, int]:
    """Scan ``budget`` inflated draws; return (hit, index of the first hit or draws used)."""
    res = joint_scan(ctx, stream, budget, math.sqrt(inflation), region, param,
                     0, 0.0, kernels.REGION_NONE, 0.0)
    return res.stop_hit, res.stop_used


def ps_stopping_check(estimator: EstimatorState, S: ParetoSet, cal: Calibration, delta: float,
                      stream: DrawStream, Z: Optional[np.ndarray] = None,
                      theta_region: Tuple[int, float] = (kernels.REGION_NONE, 0.0),
                      ctx: Optional[ScanContext] = None, budget: Optional[int] = None,
                      inflation: Optional[float] = None) -> StoppingDecision:
    """Posterior-sampling stopping check at the current sample count.

    Draws are taken from ``stream`` so the min learner can reuse them.
    ``budget`` and ``inflation`` override the calibration when given.
    """
    n = estimator.t
    M = budget_M(n, delta, len(S), cal) if budget is None else int(budget)
    c = inflation_c(n, delta, cal) if inflation is None else float(inflation)
    if M > LARGE_BUDGET:
        warnings.warn(f"posterior-sampling budget {M} exceeds {LARGE_BUDGET}; scanning in blocks",
                      RuntimeWarning, stacklevel=2)
    ctx = ctx or ScanContext.build(estimator, S, Z)
    hit, m = ps_scan(ctx, stream, M, c, *theta_region)
    if hit:
        return StoppingDecision(False, None, m, m)
    return StoppingDecision(True, S, m, m)


def glr_statistic(estimator: EstimatorState, S: ParetoSet, Z: Optional[np.ndarray] = None,
                  theta_ball: Optional[float] = None) -> float:
    return glr_infimum(estimator, S, Z=Z, theta_ball=theta_ball)


def glr_stopping_check(estimator: EstimatorState, S: ParetoSet, cal: Calibration, delta: float,
                       Z: Optional[np.ndarray] = None, theta_ball: Optional[float] = None) -> StoppingDecision:
    glr = glr_statistic(estimator, S, Z=Z, theta_ball=theta_ball)
    threshold = cal.beta(estimator.t, delta)
    stopped = glr > threshold
    return StoppingDecision(stopped, S if stopped else None, 0, 0, statistic=glr)


def recommend(estimator: EstimatorState, previous: Optional[ParetoSet] = None,
              Z: Optional[np.ndarray] = None) -> ParetoSet:
    """Empirical Pareto set, reusing ``previous`` when theta_hat is outside its alt set."""
    if previous is not None and not in_alt(estimator.theta_hat, previous, Z):
        return previous
    means = estimator.theta_hat if Z is None else Z @ estimator.theta_hat
    return pareto_set(means)
