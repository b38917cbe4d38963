"""Identification strategies: PSIPS, round robin, oracle weights, APE-style LUCB."""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import kernels
from .calibration import Calibration, beta_unstructured, budget_M, inflation_c
from .estimator import EstimatorState, init as init_estimator
from .instance import Instance, draw_observation
from .learners import (AdaHedge, DrawStream, HalveState, ScanContext, fixed_halve, halve_update,
                       joint_scan, min_learner_result, mix_forced_exploration)
from .oracle import arm_gains, characteristic_time
from .pareto import ParetoSet, gaps, pareto_set
from .stopping import glr_statistic, glr_stopping_check, ps_scan, recommend

log = logging.getLogger("psi_pareto")

DEFAULT_MAX_ROUNDS = 10 ** 7
MIN_LEARNER_CAP_FACTOR = 10
ALGOS = ("psips", "uniform", "oracle", "ape-style")


@dataclass
class RunRecord:
    algo: str
    delta: float
    tau: int
    recommended: ParetoSet
    correct: bool
    stopped: bool
    avg_m_t: float = math.nan
    avg_m_t_delta: float = math.nan
    wall_ms: float = 0.0
    seed: int = 0
    fallback_count: int = 0
    stopping: str = "ps"
    calibration: str = "heuristic"
    counts: Optional[np.ndarray] = None

    @property
    def pareto_size(self) -> int:
        return len(self.recommended)


class RunSetup:
    """Per-run configuration shared by every strategy."""

    def __init__(self, instance: Instance, delta: float, calibration: str = "heuristic",
                 xi: float = 1.0, cal: Optional[Calibration] = None):
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        self.instance = instance
        self.delta = delta
        self.structured = not instance.unstructured
        self.mode = "structured" if self.structured else "unstructured"
        self.Z = instance.Z if self.structured else None
        self.A = instance.A if self.structured else None
        self.xi = xi
        self.cal = cal or Calibration.from_sigma(
            calibration, instance.sigma, instance.K, h=instance.h, structured=self.structured,
            arm_norm=instance.arm_norm, theta_radius=instance.theta_ball, xi=xi)
        if self.cal.kind == "lemma2" and instance.theta_ball is not None:
            warnings.warn("lemma2 calibration is only guaranteed for an unconstrained parameter set; "
                          f"instance {instance.name!r} restricts it to a ball", RuntimeWarning, stacklevel=2)
        if self.structured and instance.theta_ball is not None:
            self.theta_region = (kernels.REGION_COLUMN_BALL, instance.theta_ball)
        else:
            self.theta_region = (kernels.REGION_NONE, 0.0)
        self.truth = pareto_set(instance.answer_means, method="scan")

    def estimator(self, rng) -> EstimatorState:
        return init_estimator(self.instance, self.mode, rng, self.xi)

    def check_identifiable(self) -> None:
        if gaps(self.instance.answer_means).degenerate:
            raise ValueError("instance has a zero gap; the Pareto set cannot be identified")

    def record(self, algo, est, S, stopped, started, **extra) -> RunRecord:
        return RunRecord(algo=algo, delta=self.delta, tau=int(est.t), recommended=S,
                         correct=(S == self.truth), stopped=stopped,
                         wall_ms=1000.0 * (time.perf_counter() - started),
                         calibration=self.cal.kind, counts=est.counts.copy(), **extra)


def _sample_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(weights)
    arm = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(arm, weights.size - 1)


def _psips_loop(setup: RunSetup, alpha: float, max_rounds: int, rng: np.random.Generator,
                horizon: Optional[int] = None, with_glr: bool = False):
    """Shared PSIPS body; with ``horizon`` set the stopping rule is disabled."""
    inst = setup.instance
    est = setup.estimator(rng)
    K = inst.K
    if setup.structured:
        halve = fixed_halve(inst.arm_norm, inst.theta_ball)
    else:
        halve = HalveState()
    hedge = AdaHedge(K)
    omega_exp = np.full(K, 1.0 / K)
    S: Optional[ParetoSet] = None
    m_sum = 0
    m_delta_sum = 0
    fallbacks = 0
    rounds = 0
    trace: List[Dict] = []
    while True:
        rounds += 1
        S = recommend(est, S, setup.Z)
        n = est.t
        M = budget_M(n, setup.delta, len(S), setup.cal)
        c = inflation_c(n, setup.delta, setup.cal)
        stream = DrawStream(rng, est.h, est.d)
        ctx = ScanContext.build(est, S, setup.Z)
        if not setup.structured:
            halve_update(halve, est, S, beta_unstructured(max(n, 2), 1.0 / max(n, 2) ** 2,
                                                          K, inst.d, setup.cal.s))
        # one pass over the shared draws serves the stopping check and the min learner
        scale = halve.inflation
        min_cap = MIN_LEARNER_CAP_FACTOR * M if math.isfinite(scale) else 0
        region, param = halve.region()
        scan = joint_scan(ctx, stream, M, math.sqrt(c), *setup.theta_region,
                          min_cap, scale, region, param)
        hit, m_delta = scan.stop_hit, scan.stop_used
        m_delta_sum += m_delta
        if not hit and horizon is None:
            return est, S, True, rounds, m_sum, m_delta_sum, fallbacks, trace
        ml = min_learner_result(scan, est, S, setup.Z, ctx, scale)
        if not min_cap:
            ml.m_t = MIN_LEARNER_CAP_FACTOR * M
        m_sum += ml.m_t
        fallbacks += ml.fallback
        if horizon is not None:
            trace.append({"t": rounds, "m_t": ml.m_t, "m_t_delta": m_delta if hit else M,
                          "error": int(S != setup.truth), "fallback": int(ml.fallback)})
            if with_glr:
                trace[-1]["glr"] = glr_statistic(est, S, Z=setup.Z, theta_ball=inst.theta_ball)
        omega = mix_forced_exploration(hedge.weights(), rounds, alpha, omega_exp)
        arm = _sample_index(omega, rng)
        gains = arm_gains(est.theta_hat, ml.lam, setup.A, est.sigma_inv)
        # gains are fed unclipped; note when they leave the range implied by the tracked bounds
        if halve.kind == "adaptive" and gains.max() > (halve.C + halve.B) ** 2:
            log.debug("round %d: gain %.6g exceeds the bound %.6g", rounds, gains.max(),
                      (halve.C + halve.B) ** 2)
        hedge.feed(gains)
        est.update(arm, draw_observation(inst, arm, rng))
        if horizon is not None and rounds >= horizon:
            return est, S, False, rounds, m_sum, m_delta_sum, fallbacks, trace
        if est.t >= max_rounds:
            S = recommend(est, S, setup.Z)
            return est, S, False, rounds, m_sum, m_delta_sum, fallbacks, trace


def run_psips(instance: Instance, delta: float, cal: str = "heuristic", alpha: float = 0.25,
              xi: float = 1.0, max_rounds: int = DEFAULT_MAX_ROUNDS,
              rng: Optional[np.random.Generator] = None, seed: int = 0,
              setup: Optional[RunSetup] = None) -> RunRecord:
    rng = rng if rng is not None else np.random.default_rng(seed)
    setup = setup or RunSetup(instance, delta, cal, xi)
    started = time.perf_counter()
    est, S, stopped, rounds, m_sum, md_sum, fallbacks, _ = _psips_loop(setup, alpha, max_rounds, rng)
    return setup.record("psips", est, S, stopped, started, avg_m_t=m_sum / max(rounds - stopped, 1),
                        avg_m_t_delta=md_sum / rounds, seed=seed, fallback_count=fallbacks)


def run_profile(instance: Instance, delta: float, horizon: int, cal: str = "heuristic",
                alpha: float = 0.25, xi: float = 1.0, rng: Optional[np.random.Generator] = None,
                seed: int = 0, with_glr: bool = True) -> List[Dict]:
    """PSIPS with stopping disabled; one trace entry per round."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    setup = RunSetup(instance, delta, cal, xi)
    *_, trace = _psips_loop(setup, alpha, DEFAULT_MAX_ROUNDS, rng, horizon=horizon, with_glr=with_glr)
    return trace


def run_unstopped(instance: Instance, rounds: int, delta: float = 0.1, cal: str = "heuristic",
                  alpha: float = 0.25, xi: float = 1.0, rng: Optional[np.random.Generator] = None,
                  seed: int = 0) -> EstimatorState:
    """PSIPS sampling for ``rounds`` rounds with stopping disabled; returns the final estimator."""
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    setup = RunSetup(instance, delta, cal, xi)
    est, *_ = _psips_loop(setup, alpha, DEFAULT_MAX_ROUNDS, rng, horizon=rounds)
    return est


def _stopping_round(setup: RunSetup, est: EstimatorState, S: ParetoSet, stopping: str, rng):
    if stopping == "glr":
        dec = glr_stopping_check(est, S, setup.cal, setup.delta, Z=setup.Z,
                                 theta_ball=setup.instance.theta_ball)
        return dec.stopped, 0
    n = est.t
    M = budget_M(n, setup.delta, len(S), setup.cal)
    c = inflation_c(n, setup.delta, setup.cal)
    stream = DrawStream(rng, est.h, est.d)
    hit, m_delta = ps_scan(ScanContext.build(est, S, setup.Z), stream, M, c, *setup.theta_region)
    return not hit, m_delta


def _sampled_run(algo: str, setup: RunSetup, stopping: str, max_rounds: int, rng, seed: int,
                 next_arm) -> RunRecord:
    started = time.perf_counter()
    est = setup.estimator(rng)
    S = None
    md_sum = 0
    rounds = 0
    while True:
        rounds += 1
        S = recommend(est, S, setup.Z)
        stop, m_delta = _stopping_round(setup, est, S, stopping, rng)
        md_sum += m_delta
        if stop:
            break
        arm = next_arm(est, rng)
        est.update(arm, draw_observation(setup.instance, arm, rng))
        if est.t >= max_rounds:
            S = recommend(est, S, setup.Z)
            rec = setup.record(algo, est, S, False, started, avg_m_t_delta=md_sum / rounds,
                               seed=seed, stopping=stopping)
            return rec
    return setup.record(algo, est, S, True, started, avg_m_t_delta=md_sum / rounds, seed=seed,
                        stopping=stopping)


def run_uniform(instance: Instance, delta: float, cal: str = "heuristic", stopping: str = "ps",
                max_rounds: int = DEFAULT_MAX_ROUNDS, rng: Optional[np.random.Generator] = None,
                seed: int = 0, xi: float = 1.0, setup: Optional[RunSetup] = None) -> RunRecord:
    if stopping not in ("ps", "glr"):
        raise ValueError(f"unknown stopping rule {stopping!r}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    setup = setup or RunSetup(instance, delta, cal, xi)
    K = instance.K
    return _sampled_run("uniform", setup, stopping, max_rounds, rng, seed,
                        lambda est, _rng: int(est.t % K))


def run_oracle(instance: Instance, delta: float, cal: str = "heuristic",
               max_rounds: int = DEFAULT_MAX_ROUNDS, rng: Optional[np.random.Generator] = None,
               seed: int = 0, weights: Optional[np.ndarray] = None, xi: float = 1.0,
               setup: Optional[RunSetup] = None) -> RunRecord:
    rng = rng if rng is not None else np.random.default_rng(seed)
    setup = setup or RunSetup(instance, delta, cal, xi)
    w = characteristic_time(instance).w_star if weights is None else np.asarray(weights, dtype=float)
    return _sampled_run("oracle", setup, "ps", max_rounds, rng, seed,
                        lambda est, r: _sample_index(w, r))


def run_ape(instance: Instance, delta: float, max_rounds: int = DEFAULT_MAX_ROUNDS,
            rng: Optional[np.random.Generator] = None, seed: int = 0) -> RunRecord:
    """LUCB-style adaptation of APE ("ape-style"), unstructured only."""
    if not instance.unstructured:
        raise ValueError("the APE-style baseline needs an unstructured instance")
    rng = rng if rng is not None else np.random.default_rng(seed)
    started = time.perf_counter()
    setup = RunSetup(instance, delta, "heuristic")
    est = setup.estimator(rng)
    var_max = float(np.max(np.diag(instance.sigma)))
    K = instance.K
    while True:
        mu = est.theta_hat
        S = pareto_set(mu)
        t = max(est.t, 3)
        beta = math.log(1.0 / delta) + math.log(math.log(t))
        radius = np.sqrt(2.0 * beta * var_max / est.counts)
        diff = mu[:, None, :] - mu[None, :, :]
        big_m = np.sqrt((np.maximum(diff, 0.0) ** 2).sum(-1))
        small_m = diff.min(-1)
        pair_r = radius[:, None] + radius[None, :]
        members = np.array(S.indices)
        others = np.array(S.complement(K), dtype=int)
        worst_slack = math.inf
        worst_pair = None
        for z in members:
            slack = big_m[z] - pair_r[z]
            slack[z] = math.inf
            x = int(np.argmin(slack))
            if slack[x] < worst_slack:
                worst_slack, worst_pair = slack[x], (int(z), x)
        for z in others:
            slack = small_m[members, z] - pair_r[members, z]
            k = int(np.argmax(slack))
            if slack[k] < worst_slack:
                worst_slack, worst_pair = slack[k], (int(z), int(members[k]))
        if worst_slack > 0:
            return setup.record("ape-style", est, S, True, started, seed=seed, stopping="ape")
        a, b = worst_pair
        arm = a if est.counts[a] <= est.counts[b] else b
        est.update(arm, draw_observation(instance, arm, rng))
        if est.t >= max_rounds:
            return setup.record("ape-style", est, pareto_set(est.theta_hat), False, started,
                                seed=seed, stopping="ape")


def uniform_error_trace(instance: Instance, horizon: int, rng: Optional[np.random.Generator] = None,
                        seed: int = 0, xi: float = 1.0) -> List[int]:
    """Round-robin sampling without stopping; per-round indicator of a wrong recommendation."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    setup = RunSetup(instance, 0.5, "heuristic", xi)
    est = setup.estimator(rng)
    S = None
    errors = []
    for _ in range(horizon):
        S = recommend(est, S, setup.Z)
        errors.append(int(S != setup.truth))
        arm = int(est.t % instance.K)
        est.update(arm, draw_observation(instance, arm, rng))
    return errors
