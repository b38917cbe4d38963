"""Saddle-point learners: AdaHedge over arms, posterior-sampling min learner,
Estimate-and-Halve bound tracking and forced exploration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .estimator import EstimatorState
from .pareto import ParetoSet

BLOCK_START = 8
BLOCK_MAX = 4096


class AdaHedge:
    """AdaHedge with the mixability-gap learning rate, driven by gains."""

    def __init__(self, K: int):
        if K < 1:
            raise ValueError("AdaHedge needs at least one expert")
        self.K = K
        self.cum_loss = np.zeros(K)
        self.gap = 0.0  # cumulative mixability gap
        self.rounds = 0
        self.max_gain = 0.0
        self._current = None  # (weights, mix loss) for the current cumulative loss

    @property
    def eta(self) -> float:
        if self.gap <= 0.0:
            return math.inf
        return math.log(self.K) / self.gap

    def _mix(self, eta: float, L: np.ndarray) -> Tuple[np.ndarray, float]:
        low = L.min()
        if math.isinf(eta):
            w = (L == low).astype(float)
        else:
            w = np.exp(-eta * (L - low))
        s = w.sum()
        w /= s
        mix_loss = low if math.isinf(eta) else low - math.log(s / L.size) / eta
        return w, mix_loss

    def _current_mix(self) -> Tuple[np.ndarray, float]:
        if self._current is None:
            self._current = self._mix(self.eta, self.cum_loss)
        return self._current

    def weights(self) -> np.ndarray:
        return self._current_mix()[0].copy()

    def feed(self, gains) -> None:
        gains = np.asarray(gains, dtype=float)
        if gains.shape != (self.K,) or not np.all(np.isfinite(gains)):
            raise ValueError("gains must be a finite K-vector")
        loss = -gains
        eta = self.eta
        w, m_prev = self._current_mix()
        hedge_loss = float(w @ loss)
        self.cum_loss = self.cum_loss + loss
        _, m_next = self._mix(eta, self.cum_loss)
        self.gap += max(0.0, hedge_loss - (m_next - m_prev))
        self._current = None
        self.rounds += 1
        self.max_gain = max(self.max_gain, float(np.abs(gains).max()))


def adahedge_weights(state: AdaHedge) -> np.ndarray:
    return state.weights()


def adahedge_feed(state: AdaHedge, gains) -> None:
    state.feed(gains)


def mix_forced_exploration(omega, t: int, alpha: float, omega_exp) -> np.ndarray:
    if t < 1:
        raise ValueError("t must be at least 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    gamma = float(t) ** (-alpha)
    return (1.0 - gamma) * np.asarray(omega, dtype=float) + gamma * np.asarray(omega_exp, dtype=float)


@dataclass
class HalveState:
    """Bounds for the min learner's parameter region.

    ``kind="adaptive"`` tracks ``B = C + p`` by halving (unstructured);
    ``kind="fixed"`` keeps a constant ``eta`` and the declared ball.
    """
    kind: str = "adaptive"
    C: float = math.inf
    p: float = math.inf
    eta_fixed: Optional[float] = None
    ball_radius: Optional[float] = None
    updates: int = 0

    @property
    def B(self) -> float:
        return self.C + self.p

    @property
    def eta(self) -> float:
        if self.kind == "fixed":
            return self.eta_fixed
        B = self.B
        return 0.0 if math.isinf(B) else 1.0 / (8.0 * B * B)

    @property
    def inflation(self) -> float:
        """Scale ``eta^{-1/2}`` applied to the centered draws."""
        eta = self.eta
        return math.inf if eta == 0.0 else 1.0 / math.sqrt(eta)

    def region(self) -> Tuple[int, float]:
        if self.kind == "fixed":
            if self.ball_radius is None:
                return kernels.REGION_NONE, 0.0
            return kernels.REGION_COLUMN_BALL, self.ball_radius
        if math.isinf(self.B):
            return kernels.REGION_NONE, 0.0
        return kernels.REGION_ROW_ELLIPSOID, self.B

    def contains(self, lam: np.ndarray, sigma_inv: np.ndarray) -> bool:
        region, param = self.region()
        if region == kernels.REGION_NONE:
            return True
        if region == kernels.REGION_COLUMN_BALL:
            return bool((lam ** 2).sum(0).max() <= param * param)
        quad = np.einsum("ic,ce,ie->i", lam, sigma_inv, lam)
        return bool(quad.max() < param * param)


def fixed_halve(arm_norm: float, theta_radius: Optional[float]) -> HalveState:
    if theta_radius is None:
        raise ValueError("a constant learning rate needs a bounded parameter ball")
    return HalveState(kind="fixed", eta_fixed=1.0 / (8.0 * arm_norm ** 2 * theta_radius ** 2),
                      ball_radius=theta_radius)


def halve_update(halve: HalveState, estimator: EstimatorState, S: ParetoSet, f1: float) -> None:
    """One Estimate-and-Halve step (unstructured only; no-op otherwise)."""
    if halve.kind != "adaptive":
        return
    # whitened means: Sigma^{-1} norms become Euclidean norms
    white = estimator.theta_hat @ estimator.sigma_white.T
    U, u = kernels.halve_bounds(estimator.V_inv.diagonal(), white, S.mask(white.shape[0]), math.sqrt(f1))
    if U <= 0.5 * halve.p:
        halve.p = float(U)
    if u <= 0.5 * halve.C:
        halve.C = u
    halve.updates += 1


class DrawStream:
    """Standard normal (h x d) matrices in geometrically growing blocks.

    The stopping check and the min learner walk the same stream.  Rows are
    generated on first request, in stream order, so a block's contents do
    not depend on how many of its rows were asked for first.
    """

    def __init__(self, rng: np.random.Generator, h: int, d: int,
                 start: int = BLOCK_START, cap: int = BLOCK_MAX):
        self.rng = rng
        self.h = h
        self.d = d
        self.blocks: List[np.ndarray] = []
        self.start = start
        self.cap = cap

    def size(self, index: int) -> int:
        return min(self.start << index, self.cap)

    def block(self, index: int, rows: Optional[int] = None) -> np.ndarray:
        """Block ``index`` holding at least its first ``rows`` rows (all of them by default)."""
        want = self.size(index) if rows is None else min(rows, self.size(index))
        if index < len(self.blocks) and self.blocks[index].shape[0] >= want:
            return self.blocks[index]
        for k in range(max(len(self.blocks) - 1, 0), index):
            self._fill(k, self.size(k))
        self._fill(index, want)
        return self.blocks[index]

    def _fill(self, k: int, want: int) -> None:
        if k == len(self.blocks):
            self.blocks.append(self.rng.standard_normal((want, self.h, self.d)))
            return
        have = self.blocks[k].shape[0]
        if have < want:
            extra = self.rng.standard_normal((want - have, self.h, self.d))
            self.blocks[k] = np.concatenate([self.blocks[k], extra])

    @property
    def generated(self) -> int:
        return sum(b.shape[0] for b in self.blocks)


@dataclass
class ScanContext:
    """Quantities shared by both rejection scans in one round."""
    theta_hat: np.ndarray
    lv: np.ndarray
    diag_v: bool
    lsig: np.ndarray
    Z: np.ndarray
    identity_z: bool
    in_set: np.ndarray
    sig_inv: np.ndarray
    _scanner: object = field(default=None, repr=False, compare=False)

    @classmethod
    def build(cls, estimator: EstimatorState, S: ParetoSet, Z: Optional[np.ndarray]) -> "ScanContext":
        identity = Z is None
        n_answers = estimator.h if identity else Z.shape[0]
        return cls(theta_hat=estimator.theta_hat, lv=estimator.chol_v_inv(), diag_v=estimator.diagonal,
                   lsig=estimator.sigma_chol, Z=np.zeros((1, 1)) if identity else Z,
                   identity_z=identity, in_set=S.mask(n_answers), sig_inv=estimator.sigma_inv)

    @property
    def scanner(self):
        if self._scanner is None:
            self._scanner = kernels.BlockScanner(self.theta_hat, self.lv, self.diag_v, self.lsig, self.Z,
                                                 self.identity_z, self.in_set, self.sig_inv)
        return self._scanner

    def scan(self, G, stop_scale, stop_limit, stop_region, stop_param,
             min_scale, min_limit, min_region, min_param) -> Tuple[int, int]:
        return self.scanner.scan(G, stop_scale, stop_limit, stop_region, stop_param,
                                 min_scale, min_limit, min_region, min_param)

    def transform(self, G_m: np.ndarray, scale: float) -> np.ndarray:
        return self.theta_hat + scale * (self.lv @ G_m @ self.lsig.T)


@dataclass
class MinLearnerResult:
    lam: np.ndarray
    m_t: int
    fallback: bool


def fallback_alternative(estimator: EstimatorState, S: ParetoSet, Z: Optional[np.ndarray]) -> np.ndarray:
    """Closest point of the closure of alt(S) to theta_hat in the current metric."""
    from .oracle import best_response_design, best_response_diagonal
    if Z is None and estimator.diagonal and estimator.sigma_diagonal:
        return best_response_diagonal(estimator.theta_hat, S, estimator.V.diagonal(), estimator.sigma).lambda_star
    return best_response_design(estimator.theta_hat, S, estimator.V, estimator.sigma, Z=Z).lambda_star


@dataclass
class JointScan:
    stop_hit: bool
    stop_used: int  # index of the first stopping hit (1-based) or draws scanned
    min_index: int  # 1-based position of the accepted min-learner draw, 0 if none
    min_used: int
    min_draw: Optional[np.ndarray]


def joint_scan(ctx: ScanContext, stream: DrawStream,
               stop_budget: int, stop_scale: float, stop_region: int, stop_param: float,
               min_cap: int, min_scale: float, min_region: int, min_param: float) -> JointScan:
    """Walk ``stream`` once for both consumers; each stops at its own first hit or limit."""
    stop_hit, stop_used, min_index, min_used, block, row = ctx.scanner.walk(
        stream, stop_budget, stop_scale, stop_region, stop_param, min_cap, min_scale, min_region, min_param)
    return JointScan(stop_hit > 0, stop_hit or stop_used, min_index, min_index or min_used,
                     stream.block(block, row + 1)[row] if min_index else None)


def min_learner_draw(estimator: EstimatorState, halve: HalveState, S: ParetoSet,
                     stream: DrawStream, cap: int, Z: Optional[np.ndarray] = None,
                     ctx: Optional[ScanContext] = None) -> MinLearnerResult:
    """First inflated posterior draw inside the region and alt(S).

    Walks ``stream`` from its beginning, so draws already produced by the
    stopping check are reused before fresh ones are generated.  After
    ``cap`` rejected draws the closest alternative is returned instead.
    """
    ctx = ctx or ScanContext.build(estimator, S, Z)
    scale = halve.inflation
    if not math.isfinite(scale):
        return MinLearnerResult(fallback_alternative(estimator, S, Z), cap, True)
    region, param = halve.region()
    res = joint_scan(ctx, stream, 0, 0.0, kernels.REGION_NONE, 0.0, cap, scale, region, param)
    return min_learner_result(res, estimator, S, Z, ctx, scale)


def min_learner_result(res: JointScan, estimator: EstimatorState, S: ParetoSet,
                       Z: Optional[np.ndarray], ctx: ScanContext, scale: float) -> MinLearnerResult:
    if res.min_index:
        return MinLearnerResult(ctx.transform(res.min_draw, scale), res.min_index, False)
    return MinLearnerResult(fallback_alternative(estimator, S, Z), res.min_used, True)
