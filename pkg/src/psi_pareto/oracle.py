"""Best responses over the alternative set, GLR infimum, characteristic time.

Two solvers produce the same best response:

* a vectorised closed form for identity features with diagonal covariance,
  where pieces decouple per coordinate;
* a general per-piece solver.  Each piece is a polyhedral cone constraint
  ``G vec(lam) >= 0``; the projection in the ``Sigma^{-1} (x) V`` metric is a
  small linear complementarity problem solved exactly by enumerating active
  sets (at most ``2^max(d, p)`` of them).
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .learners import AdaHedge
from .pareto import (DEFAULT_PIECE_BUDGET, AltPiece, ParetoSet, PieceBudgetError,
                     iter_alt_pieces, pareto_set)

ACTIVE_TOL = 1e-12


class OracleError(RuntimeError):
    pass


@dataclass
class BestResponse:
    lambda_star: np.ndarray
    value: float
    piece: Optional[AltPiece]
    exact: bool = True


@dataclass
class CharacteristicTime:
    t_star: float
    w_star: np.ndarray
    iterations: int
    duality_gap_estimate: float
    value: float


def _is_diagonal(M: np.ndarray) -> bool:
    return np.count_nonzero(M - np.diag(np.diag(M))) == 0


# ---------------------------------------------------------------- closed form

def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@functools.lru_cache(maxsize=64)
def _subset_masks(p: int) -> np.ndarray:
    """Boolean matrix (2^p, p); row s lists the members of subset s."""
    codes = np.arange(1 << p)
    return _frozen(((codes[:, None] >> np.arange(p)[None, :]) & 1).astype(bool))


@functools.lru_cache(maxsize=64)
def _subset_tables(p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Float subset masks and the (J, A) matrix telling whether A is a subset of J."""
    subsets = _subset_masks(p)
    feasible = (subsets[:, None, :] | ~subsets[None, :, :]).all(-1)
    return _frozen(subsets.astype(float)), _frozen(feasible)


def _water_fill(mu_z, w_z, mu_x, w_x, subsets):
    """Min over y of w_z (mu_z - y)^2 + sum_{x in J} w_x (mu_x - y)_+^2.

    Shapes: ``mu_z, w_z`` (n,), ``mu_x, w_x`` (p,), ``subsets`` (s, p).
    Returns costs (n, s) and minimisers (n, s), one column per subset J.
    Candidate active sets A are all subsets; the true cost is evaluated at
    each candidate's pooled mean and minimised over A subset of J.
    """
    wA = subsets @ w_x  # (s,)
    wmA = subsets @ (w_x * mu_x)
    denom = w_z[:, None] + wA[None, :]
    positive = denom > 0
    pooled = (w_z[:, None] * mu_z[:, None] + wmA[None, :]) / np.where(positive, denom, 1.0)
    y = np.where(positive, pooled, mu_z[:, None])
    # cost of subset J at candidate y_A: (n, sJ, sA)
    excess = np.maximum(mu_x[None, None, :] - y[:, :, None], 0.0)  # (n, sA, p)
    per_member = w_x * excess ** 2  # (n, sA, p)
    base = w_z[:, None] * (mu_z[:, None] - y) ** 2  # (n, sA)
    subsets_f, feasible = _subset_tables(subsets.shape[1])  # feasible[J, A]: A subset of J
    cost = base[:, None, :] + np.einsum("jp,nap->nja", subsets_f, per_member)
    cost = np.where(feasible[None], cost, np.inf)
    best = cost.argmin(-1)  # (n, sJ)
    return cost.min(-1), y[np.arange(cost.shape[0])[:, None], best]


def _water_fill_single(mu_z, w_z, mu_x, w_x):
    """``_water_fill`` for one member, with the same arithmetic and tie-breaking."""
    w_x = float(w_x[0])
    mu_x = float(mu_x[0])
    num0 = w_z * mu_z + 0.0
    num1 = w_z * mu_z + w_x * mu_x
    den1 = w_z + w_x
    if (w_z > 0).all():
        y0 = num0 / w_z
        y1 = num1 / den1
    else:
        y0 = np.where(w_z > 0, num0 / np.where(w_z > 0, w_z, 1.0), mu_z)
        y1 = np.where(den1 > 0, num1 / np.where(den1 > 0, den1, 1.0), mu_z)
    base0 = w_z * (mu_z - y0) ** 2
    c0 = base0 + w_x * np.maximum(mu_x - y0, 0.0) ** 2
    c1 = w_z * (mu_z - y1) ** 2 + w_x * np.maximum(mu_x - y1, 0.0) ** 2
    take1 = c1 < c0
    cost = np.empty((mu_z.shape[0], 2))
    y = np.empty_like(cost)
    cost[:, 0] = base0 + 0.0
    cost[:, 1] = np.where(take1, c1, c0)
    y[:, 0] = y0
    y[:, 1] = np.where(take1, y1, y0)
    return cost, y


@functools.lru_cache(maxsize=256)
def _split_indices(indices: Tuple[int, ...], K: int) -> Tuple[np.ndarray, np.ndarray]:
    members = np.array(indices, dtype=int)
    others = np.setdiff1d(np.arange(K), members)
    return _frozen(members), _frozen(others)


@functools.lru_cache(maxsize=64)
def _assignment_table(p: int, d: int) -> np.ndarray:
    """(d^p, d) subset codes: column c is the bitmask of members assigned to c."""
    rows = []
    for coords in itertools.product(range(d), repeat=p):
        codes = [0] * d
        for member, c in enumerate(coords):
            codes[c] |= 1 << member
        rows.append(codes)
    return _frozen(np.array(rows, dtype=np.int64).reshape(-1, d))


def best_response_diagonal(theta_ref, S: ParetoSet, weights, sigma,
                           budget: int = DEFAULT_PIECE_BUDGET) -> BestResponse:
    """Closed-form best response for identity features and diagonal Sigma."""
    mu = np.asarray(theta_ref, dtype=float)
    w = np.asarray(weights, dtype=float)
    var = np.diag(np.asarray(sigma, dtype=float))
    K, d = mu.shape
    members, others = _split_indices(S.indices, K)
    p = members.size
    if others.size and d ** p > budget:
        raise PieceBudgetError(f"d^p = {d}^{p} exceeds the piece budget {budget}")
    best_value, best_piece, best_lam = math.inf, None, None

    if p > 1:
        wz = w[members][:, None]
        wx = w[members][None, :]
        tot = wz + wx
        pool = np.where(tot > 0, wz * wx / np.where(tot > 0, tot, 1.0), 0.0)
        excess = np.maximum(mu[members][:, None, :] - mu[members][None, :, :], 0.0)
        cost = pool * (excess ** 2 / var).sum(-1)
        np.fill_diagonal(cost, np.inf)
        a, b = np.unravel_index(np.argmin(cost), cost.shape)
        if cost[a, b] < best_value:
            z, x = int(members[a]), int(members[b])
            best_value = float(cost[a, b])
            best_piece = AltPiece("demote", z, x)
            lam = mu.copy()
            tot = w[z] + w[x]
            active = mu[z] > mu[x]
            if tot > 0:
                pooled = (w[z] * mu[z] + w[x] * mu[x]) / tot
            else:
                pooled = 0.5 * (mu[z] + mu[x])
            lam[z] = np.where(active, pooled, mu[z])
            lam[x] = np.where(active, pooled, mu[x])
            best_lam = lam

    if others.size:
        subsets = _subset_masks(p)
        table = _assignment_table(p, d)  # (na, d)
        F = np.empty((others.size, d, subsets.shape[0]))
        Y = np.empty_like(F)
        fill = _water_fill_single if p == 1 else functools.partial(_water_fill, subsets=subsets)
        for c in range(d):
            vals, ys = fill(mu[others, c], w[others], mu[members, c], w[members])
            F[:, c, :] = vals / var[c]
            Y[:, c, :] = ys
        totals = F[:, np.arange(d)[None, :], table].sum(-1)  # (nz, na)
        flat = int(np.argmin(totals))
        zi, ai = np.unravel_index(flat, totals.shape)
        if totals[zi, ai] < best_value:
            z = int(others[zi])
            best_value = float(totals[zi, ai])
            coords = next(itertools.islice(itertools.product(range(d), repeat=p), int(ai), None))
            best_piece = AltPiece("promote", z, assignment=tuple(zip(members.tolist(), coords)))
            lam = mu.copy()
            for c in range(d):
                code = table[ai, c]
                y = Y[zi, c, code]
                lam[z, c] = y
                for k in range(p):
                    if code >> k & 1:
                        x = members[k]
                        lam[x, c] = min(mu[x, c], y)
            best_lam = lam
    if best_lam is None:
        raise OracleError("alternative set is empty")
    return BestResponse(best_lam, max(best_value, 0.0), best_piece)


# ------------------------------------------------------------ general solver

def _solve_lcp(P: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """Find mu >= 0 with b + P mu >= 0 and complementarity, by active sets."""
    m = b.size
    if np.all(b >= 0):
        return np.zeros(m)
    scale = max(1.0, float(np.abs(b).max()))
    tol = 1e-10 * scale
    order = sorted(range(1, 1 << m), key=lambda code: bin(code).count("1"))
    for code in order:
        act = [k for k in range(m) if code >> k & 1]
        if any(b[k] >= 0 for k in act) and len(act) == 1:
            continue
        Paa = P[np.ix_(act, act)]
        sol, *_ = np.linalg.lstsq(Paa, -b[act], rcond=None)
        if np.any(sol < -tol):
            continue
        mu = np.zeros(m)
        mu[act] = np.maximum(sol, 0.0)
        slack = b + P @ mu
        if np.all(slack >= -tol * 10):
            return mu
    return None


def _piece_system(piece: AltPiece, theta: np.ndarray, V_inv: np.ndarray, sigma: np.ndarray,
                  Zmat: Optional[np.ndarray], d: int):
    cons = piece.constraints(d)
    h = theta.shape[0]
    G = np.empty((len(cons), h))
    coords = np.empty(len(cons), dtype=int)
    for k, (lo, hi, c) in enumerate(cons):
        if Zmat is None:
            g = np.zeros(h)
            g[hi] += 1.0
            g[lo] -= 1.0
        else:
            g = Zmat[hi] - Zmat[lo]
        G[k] = g
        coords[k] = c
    b = np.einsum("kh,hk->k", G, theta[:, coords])
    VG = V_inv @ G.T  # (h, m)
    P = sigma[np.ix_(coords, coords)] * (G @ VG)
    return G, coords, b, VG, P


def _project_piece(piece, theta, V_inv, sigma, Zmat, d):
    G, coords, b, VG, P = _piece_system(piece, theta, V_inv, sigma, Zmat, d)
    mu = _solve_lcp(P, b)
    if mu is None:
        raise OracleError(f"active-set search failed on piece {piece}")
    lam = theta + VG @ (mu[:, None] * sigma[coords, :])
    return float(mu @ P @ mu), lam


def _single_costs(theta, V_inv, sigma, Zmat, members, others, d):
    """Cost of the single halfspace ``mean_z(c) >= mean_x(c)`` for z in others, x in members."""
    h = theta.shape[0]
    Zm = np.eye(h) if Zmat is None else Zmat
    means = Zm @ theta
    diff = means[others][:, None, :] - means[members][None, :, :]  # (q, p, d)
    g = Zm[others][:, None, :] - Zm[members][None, :, :]  # (q, p, h)
    gv = np.einsum("qph,hk,qpk->qp", g, V_inv, g)
    denom = gv[..., None] * np.diag(sigma)[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(diff < 0, diff ** 2 / denom, 0.0)


def best_response_design(theta_ref, S: ParetoSet, V, sigma, Z: Optional[np.ndarray] = None,
                         theta_ball: Optional[float] = None,
                         budget: int = DEFAULT_PIECE_BUDGET) -> BestResponse:
    """Best response with an explicit (h x h) design matrix ``V``."""
    theta = np.asarray(theta_ref, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    V = np.asarray(V, dtype=float)
    h, d = theta.shape
    if Z is None and theta_ball is None and _is_diagonal(sigma) and _is_diagonal(V):
        return best_response_diagonal(theta, S, np.diag(V), sigma, budget)
    try:
        V_inv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise OracleError("design matrix is singular") from exc
    n_answers = h if Z is None else Z.shape[0]
    members = list(S.indices)
    others = list(S.complement(n_answers))
    p = len(members)
    if others and d ** p > budget:
        raise PieceBudgetError(f"d^p = {d}^{p} exceeds the piece budget {budget}")

    best = BestResponse(theta.copy(), math.inf, None)
    candidates: List[Tuple[float, AltPiece]] = []
    for z in members:
        for x in members:
            if z != x:
                candidates.append((0.0, AltPiece("demote", z, x)))
    if others:
        single = _single_costs(theta, V_inv, sigma, Z, members, others, d)  # (q, p, d)
        for qi, z in enumerate(others):
            for coords in itertools.product(range(d), repeat=p):
                lb = max(single[qi, k, c] for k, c in enumerate(coords))
                candidates.append((lb, AltPiece("promote", z, assignment=tuple(zip(members, coords)))))
    candidates.sort(key=lambda item: item[0])
    for lb, piece in candidates:
        if lb >= best.value:
            break
        value, lam = _project_piece(piece, theta, V_inv, sigma, Z, d)
        exact = True
        if theta_ball is not None and (lam ** 2).sum(0).max() > theta_ball ** 2 * (1 + 1e-12):
            value, lam = _project_piece_ball(piece, theta, V, sigma, Z, d, theta_ball, lam)
            exact = False
        if value < best.value:
            best = BestResponse(lam, value, piece, exact)
    if best.piece is None:
        raise OracleError("alternative set is empty")
    return best


def _project_piece_ball(piece, theta, V, sigma, Zmat, d, radius, start):
    """Projection onto a piece intersected with the column ball (SLSQP)."""
    h = theta.shape[0]
    sigma_inv = np.linalg.inv(sigma)
    G, coords, b, _, _ = _piece_system(piece, theta, np.eye(h), sigma, Zmat, d)

    def objective(vec):
        D = theta - vec.reshape(h, d)
        return float(np.sum((D.T @ V @ D) * sigma_inv))

    def gradient(vec):
        D = theta - vec.reshape(h, d)
        return (-2.0 * V @ D @ sigma_inv).ravel()

    cons = [{"type": "ineq", "fun": lambda v, k=k: G[k] @ v.reshape(h, d)[:, coords[k]]}
            for k in range(G.shape[0])]
    cons += [{"type": "ineq", "fun": lambda v, c=c: radius ** 2 - np.sum(v.reshape(h, d)[:, c] ** 2)}
             for c in range(d)]
    x0 = start * min(1.0, radius / max(np.sqrt((start ** 2).sum(0)).max(), 1e-300))
    res = optimize.minimize(objective, x0.ravel(), jac=gradient, constraints=cons, method="SLSQP",
                            options={"ftol": 1e-12, "maxiter": 500})
    return float(res.fun), res.x.reshape(h, d)


def best_response(theta_ref, S: ParetoSet, weights, sigma, A: Optional[np.ndarray] = None,
                  Z: Optional[np.ndarray] = None, theta_ball: Optional[float] = None,
                  budget: int = DEFAULT_PIECE_BUDGET) -> BestResponse:
    """Closest alternative to ``theta_ref`` in the ``Sigma^{-1} (x) V_w`` metric.

    ``weights`` are per-arm weights (or counts); ``A=None`` means identity
    arm features.  The value is not halved.
    """
    w = np.asarray(weights, dtype=float)
    if A is None:
        V = np.diag(w)
    else:
        A = np.asarray(A, dtype=float)
        V = (A.T * w) @ A
    return best_response_design(theta_ref, S, V, sigma, Z=Z, theta_ball=theta_ball, budget=budget)


def glr_infimum(estimator, S: ParetoSet, Z: Optional[np.ndarray] = None,
                theta_ball: Optional[float] = None) -> float:
    br = best_response_design(estimator.theta_hat, S, estimator.V, estimator.sigma, Z=Z,
                              theta_ball=theta_ball)
    return 0.5 * br.value


def arm_gains(theta_ref: np.ndarray, lam: np.ndarray, A: Optional[np.ndarray],
              sigma_inv: np.ndarray) -> np.ndarray:
    """Per-arm squared norms ``||(theta - lam)^T a||^2_{Sigma^{-1}}``."""
    D = theta_ref - lam
    W = D if A is None else A @ D
    return np.einsum("kc,ce,ke->k", W, sigma_inv, W)


CHECK_EVERY = 50


def characteristic_time(instance, max_iters: int = 5000, tol: float = 1e-3) -> CharacteristicTime:
    """Best-response dynamics: AdaHedge over arms against exact best responses."""
    theta = instance.theta
    S = pareto_set(instance.answer_means)
    A = None if instance.unstructured else instance.A
    Z = None if instance.unstructured else instance.Z
    K = instance.K
    hedge = AdaHedge(K)
    w_sum = np.zeros(K)
    gain_sum = np.zeros(K)

    def value_of(weights):
        return best_response(theta, S, weights, instance.sigma, A=A, Z=Z,
                             theta_ball=instance.theta_ball).value

    iters = 0
    value = math.nan
    gap = math.inf
    while iters < max_iters:
        w = hedge.weights()
        br = best_response(theta, S, w, instance.sigma, A=A, Z=Z, theta_ball=instance.theta_ball)
        gains = arm_gains(theta, br.lambda_star, A, instance.sigma_inv)
        hedge.feed(gains)
        w_sum += w
        gain_sum += gains
        iters += 1
        if iters % CHECK_EVERY == 0 or iters == max_iters:
            value = value_of(w_sum / iters)
            # the averaged gains of the best responses upper-bound the game value
            gap = float(gain_sum.max() / iters - value)
            if value > 0 and gap <= tol * value:
                break
    w_star = w_sum / iters
    if not value > 0:
        raise OracleError("zero game value; the Pareto set is not identifiable")
    return CharacteristicTime(t_star=2.0 / value, w_star=w_star, iterations=iters,
                              duality_gap_estimate=max(gap, 0.0), value=value)
