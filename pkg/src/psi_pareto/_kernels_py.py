"""Pure numpy implementations of the hot loops.

The compiled module ``_kernels`` exposes the same functions and the
``BlockScanner`` class with the same semantics; :mod:`psi_pareto.kernels` picks one at import time.
"""
from __future__ import annotations

import numpy as np

REGION_NONE = 0
REGION_COLUMN_BALL = 1
REGION_ROW_ELLIPSOID = 2


def pareto_mask(means: np.ndarray) -> np.ndarray:
    means = np.ascontiguousarray(means, dtype=float)
    n, d = means.shape
    if d == 2:
        return _pareto_mask_2d(means)
    ge = (means[None, :, :] >= means[:, None, :]).all(-1)  # [i, j]: j >= i everywhere
    gt = (means[None, :, :] > means[:, None, :]).any(-1)
    return ~(ge & gt).any(1)


def _pareto_mask_2d(means: np.ndarray) -> np.ndarray:
    n = means.shape[0]
    order = np.lexsort((-means[:, 1], -means[:, 0]))
    keep = np.ones(n, dtype=bool)
    best_y = -np.inf  # max second coordinate over strictly larger first coordinates
    i = 0
    while i < n:
        x = means[order[i], 0]
        j = i
        group_top = means[order[i], 1]
        while j < n and means[order[j], 0] == x:
            y = means[order[j], 1]
            if best_y >= y or group_top > y:
                keep[order[j]] = False
            j += 1
        best_y = max(best_y, group_top)
        i = j
    return keep


def alt_mask_batch(means: np.ndarray, in_set: np.ndarray) -> np.ndarray:
    """Alt membership for a batch of mean matrices of shape (n, |Z|, d)."""
    in_set = np.asarray(in_set, dtype=bool)
    members = means[:, in_set, :]
    others = means[:, ~in_set, :]
    le = (members[:, :, None, :] <= members[:, None, :, :]).all(-1)
    lt = (members[:, :, None, :] < members[:, None, :, :]).any(-1)
    demote = (le & lt).any((1, 2))
    if others.shape[1] == 0:
        return demote
    le = (others[:, :, None, :] <= members[:, None, :, :]).all(-1)
    lt = (others[:, :, None, :] < members[:, None, :, :]).any(-1)
    promote = (~(le & lt).any(2)).any(1)
    return demote | promote


def in_alt(means: np.ndarray, in_set: np.ndarray) -> bool:
    means = np.asarray(means, dtype=float)
    return bool(alt_mask_batch(means[None], in_set)[0])


def _region_mask(lam: np.ndarray, region: int, param: float, sig_inv: np.ndarray) -> np.ndarray:
    if region == REGION_NONE:
        return np.ones(lam.shape[0], dtype=bool)
    if region == REGION_COLUMN_BALL:
        return (lam ** 2).sum(1).max(-1) <= param * param
    quad = np.einsum("nic,ce,nie->ni", lam, sig_inv, lam)
    return quad.max(-1) < param * param


def _first_hit(G, theta_hat, lv, diag_v, lsig, Z, identity_z, in_set,
               scale, limit, region, param, sig_inv) -> int:
    if limit <= 0:
        return -1
    g = G[:limit]
    tmp = g @ lsig.T
    if diag_v:
        v = np.diagonal(lv)[None, :, None] * tmp
    else:
        v = lv @ tmp
    lam = theta_hat[None] + scale * v
    ok = _region_mask(lam, region, param, sig_inv)
    means = lam if identity_z else Z @ lam
    ok &= alt_mask_batch(means, in_set)
    hits = np.flatnonzero(ok)
    return int(hits[0]) if hits.size else -1


def scan_block(G, theta_hat, lv, diag_v, lsig, Z, identity_z, in_set,
               stop_scale, stop_limit, stop_region, stop_param,
               min_scale, min_limit, min_region, min_param, sig_inv):
    """First alternative hit for the stopping and min-learner inflations.

    ``G`` holds standard normal matrices of shape (n, h, d).  Each entry is
    mapped to the centered posterior draw ``lv @ G[m] @ lsig.T`` and then
    inflated by each scale.  Returns two block-local indices (or -1).
    """
    in_set = np.asarray(in_set, dtype=bool)
    stop_hit = _first_hit(G, theta_hat, lv, diag_v, lsig, Z, identity_z, in_set,
                          stop_scale, stop_limit, stop_region, stop_param, sig_inv)
    min_hit = _first_hit(G, theta_hat, lv, diag_v, lsig, Z, identity_z, in_set,
                         min_scale, min_limit, min_region, min_param, sig_inv)
    return stop_hit, min_hit


class BlockScanner:
    """``scan_block`` with the per-round arrays bound once."""

    def __init__(self, theta_hat, lv, diag_v, lsig, Z, identity_z, in_set, sig_inv):
        self._fixed = (np.asarray(theta_hat, dtype=float), np.asarray(lv, dtype=float), bool(diag_v),
                       np.asarray(lsig, dtype=float), np.asarray(Z, dtype=float), bool(identity_z),
                       np.asarray(in_set, dtype=bool))
        self._sig_inv = np.asarray(sig_inv, dtype=float)

    def scan(self, G, stop_scale, stop_limit, stop_region, stop_param,
             min_scale, min_limit, min_region, min_param):
        return scan_block(G, *self._fixed, stop_scale, stop_limit, stop_region, stop_param,
                          min_scale, min_limit, min_region, min_param, self._sig_inv)

    def walk(self, stream, stop_budget, stop_scale, stop_region, stop_param,
             min_cap, min_scale, min_region, min_param):
        """Joint walk over ``stream.block(0), stream.block(1), ...``.

        Returns (stop_hit, stop_used, min_hit, min_used, min_block, min_row); hits
        are 1-based positions or 0.
        """
        stop_hit = min_hit = stop_used = min_used = 0
        min_block = min_row = -1
        index = 0
        while (not stop_hit and stop_used < stop_budget) or (not min_hit and min_used < min_cap):
            n = stream.size(index)
            s_lim = max(min(n, stop_budget - stop_used), 0) if not stop_hit else 0
            m_lim = max(min(n, min_cap - min_used), 0) if not min_hit else 0
            G = stream.block(index, max(s_lim, m_lim))
            s, m = self.scan(G, stop_scale, s_lim, stop_region, stop_param,
                             min_scale, m_lim, min_region, min_param)
            if not stop_hit:
                if s >= 0:
                    stop_hit = stop_used + s + 1
                else:
                    stop_used += s_lim
            if not min_hit:
                if m >= 0:
                    min_hit, min_block, min_row = min_used + m + 1, index, m
                else:
                    min_used += m_lim
            index += 1
        return stop_hit, stop_used, min_hit, min_used, min_block, min_row


def _row_sq_norms(X: np.ndarray) -> np.ndarray:
    # left-to-right over the last axis, matching the compiled loop for every d
    out = X[..., 0] * X[..., 0]
    for c in range(1, X.shape[-1]):
        out = out + X[..., c] * X[..., c]
    return out


def halve_bounds(inv_counts, white, in_set, root_f1):
    """Candidate bounds (U, u) for Estimate-and-Halve.

    ``U`` is the largest member-pair distance, or twice the largest
    non-member-to-member distance if that is bigger, where the distance
    adds the confidence width ``root_f1 * sqrt(1/N_i + 1/N_j)`` to the
    whitened mean gap.  ``u`` bounds the whitened mean norms the same way.
    """
    inv_counts = np.asarray(inv_counts, dtype=float)
    white = np.asarray(white, dtype=float)
    mask = np.asarray(in_set).astype(bool)
    conf = root_f1 * np.sqrt(inv_counts[:, None] + inv_counts[mask][None, :])
    spread = np.sqrt(_row_sq_norms(white[:, None, :] - white[mask][None, :, :]))
    pair = conf + spread
    U = 0.0
    inner = pair[mask]
    if inner.shape[0] > 1:
        np.fill_diagonal(inner, -np.inf)
        U = float(inner.max())
    if not mask.all():
        U = max(U, 2.0 * float(pair[~mask].max()))
    u = float(np.max(root_f1 * np.sqrt(inv_counts) + np.sqrt(_row_sq_norms(white))))
    return U, u
