"""Pareto-order geometry: dominance, Pareto sets, alternative sets, gaps."""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels

DEFAULT_PIECE_BUDGET = 10 ** 6


class PieceBudgetError(RuntimeError):
    pass


def dominates(u, v) -> bool:
    """True when ``v`` is strictly dominated by ``u``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("dominance needs vectors of equal dimension")
    return bool(np.all(v <= u) and np.any(v < u))


@dataclass(frozen=True)
class ParetoSet:
    indices: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(int(i) for i in self.indices)))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, item) -> bool:
        return int(item) in self.indices

    def mask(self, n: int) -> np.ndarray:
        """Read-only uint8 membership vector of length ``n``."""
        return _membership(self.indices, n)

    def complement(self, n: int) -> Tuple[int, ...]:
        members = set(self.indices)
        return tuple(i for i in range(n) if i not in members)


@functools.lru_cache(maxsize=256)
def _membership(indices: Tuple[int, ...], n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.uint8)
    out[list(indices)] = 1
    out.flags.writeable = False
    return out


def _scan_mask(means: np.ndarray) -> np.ndarray:
    ge = (means[None, :, :] >= means[:, None, :]).all(-1)
    gt = (means[None, :, :] > means[:, None, :]).any(-1)
    return ~(ge & gt).any(1)


def pareto_set(means, method: str = "auto") -> ParetoSet:
    """Indices of the rows of ``means`` that no other row strictly dominates.

    ``method="scan"`` forces the pairwise comparison even when d = 2.
    """
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.shape[0] < 1:
        raise ValueError("means must be a non-empty n x d matrix")
    if method == "scan":
        mask = _scan_mask(means)
    elif method == "auto":
        mask = kernels.pareto_mask(means)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ParetoSet(tuple(np.flatnonzero(mask)))


def answer_means(lam, Z: Optional[np.ndarray] = None) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return lam if Z is None else np.asarray(Z, dtype=float) @ lam


def in_alt(lam, S: ParetoSet, Z: Optional[np.ndarray] = None) -> bool:
    """Whether the Pareto set of ``Z @ lam`` differs from ``S``.

    Uses the halfspace characterisation directly and never builds the
    Pareto set of ``lam``.  ``Z=None`` means identity answer features.
    """
    if len(S) == 0:
        raise ValueError("S must be non-empty")
    means = answer_means(lam, Z)
    return kernels.in_alt(means, S.mask(means.shape[0]))


@dataclass(frozen=True)
class AltPiece:
    """One convex piece of the alternative set.

    ``kind="demote"``: answer ``z`` is weakly below member ``x`` in every
    coordinate.  ``kind="promote"``: non-member ``z`` reaches each member
    ``x`` in the coordinate ``assignment[x]``.
    """
    kind: str
    z: int
    x: Optional[int] = None
    assignment: Tuple[Tuple[int, int], ...] = field(default_factory=tuple)

    def constraints(self, d: int) -> List[Tuple[int, int, int]]:
        """Triples (low, high, c) meaning ``means[high, c] >= means[low, c]``."""
        if self.kind == "demote":
            return [(self.z, self.x, c) for c in range(d)]
        return [(x, self.z, c) for x, c in self.assignment]

    def contains(self, means: np.ndarray, tol: float = 0.0) -> bool:
        d = means.shape[1]
        return all(means[hi, c] - means[lo, c] >= -tol for lo, hi, c in self.constraints(d))


def piece_count(p: int, n_answers: int, d: int) -> int:
    return p * (p - 1) + (n_answers - p) * d ** p


def iter_alt_pieces(S: ParetoSet, n_answers: int, d: int,
                    budget: int = DEFAULT_PIECE_BUDGET) -> Iterator[AltPiece]:
    p = len(S)
    if p < 1:
        raise ValueError("S must be non-empty")
    if (n_answers - p) > 0 and d ** p > budget:
        raise PieceBudgetError(f"d^p = {d}^{p} exceeds the piece budget {budget}")
    members = S.indices
    for z in members:
        for x in members:
            if z != x:
                yield AltPiece("demote", z, x)
    for z in S.complement(n_answers):
        for coords in itertools.product(range(d), repeat=p):
            yield AltPiece("promote", z, assignment=tuple(zip(members, coords)))


def alt_pieces(S: ParetoSet, Z, d: int, budget: int = DEFAULT_PIECE_BUDGET) -> List[AltPiece]:
    n_answers = Z if isinstance(Z, (int, np.integer)) else np.asarray(Z).shape[0]
    return list(iter_alt_pieces(S, int(n_answers), d, budget))


@dataclass(frozen=True)
class GapSummary:
    delta1: float
    delta2: float
    delta_min: float
    per_arm: np.ndarray
    big_m: np.ndarray
    small_m: np.ndarray
    pareto: ParetoSet

    @property
    def H(self) -> float:
        with np.errstate(divide="ignore"):
            return float(np.sum(self.per_arm ** -2.0))

    @property
    def degenerate(self) -> bool:
        return not self.delta_min > 0.0


def gaps(source) -> GapSummary:
    """Gap quantities of a mean matrix (or of anything with ``answer_means``)."""
    means = np.asarray(getattr(source, "answer_means", source), dtype=float)
    n = means.shape[0]
    diff = means[:, None, :] - means[None, :, :]  # [a, b] = mu_a - mu_b
    big_m = np.sqrt((np.maximum(diff, 0.0) ** 2).sum(-1))
    small_m = diff.min(-1)
    S = pareto_set(means)
    optimal = np.zeros(n, dtype=bool)
    optimal[list(S.indices)] = True
    per_arm = np.empty(n)
    off_diag = ~np.eye(n, dtype=bool)
    for a in range(n):
        if optimal[a]:
            per_arm[a] = big_m[a, off_diag[a]].min() if n > 1 else np.inf
        else:
            per_arm[a] = small_m[optimal, a].max()
    delta1 = float(per_arm[optimal].min()) if n > 1 else np.inf
    delta2 = float(per_arm[~optimal].min()) if (~optimal).any() else np.inf
    return GapSummary(delta1=delta1, delta2=delta2, delta_min=min(delta1, delta2),
                      per_arm=per_arm, big_m=big_m, small_m=small_m, pareto=S)
