"""Regularised least squares with rank-one inverse updates and posterior draws."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .instance import Instance, draw_observation

REFRESH_EVERY = 10 ** 4
MODES = ("unstructured", "structured")


class EstimatorState:
    """Sufficient statistics of a run.

    ``V = xi*I + sum_a N_a a a^T`` with its inverse kept by Sherman-Morrison,
    ``Zmom = sum_s a_s X_s^T`` and ``theta_hat = V^{-1} Zmom``.
    """

    def __init__(self, A: np.ndarray, sigma: np.ndarray, xi: float, diagonal: bool = False):
        A = np.asarray(A, dtype=float)
        K, h = A.shape
        sigma = np.asarray(sigma, dtype=float)
        d = sigma.shape[0]
        self.A = A
        self.xi = float(xi)
        self.diagonal = diagonal
        self.V = self.xi * np.eye(h)
        self.V_inv = np.eye(h) / self.xi if self.xi > 0 else np.full((h, h), np.nan)
        self.Zmom = np.zeros((h, d))
        self.theta_hat = np.zeros((h, d))
        self.counts = np.zeros(K, dtype=np.int64)
        self.t = 0
        self.sigma = sigma
        self.sigma_chol = np.linalg.cholesky(sigma)
        self.sigma_inv = np.linalg.inv(sigma)
        self.sigma_diagonal = bool(np.count_nonzero(sigma - np.diag(np.diag(sigma))) == 0)
        # whitening map: rows of theta @ white.T have Sigma^{-1} norms as Euclidean norms
        self.sigma_white = np.linalg.inv(self.sigma_chol)
        self._since_refresh = 0
        self._lv = None

    @property
    def h(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    def update(self, arm_index: int, observation) -> None:
        a = self.A[arm_index]
        x = np.asarray(observation, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"observation must have {self.d} entries")
        if self.diagonal:
            self._update_unit(arm_index, x)
            return
        self.V += np.outer(a, a)
        self.Zmom += np.outer(a, x)
        self.counts[arm_index] += 1
        self.t += 1
        self._since_refresh += 1
        if self._since_refresh >= REFRESH_EVERY or not np.isfinite(self.V_inv[0, 0]):
            self.refresh()
        else:
            va = self.V_inv @ a
            self.V_inv -= np.outer(va, va) / (1.0 + a @ va)
        self.theta_hat = self.V_inv @ self.Zmom
        self._lv = None

    def _update_unit(self, k: int, x: np.ndarray) -> None:
        """Identity features: V and its inverse stay diagonal, only entry k moves."""
        self.V[k, k] += 1.0
        self.Zmom[k] += x
        self.counts[k] += 1
        self.t += 1
        self._since_refresh += 1
        if self._since_refresh >= REFRESH_EVERY or not np.isfinite(self.V_inv[0, 0]):
            self.refresh()
        else:
            v = self.V_inv[k, k]
            self.V_inv[k, k] = v - v * v / (1.0 + v)
        self.theta_hat = np.diagonal(self.V_inv)[:, None] * self.Zmom
        self._lv = None

    def refresh(self) -> None:
        if self.diagonal:
            self.V_inv = np.diag(1.0 / np.diag(self.V))
        else:
            self.V_inv = np.linalg.inv(self.V)
            self.V_inv = 0.5 * (self.V_inv + self.V_inv.T)
        self._since_refresh = 0

    def design_from_counts(self) -> np.ndarray:
        return self.xi * np.eye(self.h) + (self.A.T * self.counts) @ self.A

    def chol_v_inv(self) -> np.ndarray:
        """Lower Cholesky factor of ``V^{-1}``, cached until the next update."""
        if self._lv is None:
            if self.diagonal:
                self._lv = np.diag(np.sqrt(self.V_inv.diagonal()))
            else:
                self._lv = np.linalg.cholesky(self.V_inv)
        return self._lv

    def posterior_draw(self, scale: float, rng: np.random.Generator) -> np.ndarray:
        if scale < 0:
            raise ValueError("scale must be non-negative")
        G = rng.standard_normal((self.h, self.d))
        return self.theta_hat + np.sqrt(scale) * (self.chol_v_inv() @ G @ self.sigma_chol.T)

    def mahalanobis(self, lam) -> float:
        """``trace(Sigma^{-1} D^T V D)`` with ``D = theta_hat - lam``."""
        D = self.theta_hat - np.asarray(lam, dtype=float)
        return float(np.sum((D.T @ self.V @ D) * self.sigma_inv))

    def arm_means(self) -> np.ndarray:
        return self.A @ self.theta_hat


def init(instance: Instance, mode: str, rng: np.random.Generator, xi: float = 1.0) -> EstimatorState:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "structured":
        if not xi > 0:
            raise ValueError("structured mode needs xi > 0")
        return EstimatorState(instance.A, instance.sigma, xi)
    if not instance.unstructured:
        raise ValueError("unstructured mode needs identity features")
    state = EstimatorState(instance.A, instance.sigma, 0.0, diagonal=True)
    K = instance.K
    for arm in range(K):
        x = draw_observation(instance, arm, rng)
        state.V[arm, arm] += 1.0
        state.Zmom[arm] += x
        state.counts[arm] += 1
        state.t += 1
    state.V_inv = np.eye(K)
    state.theta_hat = state.Zmom.copy()
    return state


def update(state: EstimatorState, arm_index: int, observation) -> None:
    state.update(arm_index, observation)


def posterior_draw(state: EstimatorState, scale: float, rng: np.random.Generator) -> np.ndarray:
    return state.posterior_draw(scale, rng)


def mahalanobis(state: EstimatorState, lam) -> float:
    return state.mahalanobis(lam)
