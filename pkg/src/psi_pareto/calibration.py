"""Threshold functions for the posterior-sampling and GLR stopping rules.

Everything here is a pure function of its arguments, except for the
:class:`Calibration` value object which caches a few covariance-derived
constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)

KINDS = ("lemma2", "heuristic")
SETTINGS = ("unstructured_diag", "unstructured_corr", "bai_structured")


def mills_ratio(x: float) -> float:
    """Normal tail divided by the normal density, ``P(X > x) / phi(x)``."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("mills_ratio needs a finite argument")
    if x < -8.0:
        return math.exp(0.5 * x * x) * SQRT_2PI * float(special.ndtr(-x))
    return _SQRT_HALF_PI * float(special.erfcx(x / math.sqrt(2.0)))


def r_small(delta: float, n: int) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be a positive integer")
    x = math.sqrt(2.0 / n * math.log(1.0 / delta))
    return (mills_ratio(x) / SQRT_2PI) ** n


def lambert_wbar(x: float) -> float:
    """Solve ``w - log(w) = x`` on the branch ``w >= 1``."""
    x = float(x)
    if not x >= 1.0:
        raise ValueError("lambert_wbar is defined for x >= 1")
    if x == 1.0:
        return 1.0
    w = x + math.log(x)
    for _ in range(200):
        f = w - math.log(w) - x
        step = f / (1.0 - 1.0 / w)
        w_next = w - step
        if w_next <= 1.0:
            w_next = 0.5 * (w + 1.0)
        if abs(w_next - w) <= 1e-15 * w:
            w = w_next
            break
        w = w_next
    return w


def zeta(s: float) -> float:
    if s == 2.0:
        return math.pi ** 2 / 6.0
    if s <= 1.0:
        raise ValueError("zeta exponent must exceed 1")
    return float(special.zeta(s, 1.0))


def beta_unstructured(t: float, delta: float, K: int, d: int, s: float = 2.0) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    # below t = K the iterated-log term is not defined; clamp at the init size
    t_eff = max(float(t), float(K))
    dk = d * K
    head = (2.0 / dk) * (K * s + K * math.log(zeta(s)) + math.log(1.0 / delta))
    tail = (2.0 * s / d) * math.log1p(d / (2.0 * s) * math.log(t_eff / K))
    return 0.5 * dk * lambert_wbar(head + tail + 1.0)


def beta_structured(t: float, delta: float, d: int, h: int, arm_norm: float,
                    theta_radius: Optional[float], sigma_min_eig: float, xi: float) -> float:
    if theta_radius is None or not math.isfinite(theta_radius):
        raise ValueError("structured threshold needs a bounded parameter ball")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    log_term = math.log(1.0 / delta) + 0.5 * d * h * math.log1p(arm_norm ** 2 * max(t, 0.0) / (h * xi))
    bias = math.sqrt(d * theta_radius ** 2 / (2.0 * sigma_min_eig * xi))
    return (math.sqrt(log_term) + bias) ** 2


@dataclass(frozen=True)
class Calibration:
    kind: str
    setting: str
    K: int
    d: int
    h: int
    s: float = 2.0
    sigma_bar: float = 1.0
    d_sigma: float = 1.0
    det_factor: float = 1.0
    arm_norm: float = 1.0
    theta_radius: Optional[float] = None
    sigma_min_eig: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown calibration kind {self.kind!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown calibration setting {self.setting!r}")
        if self.s <= 1.0:
            raise ValueError("s must exceed 1")

    @classmethod
    def from_sigma(cls, kind: str, sigma: np.ndarray, K: int, h: Optional[int] = None,
                   structured: bool = False, s: float = 2.0, arm_norm: float = 1.0,
                   theta_radius: Optional[float] = None, xi: float = 1.0) -> "Calibration":
        sigma = np.asarray(sigma, dtype=float)
        d = sigma.shape[0]
        sigma_inv = np.linalg.inv(sigma)
        sigma_bar = float(np.linalg.norm(sigma_inv, 2))
        scaled = sigma_bar * sigma
        d_sigma = float(np.ones(d) @ np.linalg.solve(scaled, np.ones(d)))
        det_factor = float(np.linalg.det(scaled) ** -0.5)
        if structured:
            setting = "bai_structured"
        elif np.count_nonzero(sigma - np.diag(np.diag(sigma))) == 0:
            setting = "unstructured_diag"
        else:
            setting = "unstructured_corr"
        return cls(kind=kind, setting=setting, K=K, d=d, h=K if h is None else h, s=s,
                   sigma_bar=sigma_bar, d_sigma=d_sigma, det_factor=det_factor,
                   arm_norm=arm_norm, theta_radius=theta_radius,
                   sigma_min_eig=float(np.linalg.eigvalsh(sigma)[0]), xi=xi)

    def beta(self, t: float, delta: float) -> float:
        if self.setting == "bai_structured":
            return beta_structured(t, delta, self.d, self.h, self.arm_norm, self.theta_radius,
                                   self.sigma_min_eig, self.xi)
        return beta_unstructured(t, delta, self.K, self.d, self.s)


def beta_threshold(t: float, delta: float, cal: Calibration) -> float:
    return cal.beta(t, delta)


def _q_lemma2(delta: float, p: int, cal: Calibration) -> float:
    d = cal.d
    if cal.setting == "bai_structured":
        return r_small(delta, 1)
    if cal.setting == "unstructured_diag":
        return min(r_small(delta, d), r_small(delta, d + p))
    first = r_small(delta ** (cal.d_sigma / d), d)
    second = r_small(delta ** ((cal.d_sigma + p) / (d + p)), d + p)
    return cal.det_factor * min(first, second)


def budget_M(t: float, delta: float, pareto_size: int, cal: Calibration) -> int:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    t = max(float(t), 1.0)
    if cal.kind == "heuristic":
        return int(math.ceil(math.log(t / delta) / delta))
    q = _q_lemma2(delta, pareto_size, cal)
    num = math.log(2.0 * t ** cal.s * zeta(cal.s) / delta)
    return int(math.ceil(num / (delta * q)))


def inflation_c(t: float, delta: float, cal: Calibration) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if cal.kind == "heuristic":
        t_eff = max(float(t), 3.0)
        return 1.0 + math.log(math.log(t_eff)) / math.log(1.0 / delta)
    return cal.beta(t, 0.5 * delta) / math.log(1.0 / delta)


def mvn_orthant_lower_bound(sigma: np.ndarray, x: np.ndarray) -> float:
    """Lower bound on ``P(X >= x)`` for ``X ~ N(0, sigma)``."""
    sigma = np.asarray(sigma, dtype=float)
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.size
    sigma_inv = np.linalg.inv(sigma)
    sigma_bar = float(np.linalg.norm(sigma_inv, 2))
    scaled = sigma_bar * sigma
    d_sigma = float(np.ones(d) @ np.linalg.solve(scaled, np.ones(d)))
    quad = float(x @ sigma_inv @ x)
    arg = math.sqrt(quad) * math.sqrt(d_sigma) / d
    log_bound = (-0.5 * d * math.log(2.0 * math.pi) - 0.5 * math.log(np.linalg.det(scaled))
                 - 0.5 * quad + d * math.log(mills_ratio(arg)))
    return math.exp(log_bound)
