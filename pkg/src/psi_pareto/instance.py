"""Bandit environments: features, regression matrix, noise model, loaders."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .pareto import ParetoSet, gaps, pareto_set

NOISE_KINDS = ("gaussian", "bernoulli")
MAX_CAP_RETRIES = 10 ** 4


class MissingDataError(RuntimeError):
    """Raised when an instance was built without its feature matrix."""


class InstanceError(ValueError):
    pass


COVBOOST_ARMS = (
    "BNT/BNT ChAd", "BNT/BNT NVX", "BNT/BNT NVX Half", "BNT/BNT BNT", "BNT/BNT BNT Half",
    "BNT/BNT VLA", "BNT/BNT VLA Half", "BNT/BNT Ad26", "BNT/BNT m1273", "BNT/BNT CVn",
    "ChAd/ChAd ChAd", "ChAd/ChAd NVX", "ChAd/ChAd NVX Half", "ChAd/ChAd BNT", "ChAd/ChAd BNT Half",
    "ChAd/ChAd VLA", "ChAd/ChAd VLA Half", "ChAd/ChAd Ad26", "ChAd/ChAd m1273", "ChAd/ChAd CVn",
)

# log-transformed immune responses: anti-spike IgG, NT50, cellular response
COVBOOST_MEANS = (
    ("9.50", "6.86", "4.56"), ("9.29", "6.64", "4.04"), ("9.05", "6.41", "3.56"),
    ("10.21", "7.49", "4.43"), ("10.05", "7.20", "4.36"), ("8.34", "5.67", "3.51"),
    ("8.22", "5.46", "3.64"), ("9.75", "7.27", "4.71"), ("10.43", "7.61", "4.72"),
    ("8.94", "6.19", "3.84"),
    ("7.81", "5.26", "3.97"), ("8.85", "6.59", "4.73"), ("8.44", "6.15", "4.59"),
    ("9.93", "7.39", "4.75"), ("8.71", "7.20", "4.91"), ("7.51", "5.31", "3.96"),
    ("7.27", "4.99", "4.02"), ("8.62", "6.33", "4.66"), ("10.35", "7.77", "5.00"),
    ("8.29", "5.92", "3.87"),
)
COVBOOST_VARIANCES = (0.70, 0.83, 1.54)

NOC_THETA = (
    (-3.08665453, -3.35487744),
    (-3.66027623, 0.19333635),
    (-2.68963781, -1.39779755),
    (-7.90670356, -4.44360318),
)
NOC_THETA_BALL = 10.0
NOC_DESIGNS = 259


class Instance:
    """Immutable bandit instance.

    Answers are rows of ``Z`` and arms are rows of ``A``; both are mapped to
    objective means through ``theta`` (h x d).
    """

    def __init__(self, A: Optional[np.ndarray], theta, sigma, Z: Optional[np.ndarray] = None,
                 noise: str = "gaussian", theta_ball: Optional[float] = None, name: str = "custom"):
        theta = np.array(theta, dtype=float, ndmin=2)
        sigma = np.array(sigma, dtype=float, ndmin=2)
        h, d = theta.shape
        if sigma.shape != (d, d):
            raise InstanceError(f"sigma must be {d}x{d}")
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12):
            raise InstanceError("sigma must be symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise InstanceError("sigma must be positive definite") from exc
        if noise not in NOISE_KINDS:
            raise InstanceError(f"unknown noise kind {noise!r}")
        self._A = None if A is None else np.array(A, dtype=float, ndmin=2)
        if self._A is not None and self._A.shape[1] != h:
            raise InstanceError("A must have h columns")
        if Z is not None:
            Z = np.array(Z, dtype=float, ndmin=2)
            if Z.shape[1] != h:
                raise InstanceError("Z must have h columns")
        self._Z = Z
        self.theta = theta
        self.sigma = sigma
        self.sigma_chol = chol
        self.sigma_inv = np.linalg.inv(sigma)
        self.noise = noise
        self.theta_ball = None if theta_ball is None else float(theta_ball)
        self.name = name
        for arr in (self.theta, self.sigma, self.sigma_chol, self.sigma_inv):
            arr.setflags(write=False)
        if self._A is not None:
            self._A.setflags(write=False)
            if noise == "bernoulli":
                m = self.arm_means
                if np.any(m < 0.0) or np.any(m > 1.0):
                    raise InstanceError("bernoulli noise needs every arm mean in [0, 1]")
        if self.theta_ball is not None:
            if np.sqrt((theta ** 2).sum(0)).max() > self.theta_ball + 1e-12:
                raise InstanceError("theta lies outside the declared parameter ball")

    @property
    def A(self) -> np.ndarray:
        if self._A is None:
            raise MissingDataError(f"instance {self.name!r} was built without its feature matrix")
        return self._A

    @property
    def Z(self) -> np.ndarray:
        return self.A if self._Z is None else self._Z

    @property
    def has_features(self) -> bool:
        return self._A is not None

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.theta.shape[1]

    @property
    def h(self) -> int:
        return self.theta.shape[0]

    @property
    def n_answers(self) -> int:
        return self.Z.shape[0]

    @property
    def unstructured(self) -> bool:
        A = self.A
        return (A.shape[0] == A.shape[1] and np.array_equal(A, np.eye(A.shape[0]))
                and (self._Z is None or np.array_equal(self._Z, A)))

    @property
    def answer_means(self) -> np.ndarray:
        return self.Z @ self.theta

    @property
    def arm_means(self) -> np.ndarray:
        return self.A @ self.theta

    @property
    def arm_norm(self) -> float:
        return float(np.sqrt((self.A ** 2).sum(1)).max())

    def pareto_set(self) -> ParetoSet:
        return pareto_set(self.answer_means)

    def with_sigma(self, sigma, name: Optional[str] = None) -> "Instance":
        return Instance(self._A, self.theta, sigma, Z=self._Z, noise=self.noise,
                        theta_ball=self.theta_ball, name=name or self.name)


def mean_of(instance: Instance, answer_index: int) -> np.ndarray:
    Z = instance.Z
    if not 0 <= answer_index < Z.shape[0]:
        raise IndexError(f"answer index {answer_index} out of range")
    return instance.theta.T @ Z[answer_index]


def draw_observation(instance: Instance, arm_index: int, rng: np.random.Generator) -> np.ndarray:
    A = instance.A
    if not 0 <= arm_index < A.shape[0]:
        raise IndexError(f"arm index {arm_index} out of range")
    mu = instance.theta.T @ A[arm_index]
    if instance.noise == "bernoulli":
        if np.any(mu < 0.0) or np.any(mu > 1.0):
            raise InstanceError("bernoulli noise needs means in [0, 1]")
        return (rng.random(mu.size) < mu).astype(float)
    return mu + instance.sigma_chol @ rng.standard_normal(mu.size)


def unstructured(means, sigma, noise: str = "gaussian", name: str = "custom") -> Instance:
    means = np.array(means, dtype=float, ndmin=2)
    return Instance(np.eye(means.shape[0]), means, sigma, noise=noise, name=name)


def rotation_means(K: int) -> np.ndarray:
    angle = math.pi / 5.0
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    means = np.empty((K, 2))
    means[0] = (1.0, 1.0)
    for i in range(1, K):
        means[i] = rot @ means[i - 1]
    return means


def correlated_sigma(rho: float) -> np.ndarray:
    return np.array([[1.0, rho], [rho, 1.0]])


def rotation_instance(K: int = 5, sigma=None) -> Instance:
    sigma = 0.5 * np.eye(2) if sigma is None else sigma
    return unstructured(rotation_means(K), sigma, name=f"rotation-K{K}")


def two_answer_bai(gap: float = 1.0, variance: float = 1.0) -> Instance:
    return unstructured([[0.0], [gap]], [[variance]], name="bai-2")


def gen_random_instance(kind: str, K: int, d: int, rng: np.random.Generator,
                        complexity_cap: Optional[float] = None) -> Instance:
    if K < 2 or d < 1:
        raise InstanceError("need K >= 2 and d >= 1")
    if kind == "rotation":
        return rotation_instance(K)
    if kind == "gaussian_cube":
        low, high, sigma, noise = -1.0, 1.0, 0.5 * np.eye(d), "gaussian"
    elif kind == "bernoulli_box":
        low, high, sigma, noise = 0.2, 0.9, 0.25 * np.eye(d), "bernoulli"
    else:
        raise InstanceError(f"unknown generator {kind!r}")
    for _ in range(MAX_CAP_RETRIES):
        means = rng.uniform(low, high, size=(K, d))
        if complexity_cap is None:
            break
        g = gaps(means)
        if not g.degenerate and g.H <= complexity_cap:
            break
    else:
        raise InstanceError(f"no instance with H <= {complexity_cap} after {MAX_CAP_RETRIES} draws")
    return unstructured(means, sigma, noise=noise, name=f"{kind}-K{K}-d{d}")


def load_covboost() -> Instance:
    means = np.array([[float(v) for v in row] for row in COVBOOST_MEANS])
    return unstructured(means, np.diag(COVBOOST_VARIANCES), name="covboost")


def load_noc(features_path=None, sigma=None) -> Instance:
    sigma = np.eye(2) if sigma is None else sigma
    theta = np.array(NOC_THETA)
    if features_path is None:
        return Instance(None, theta, sigma, theta_ball=NOC_THETA_BALL, name="noc")
    rows = []
    with open(features_path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise InstanceError(f"{features_path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise InstanceError(f"{features_path}:{lineno}: non-numeric entry") from exc
    if len(rows) != NOC_DESIGNS:
        raise InstanceError(f"expected {NOC_DESIGNS} designs, found {len(rows)}")
    return Instance(np.array(rows), theta, sigma, theta_ball=NOC_THETA_BALL, name="noc")


def instance_to_dict(instance: Instance) -> dict:
    doc = {
        "K": instance.K,
        "d": instance.d,
        "h": instance.h,
        "A": instance.A.tolist(),
        "theta": instance.theta.tolist(),
        "sigma": instance.sigma.tolist(),
        "noise": instance.noise,
    }
    if instance._Z is not None:
        doc["Z"] = instance._Z.tolist()
    if instance.theta_ball is not None:
        doc["theta_ball"] = instance.theta_ball
    return doc


def instance_from_dict(doc: dict, name: str = "custom") -> Instance:
    try:
        A = np.array(doc["A"], dtype=float, ndmin=2)
        theta = np.array(doc["theta"], dtype=float, ndmin=2)
        sigma = np.array(doc["sigma"], dtype=float, ndmin=2)
        K, d, h = int(doc["K"]), int(doc["d"]), int(doc["h"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from exc
    if A.shape != (K, h) or theta.shape != (h, d) or sigma.shape != (d, d):
        raise InstanceError("instance dimensions do not match K, d, h")
    Z = doc.get("Z")
    return Instance(A, theta, sigma, Z=None if Z is None else np.array(Z, dtype=float, ndmin=2),
                    noise=doc.get("noise", "gaussian"), theta_ball=doc.get("theta_ball"),
                    name=doc.get("name", name))


def save_instance(instance: Instance, path) -> None:
    doc = instance_to_dict(instance)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_dict(doc, name=path.stem)
