"""
Synthetic Mixture Service Module
Samples a ground-truth Gaussian mixture and a labeled dataset from it
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.errors import ConfigError
from logic.gmm import Covariance, CovarianceKind, CovarianceType, Dataset, GmmParams

logger = logging.getLogger("QemLab")

MAX_PLACEMENT_ATTEMPTS = 10000


@dataclass
class SyntheticSpec:
    """Shape of a synthetic mixture; separation is the minimum mean distance in units of sigma"""
    k: int = 3
    d: int = 2
    n: int = 500
    separation: float = 6.0
    sigma: float = 1.0
    kind: str = "diag"
    weights: Optional[List[float]] = None
    offset: float = 0.0

    def __post_init__(self):
        if self.k < 1 or self.d < 1:
            raise ConfigError("invalid synthetic spec: k and d must be >= 1")
        if self.n < 1:
            raise ConfigError("invalid synthetic spec: n must be >= 1")
        if self.n < self.k:
            raise ConfigError("invalid synthetic spec: n must be >= k")
        if not self.separation > 0 or not self.sigma > 0:
            raise ConfigError("invalid synthetic spec: separation and sigma must be > 0")
        if self.kind not in ("diag", "spherical", "full"):
            raise ConfigError("invalid synthetic spec: kind must be diag, spherical or full")
        if self.weights is not None:
            weights = np.asarray(self.weights, dtype=float)
            if weights.size != self.k or np.any(weights < 0) or weights.sum() <= 0:
                raise ConfigError("invalid synthetic spec: weights must be k nonnegative values")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "SyntheticSpec":
        try:
            return cls(**payload)
        except TypeError as e:
            raise ConfigError(f"invalid synthetic spec: {e}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _place_means(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    gap = spec.separation * spec.sigma
    if spec.k <= spec.d:
        # scaled basis vectors are pairwise exactly `gap` apart
        means = np.zeros((spec.k, spec.d))
        means[np.arange(spec.k), np.arange(spec.k)] = gap / math.sqrt(2.0)
        return means + spec.offset

    side = gap * spec.k ** (1.0 / spec.d) * 2.0
    means: List[np.ndarray] = []
    attempts = 0
    while len(means) < spec.k:
        attempts += 1
        if attempts % MAX_PLACEMENT_ATTEMPTS == 0:
            side *= 1.5
        candidate = rng.uniform(-side / 2.0, side / 2.0, size=spec.d)
        if all(np.linalg.norm(candidate - m) >= gap for m in means):
            means.append(candidate)
    return np.array(means) + spec.offset


def _component_covariance(spec: SyntheticSpec, rng: np.random.Generator) -> Covariance:
    variances = spec.sigma ** 2 * rng.uniform(0.5, 1.0, size=spec.d)
    if spec.kind == "spherical":
        return Covariance(CovarianceType.SPHERICAL, spec.sigma ** 2, dim=spec.d)
    if spec.kind == "diag":
        return Covariance(CovarianceType.DIAGONAL, variances)
    q, _ = np.linalg.qr(rng.standard_normal((spec.d, spec.d)))
    return Covariance(CovarianceType.FULL, (q * variances) @ q.T)


def sample_mixture(spec: SyntheticSpec, rng: np.random.Generator) -> Tuple[Dataset, np.ndarray, GmmParams]:
    """
    Sample a ground-truth mixture and n labeled points from it

    Args:
        spec: SyntheticSpec
        rng: Seeded generator

    Returns:
        (dataset, labels, truth parameters)
    """
    means = _place_means(spec, rng)
    covariances = [_component_covariance(spec, rng) for _ in range(spec.k)]
    if spec.weights is None:
        theta = np.full(spec.k, 1.0 / spec.k)
    else:
        theta = np.asarray(spec.weights, dtype=float)
        theta = theta / theta.sum()
    kind = CovarianceKind.parse(spec.kind)
    truth = GmmParams(theta, means, covariances, kind)

    labels = rng.choice(spec.k, size=spec.n, p=theta)
    points = np.empty((spec.n, spec.d))
    for j, cov in enumerate(covariances):
        rows = np.flatnonzero(labels == j)
        if rows.size == 0:
            continue
        chol = np.linalg.cholesky(cov.dense())
        points[rows] = means[j] + rng.standard_normal((rows.size, spec.d)) @ chol.T

    logger.info(f"Sampled {spec.n} points from a {spec.k}-component {spec.kind} mixture in d={spec.d}")
    return Dataset(points), labels, truth
