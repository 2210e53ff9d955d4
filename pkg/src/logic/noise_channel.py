"""
Noise Channel Module
Bounded truncated-Gaussian perturbation of mixture parameters plus spectral
thresholding; applied after every M-step it turns classical EM into an
approximate (noisy-estimate) EM run
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import truncnorm

from core.errors import ConfigError, DomainError
from logic.gmm import Covariance, CovarianceType, GmmParams

logger = logging.getLogger("QemLab")

BOUND_SLACK = 1e-9


@dataclass
class NoiseSpec:
    """Perturbation tolerances and spectral thresholds"""
    delta_theta: float = 0.0
    delta_mu: float = 0.0
    sigma_floor: float = 0.07
    kappa_cap: Optional[float] = None
    trunc_sigma: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.delta_theta is None:
            self.delta_theta = 0.0
        if self.delta_mu is None:
            self.delta_mu = 0.0
        if self.delta_theta < 0 or self.delta_mu < 0:
            raise ConfigError("noise tolerances must be >= 0")
        if not self.sigma_floor > 0:
            raise ConfigError("sigma_floor must be > 0")
        if self.kappa_cap is not None and not self.kappa_cap > 1:
            raise ConfigError("kappa_cap must be > 1")
        if not self.trunc_sigma > 0:
            raise ConfigError("trunc_sigma must be > 0")

    @property
    def is_noisy(self) -> bool:
        return self.delta_theta > 0 or self.delta_mu > 0

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "NoiseSpec":
        unknown = set(payload) - {"delta_theta", "delta_mu", "sigma_floor", "kappa_cap", "trunc_sigma", "seed"}
        if unknown:
            raise ConfigError(f"unknown noise keys: {', '.join(sorted(unknown))}")
        return cls(**{k: v for k, v in payload.items()})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ============================================================================
# PRIMITIVES
# ============================================================================

def _truncated_noise(shape: Tuple[int, ...], half_width: float, scale: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Zero-centered normal(0, scale) draws truncated to [-half_width, half_width]"""
    bound = half_width / scale
    draws = truncnorm.rvs(-bound, bound, loc=0.0, scale=scale, size=shape, random_state=rng)
    return np.clip(np.asarray(draws, dtype=float).reshape(shape), -half_width, half_width)


def spectral_window(cov: Covariance, spec: NoiseSpec) -> Tuple[float, float]:
    """
    Eigenvalue window [lo, hi] enforced by thresholding

    lo = max(sigma_floor, λmax / kappa_cap); hi = lo * kappa_cap (unbounded without a cap)
    """
    lam_max = float(cov.eigenvalues()[-1])
    if spec.kappa_cap is None:
        return spec.sigma_floor, math.inf
    lo = max(spec.sigma_floor, lam_max / spec.kappa_cap)
    return lo, lo * spec.kappa_cap


def threshold_covariance(cov: Covariance, spec: NoiseSpec) -> Covariance:
    """
    Floor eigenvalues at sigma_floor and cap the condition number at kappa_cap

    Returns the same object when every eigenvalue already lies in the window.
    """
    if cov.type == CovarianceType.SOFT_KMEANS:
        return cov
    lo, hi = spectral_window(cov, spec)
    eigvals = cov.eigenvalues()
    if eigvals[0] >= lo and eigvals[-1] <= hi:
        return cov
    return cov.map_spectrum(lambda w: np.clip(w, lo, hi))


def threshold_params(params: GmmParams, spec: NoiseSpec) -> GmmParams:
    covariances = _map_shared(params.covariances, lambda cov: threshold_covariance(cov, spec))
    if all(a is b for a, b in zip(covariances, params.covariances)):
        return params
    return params.replace(covariances=covariances)


def _map_shared(covariances: Sequence[Covariance], transform) -> List[Covariance]:
    """Apply transform once per distinct object so tied covariances stay shared"""
    done: Dict[int, Covariance] = {}
    out = []
    for cov in covariances:
        if id(cov) not in done:
            done[id(cov)] = transform(cov)
        out.append(done[id(cov)])
    return out


# ============================================================================
# PERTURBATIONS
# ============================================================================

def perturb_theta_raw(theta: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Perturbed mixing weights before renormalization (clamped to >= 0)

    Each coordinate moves by at most delta_theta/sqrt(k), so the l2 error is at most delta_theta.
    """
    theta = np.asarray(theta, dtype=float)
    if spec.delta_theta == 0:
        return theta.copy()
    half_width = spec.delta_theta / math.sqrt(theta.size)
    drawn = theta + _truncated_noise(theta.shape, half_width, spec.trunc_sigma, rng)
    return np.maximum(drawn, 0.0)


def _renormalize(raw: np.ndarray) -> np.ndarray:
    total = float(raw.sum())
    if total <= 0:
        raise DomainError("noise destroys simplex")
    return raw / total


def perturb_theta(theta: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Perturb mixing weights within delta_theta and project back onto the simplex

    Args:
        theta: Simplex k-vector
        spec: NoiseSpec
        rng: Seeded generator

    Returns:
        Simplex k-vector
    """
    if spec.delta_theta == 0:
        return np.array(theta, dtype=float)
    return _renormalize(perturb_theta_raw(theta, spec, rng))


def perturb_means(means: np.ndarray, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Perturb each mean coordinate within delta_mu/sqrt(d)

    Args:
        means: k x d matrix
        spec: NoiseSpec
        rng: Seeded generator

    Returns:
        k x d matrix with every row within delta_mu (l2) of the input row
    """
    means = np.asarray(means, dtype=float)
    if spec.delta_mu == 0:
        return means.copy()
    half_width = spec.delta_mu / math.sqrt(means.shape[1])
    return means + _truncated_noise(means.shape, half_width, spec.trunc_sigma, rng)


def _perturb_one(cov: Covariance, eta: float, spec: NoiseSpec, rng: np.random.Generator) -> Covariance:
    thresholded = threshold_covariance(cov, spec)
    if spec.delta_mu == 0 or cov.type == CovarianceType.SOFT_KMEANS:
        return thresholded
    lo, hi = spectral_window(cov, spec)
    half_width = spec.delta_mu * math.sqrt(eta) / math.sqrt(cov.dim)

    def noisy(eigvals: np.ndarray) -> np.ndarray:
        return np.clip(eigvals + _truncated_noise(eigvals.shape, half_width, spec.trunc_sigma, rng), lo, hi)

    return thresholded.map_spectrum(noisy)


def perturb_covariances(covariances: Sequence[Covariance], eta: float, spec: NoiseSpec,
                        rng: np.random.Generator) -> List[Covariance]:
    """
    Threshold each covariance, then perturb its eigenvalues within delta_mu*sqrt(eta)/sqrt(d)

    Diagonal covariances are perturbed entrywise, spherical ones through their scalar,
    full and tied ones in their eigenbasis. Soft k-means covariances are fixed and left
    untouched. Results are clamped back into the thresholded spectral window, so the
    Frobenius distance to the thresholded input stays within delta_mu*sqrt(eta).

    Args:
        covariances: k Covariance objects
        eta: Dataset η
        spec: NoiseSpec
        rng: Seeded generator

    Returns:
        k Covariance objects
    """
    return _map_shared(covariances, lambda cov: _perturb_one(cov, eta, spec, rng))


# ============================================================================
# CHANNEL
# ============================================================================

@dataclass
class BoundsReport:
    theta_distance: float
    raw_theta_distance: Optional[float]
    max_mean_distance: float
    max_covariance_distance: float
    max_condition_number: float
    theta_bound: float
    mean_bound: float
    covariance_bound: float
    kappa_cap: Optional[float]
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _within(value: float, bound: float) -> bool:
    return value <= bound * (1.0 + BOUND_SLACK) + 1e-12


def verify_bounds(before: GmmParams, after: GmmParams, spec: NoiseSpec, eta: float,
                  raw_theta: Optional[np.ndarray] = None) -> BoundsReport:
    """
    Check the approximate-model bounds of a perturbed parameter set

    Covariance distances are Frobenius norms measured against the thresholded input.
    When raw_theta (pre-renormalization weights) is given, the theta bound is checked
    on it; the renormalized distance is always reported.

    Args:
        before: Parameters before perturbation
        after: Perturbed parameters
        spec: NoiseSpec used
        eta: Dataset η
        raw_theta: Optional pre-renormalization weights

    Returns:
        BoundsReport
    """
    if before.k != after.k or before.d != after.d:
        raise DomainError("shape mismatch between parameter sets")

    theta_distance = float(np.linalg.norm(after.theta - before.theta))
    raw_distance = None if raw_theta is None else float(np.linalg.norm(np.asarray(raw_theta) - before.theta))
    mean_distance = float(np.max(np.linalg.norm(after.means - before.means, axis=1)))
    reference = threshold_params(before, spec)
    cov_distance = max(a.frobenius_distance(r) for a, r in zip(after.covariances, reference.covariances))
    max_kappa = max(cov.condition_number() for cov in after.covariances)

    theta_bound = spec.delta_theta
    mean_bound = spec.delta_mu
    cov_bound = spec.delta_mu * math.sqrt(eta)

    gated_theta = raw_distance if raw_distance is not None else theta_distance
    passed = (
        _within(gated_theta, theta_bound)
        and _within(mean_distance, mean_bound)
        and _within(cov_distance, cov_bound)
        and (spec.kappa_cap is None or _within(max_kappa, spec.kappa_cap))
    )
    return BoundsReport(
        theta_distance=theta_distance,
        raw_theta_distance=raw_distance,
        max_mean_distance=mean_distance,
        max_covariance_distance=cov_distance,
        max_condition_number=max_kappa,
        theta_bound=theta_bound,
        mean_bound=mean_bound,
        covariance_bound=cov_bound,
        kappa_cap=spec.kappa_cap,
        passed=passed,
    )


def apply(params: GmmParams, spec: NoiseSpec, eta: float, rng: np.random.Generator,
          record: Optional[Dict[str, Any]] = None) -> GmmParams:
    """
    Perturb θ, μ and Σ and apply spectral thresholding

    Args:
        params: Mixture parameters
        spec: NoiseSpec
        eta: Dataset η (scales the covariance tolerance)
        rng: Seeded generator owned by the caller
        record: Optional dict receiving "raw_theta" (pre-renormalization weights)

    Returns:
        Perturbed GmmParams (the input object itself when nothing changes)
    """
    if eta < 1:
        raise DomainError("eta must be >= 1")

    raw_theta = perturb_theta_raw(params.theta, spec, rng)
    theta = _renormalize(raw_theta) if spec.delta_theta > 0 else params.theta
    means = perturb_means(params.means, spec, rng) if spec.delta_mu > 0 else params.means
    covariances = perturb_covariances(params.covariances, eta, spec, rng)
    if record is not None:
        record["raw_theta"] = raw_theta

    unchanged = (
        theta is params.theta
        and means is params.means
        and all(a is b for a, b in zip(covariances, params.covariances))
    )
    if unchanged:
        return params

    result = GmmParams(theta, means, covariances, params.kind)
    if __debug__:
        report = verify_bounds(params, result, spec, eta, raw_theta)
        assert report.passed, f"noise channel exceeded its bounds: {report}"
    return result


class NoiseChannel:
    """Noise channel bound to a spec, a dataset η and its own seeded generator"""

    def __init__(self, spec: NoiseSpec, eta: float, seed: int = 0):
        """
        Initialize noise channel

        Args:
            spec: NoiseSpec (spec.seed, when set, wins over seed)
            eta: Dataset η
            seed: Fallback seed
        """
        self.spec = spec
        self.eta = float(eta)
        self.base_seed = spec.seed if spec.seed is not None else seed
        self.rng = np.random.default_rng(self.base_seed)
        self.last_raw_theta: Optional[np.ndarray] = None

    @property
    def is_noisy(self) -> bool:
        return self.spec.is_noisy

    def reseed(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def apply(self, params: GmmParams) -> GmmParams:
        record: Dict[str, Any] = {}
        result = apply(params, self.spec, self.eta, self.rng, record)
        self.last_raw_theta = record.get("raw_theta")
        return result
