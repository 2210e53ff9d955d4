"""
Gaussian Mixture Core Module
Datasets, covariance objects, mixture parameters and the exact (noise-free)
density, responsibility and likelihood computations
"""
import hashlib
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from core.errors import ConfigError, DomainError

logger = logging.getLogger("QemLab")

LOG_2PI = math.log(2.0 * math.pi)
SIMPLEX_TOLERANCE = 1e-12


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ============================================================================
# DATASET
# ============================================================================

class Dataset:
    """An n x d matrix of samples (rows v_i) with cached row norms"""

    def __init__(self, points: Any, normalized: bool = False):
        """
        Initialize dataset

        Args:
            points: n x d array-like of finite reals (a 1-D array is read as n x 1)
            normalized: Whether the shortest row has been scaled to unit norm
        """
        array = np.array(points, dtype=float)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise DomainError("dataset must be a non-empty n x d matrix")
        if not np.all(np.isfinite(array)):
            raise DomainError("dataset contains non-finite entries")

        self.points = _readonly(array)
        self.row_norms = _readonly(np.linalg.norm(array, axis=1))
        self.normalized = normalized

        if normalized and abs(float(self.row_norms.min()) - 1.0) > 1e-9:
            raise DomainError("normalized dataset must have shortest row of norm 1")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def normalize(self) -> "Dataset":
        """
        Rescale so that the shortest row has unit norm

        Returns:
            New normalized Dataset

        Raises:
            DomainError: If some row is the zero vector
        """
        if self.normalized:
            return self
        min_norm = float(self.row_norms.min())
        if min_norm == 0.0:
            raise DomainError("zero-norm sample")
        return Dataset(self.points / min_norm, normalized=True)

    def eta(self) -> float:
        """Maximum squared row norm once the shortest row has unit norm"""
        if self.normalized:
            return float(self.row_norms.max() ** 2)
        min_norm = float(self.row_norms.min())
        if min_norm == 0.0:
            raise DomainError("zero-norm sample")
        return float((self.row_norms.max() / min_norm) ** 2)

    def variance(self) -> np.ndarray:
        """Per-dimension population variance about the data mean"""
        return np.var(self.points, axis=0)

    def take(self, rows: Union[slice, Sequence[int], np.ndarray]) -> "Dataset":
        return Dataset(self.points[rows])


# ============================================================================
# COVARIANCE KINDS AND OBJECTS
# ============================================================================

class CovarianceType(Enum):
    """Covariance parameterizations of a mixture"""
    FULL = "full"
    DIAGONAL = "diag"
    SPHERICAL = "spherical"
    TIED = "tied"
    SOFT_KMEANS = "soft_kmeans"


@dataclass(frozen=True)
class CovarianceKind:
    """Covariance type tag plus the soft k-means stiffness when relevant"""
    type: CovarianceType
    beta: Optional[float] = None

    def __post_init__(self):
        if self.type == CovarianceType.SOFT_KMEANS:
            if self.beta is None or not self.beta > 0:
                raise ConfigError("soft k-means stiffness beta must be > 0")
        elif self.beta is not None:
            raise ConfigError(f"beta only applies to soft_kmeans, not {self.type.value}")

    @classmethod
    def parse(cls, text: str) -> "CovarianceKind":
        """
        Parse a kind name such as "full", "diag" or "soft_kmeans:2.0"

        Args:
            text: Kind name, optionally followed by ":beta"

        Returns:
            CovarianceKind
        """
        name, _, beta_text = str(text).strip().lower().partition(":")
        try:
            ctype = CovarianceType(name)
        except ValueError:
            valid = ", ".join(t.value for t in CovarianceType)
            raise ConfigError(f"unknown covariance kind '{text}' (expected one of {valid})")
        if ctype == CovarianceType.SOFT_KMEANS:
            if not beta_text:
                raise ConfigError("soft_kmeans needs a stiffness, e.g. soft_kmeans:2.0")
            try:
                return cls(ctype, float(beta_text))
            except ValueError:
                raise ConfigError(f"invalid stiffness in '{text}'")
        if beta_text:
            raise ConfigError(f"unexpected parameter in covariance kind '{text}'")
        return cls(ctype)

    def label(self) -> str:
        if self.type == CovarianceType.SOFT_KMEANS:
            return f"{self.type.value}:{self.beta!r}"
        return self.type.value


FULL = CovarianceKind(CovarianceType.FULL)
DIAGONAL = CovarianceKind(CovarianceType.DIAGONAL)
SPHERICAL = CovarianceKind(CovarianceType.SPHERICAL)
TIED = CovarianceKind(CovarianceType.TIED)


class Covariance:
    """
    A symmetric positive definite covariance in the compact form of its type

    FULL and TIED keep the dense matrix plus its lower Cholesky factor,
    DIAGONAL keeps the variance vector, SPHERICAL and SOFT_KMEANS a scalar.
    Values are immutable; log_det is computed once at construction.
    """

    def __init__(self, ctype: CovarianceType, values: Any, dim: Optional[int] = None):
        self.type = ctype
        self._chol: Optional[np.ndarray] = None

        if ctype in (CovarianceType.FULL, CovarianceType.TIED):
            matrix = np.array(values, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise DomainError("covariance must be a square matrix")
            if not np.all(np.isfinite(matrix)):
                raise DomainError("covariance not positive definite")
            scale = max(1.0, float(np.abs(matrix).max()))
            if np.abs(matrix - matrix.T).max() > 1e-10 * scale:
                raise DomainError("covariance not symmetric")
            matrix = 0.5 * (matrix + matrix.T)
            try:
                chol = linalg.cholesky(matrix, lower=True)
            except linalg.LinAlgError:
                raise DomainError("covariance not positive definite")
            self.values = _readonly(matrix)
            self._chol = _readonly(chol)
            self.dim = matrix.shape[0]
            self.log_det = float(2.0 * np.sum(np.log(np.diag(chol))))
        elif ctype == CovarianceType.DIAGONAL:
            vector = np.array(values, dtype=float).reshape(-1)
            if vector.size < 1 or not np.all(np.isfinite(vector)) or np.any(vector <= 0):
                raise DomainError("covariance not positive definite")
            self.values = _readonly(vector)
            self.dim = vector.size
            self.log_det = float(np.sum(np.log(vector)))
        else:
            scalar = float(np.asarray(values, dtype=float).reshape(-1)[0])
            if dim is None or dim < 1:
                raise DomainError("spherical covariance needs its dimension")
            if not math.isfinite(scalar) or scalar <= 0:
                raise DomainError("covariance not positive definite")
            self.values = scalar
            self.dim = int(dim)
            self.log_det = float(self.dim * math.log(scalar))

        if dim is not None and self.dim != dim:
            raise DomainError("dimension mismatch")
        self._checksum = self._digest()

    # ------------------------------------------------------------------
    # construction helpers
    # ------------------------------------------------------------------

    @classmethod
    def from_dense(cls, matrix: Any, ctype: CovarianceType) -> "Covariance":
        """
        Project a dense symmetric matrix onto the given covariance type

        Args:
            matrix: d x d symmetric matrix
            ctype: Target type (DIAGONAL keeps the diagonal, SPHERICAL the mean variance)

        Returns:
            Covariance
        """
        matrix = np.asarray(matrix, dtype=float)
        d = matrix.shape[0]
        if ctype == CovarianceType.DIAGONAL:
            return cls(ctype, np.diag(matrix).copy())
        if ctype in (CovarianceType.SPHERICAL, CovarianceType.SOFT_KMEANS):
            return cls(ctype, float(np.trace(matrix)) / d, dim=d)
        return cls(ctype, matrix)

    @classmethod
    def identity(cls, d: int, ctype: CovarianceType = CovarianceType.FULL, scale: float = 1.0) -> "Covariance":
        return cls.from_dense(scale * np.eye(d), ctype)

    # ------------------------------------------------------------------
    # views
    # ------------------------------------------------------------------

    def dense(self) -> np.ndarray:
        if self.type in (CovarianceType.FULL, CovarianceType.TIED):
            return np.array(self.values)
        if self.type == CovarianceType.DIAGONAL:
            return np.diag(self.values)
        return self.values * np.eye(self.dim)

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in ascending order"""
        if self.type in (CovarianceType.FULL, CovarianceType.TIED):
            return linalg.eigh(self.values, eigvals_only=True)
        if self.type == CovarianceType.DIAGONAL:
            return np.sort(self.values)
        return np.full(self.dim, self.values)

    def spectral_norm(self) -> float:
        return float(self.eigenvalues()[-1])

    def condition_number(self) -> float:
        eigs = self.eigenvalues()
        return float(eigs[-1] / eigs[0])

    # ------------------------------------------------------------------
    # algebra
    # ------------------------------------------------------------------

    def mahalanobis(self, diffs: np.ndarray) -> np.ndarray:
        """
        Squared Mahalanobis norms of the rows of diffs, without forming the inverse

        Args:
            diffs: m x d matrix of centered vectors

        Returns:
            Length-m vector of diffᵀ Σ⁻¹ diff
        """
        diffs = np.atleast_2d(diffs)
        if diffs.shape[1] != self.dim:
            raise DomainError("dimension mismatch")
        if self._chol is not None:
            solved = linalg.solve_triangular(self._chol, diffs.T, lower=True)
            return np.sum(solved * solved, axis=0)
        if self.type == CovarianceType.DIAGONAL:
            return np.sum(diffs * diffs / self.values, axis=1)
        return np.sum(diffs * diffs, axis=1) / self.values

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Σ⁻¹ rhs by factorization"""
        rhs = np.asarray(rhs, dtype=float)
        if self._chol is not None:
            return linalg.cho_solve((self._chol, True), rhs)
        if self.type == CovarianceType.DIAGONAL:
            return rhs / (self.values if rhs.ndim == 1 else self.values[:, None])
        return rhs / self.values

    def multiply(self, rhs: np.ndarray) -> np.ndarray:
        """Σ rhs"""
        rhs = np.asarray(rhs, dtype=float)
        if self._chol is not None:
            return self.values @ rhs
        if self.type == CovarianceType.DIAGONAL:
            return rhs * (self.values if rhs.ndim == 1 else self.values[:, None])
        return rhs * self.values

    def map_spectrum(self, transform) -> "Covariance":
        """
        Apply a transform to the eigenvalues, keeping the eigenvectors

        Args:
            transform: Callable mapping an eigenvalue array to a new array of equal shape

        Returns:
            New Covariance of the same type
        """
        if self.type == CovarianceType.DIAGONAL:
            return Covariance(self.type, transform(np.array(self.values)))
        if self.type in (CovarianceType.SPHERICAL, CovarianceType.SOFT_KMEANS):
            return Covariance(self.type, float(transform(np.array([self.values]))[0]), dim=self.dim)
        eigvals, eigvecs = linalg.eigh(self.values)
        new_vals = transform(eigvals)
        matrix = (eigvecs * new_vals) @ eigvecs.T
        return Covariance(self.type, 0.5 * (matrix + matrix.T))

    def floored(self, floor: float) -> "Covariance":
        """Raise every eigenvalue below floor to floor (returns self when nothing changes)"""
        if float(self.eigenvalues()[0]) >= floor:
            return self
        return self.map_spectrum(lambda w: np.maximum(w, floor))

    def frobenius_distance(self, other: "Covariance") -> float:
        return float(np.linalg.norm(self.dense() - other.dense()))

    # ------------------------------------------------------------------
    # integrity
    # ------------------------------------------------------------------

    def _digest(self) -> str:
        payload = np.ascontiguousarray(np.asarray(self.values, dtype=float)).tobytes()
        return hashlib.sha1(payload).hexdigest()

    def check_integrity(self):
        """Guard against a stale log_det cache after an illegal in-place mutation"""
        if self._digest() != self._checksum:
            raise RuntimeError("covariance mutated after construction; log_det cache is stale")

    def to_json(self) -> Any:
        if self.type in (CovarianceType.FULL, CovarianceType.TIED):
            return self.values.tolist()
        if self.type == CovarianceType.DIAGONAL:
            return self.values.tolist()
        return float(self.values)


# ============================================================================
# MIXTURE PARAMETERS
# ============================================================================

class GmmParams:
    """Mixture model γ = (θ, μ, Σ) with cached log-determinants"""

    def __init__(self, theta: Any, means: Any, covariances: Sequence[Covariance],
                 kind: CovarianceKind):
        """
        Initialize mixture parameters

        Args:
            theta: Length-k mixing weights on the simplex
            means: k x d matrix of component means
            covariances: k Covariance objects whose type matches kind
            kind: Covariance kind of the mixture
        """
        theta = np.array(theta, dtype=float).reshape(-1)
        means = np.array(means, dtype=float)
        if means.ndim == 1:
            means = means.reshape(-1, 1)
        k = theta.size
        if k < 1 or means.shape[0] != k or len(covariances) != k:
            raise DomainError("theta, means and covariances must agree on k")
        if not np.all(np.isfinite(theta)) or np.any(theta < 0):
            raise DomainError("mixing weights must be nonnegative")
        if abs(float(theta.sum()) - 1.0) > SIMPLEX_TOLERANCE:
            raise DomainError("mixing weights must sum to 1")
        if not np.all(np.isfinite(means)):
            raise DomainError("means contain non-finite entries")
        d = means.shape[1]
        for cov in covariances:
            if cov.dim != d:
                raise DomainError("dimension mismatch")
            if cov.type != kind.type:
                raise DomainError(f"covariance type {cov.type.value} does not match kind {kind.label()}")

        self.theta = _readonly(theta)
        self.means = _readonly(means)
        self.covariances: List[Covariance] = list(covariances)
        self.kind = kind
        self.log_dets = _readonly(np.array([cov.log_det for cov in self.covariances]))

    @property
    def k(self) -> int:
        return self.theta.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def replace(self, theta: Any = None, means: Any = None,
                covariances: Optional[Sequence[Covariance]] = None) -> "GmmParams":
        return GmmParams(
            self.theta if theta is None else theta,
            self.means if means is None else means,
            self.covariances if covariances is None else covariances,
            self.kind,
        )

    def check_integrity(self):
        for cov, cached in zip(self.covariances, self.log_dets):
            cov.check_integrity()
            if cov.log_det != cached:
                raise RuntimeError("log_det cache is stale")

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the versioned model JSON layout"""
        return {
            "schema": 1,
            "kind": self.kind.label(),
            "k": self.k,
            "d": self.d,
            "theta": self.theta.tolist(),
            "means": self.means.tolist(),
            "covariances": [cov.to_json() for cov in self.covariances],
            "log_dets": self.log_dets.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "GmmParams":
        """
        Rebuild parameters from the model JSON layout

        Args:
            payload: Dictionary produced by to_dict (extra keys are ignored)

        Returns:
            GmmParams
        """
        if payload.get("schema") != 1:
            raise ConfigError(f"unsupported model schema: {payload.get('schema')!r}")
        try:
            kind = CovarianceKind.parse(payload["kind"])
            means = np.array(payload["means"], dtype=float)
            d = means.shape[1] if means.ndim == 2 else 1
            raw_covs = payload["covariances"]
            theta = payload["theta"]
        except (KeyError, TypeError, IndexError) as e:
            raise ConfigError(f"malformed model file: {e}")

        if kind.type == CovarianceType.TIED:
            shared = Covariance(kind.type, raw_covs[0])
            covariances = [shared] * len(raw_covs)
        else:
            covariances = [Covariance(kind.type, raw, dim=d) for raw in raw_covs]
        return cls(theta, means, covariances, kind)


# ============================================================================
# EXACT PROBABILITY COMPUTATIONS
# ============================================================================

def _as_covariance(sigma: Any) -> Covariance:
    if isinstance(sigma, Covariance):
        return sigma
    matrix = np.atleast_2d(np.asarray(sigma, dtype=float))
    return Covariance(CovarianceType.FULL, matrix)


def gaussian_log_pdf(v: Any, mu: Any, sigma: Any, log_det: Optional[float] = None) -> float:
    """
    Exact log-density of N(μ, Σ) at v

    Args:
        v: d-vector
        mu: d-vector
        sigma: Covariance or dense SPD matrix
        log_det: log det Σ (defaults to the cached value of sigma)

    Returns:
        -½((v-μ)ᵀΣ⁻¹(v-μ) + d log 2π + log det Σ)
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if v.shape != mu.shape:
        raise DomainError("dimension mismatch")
    cov = _as_covariance(sigma)
    cov.check_integrity()
    if cov.dim != v.size:
        raise DomainError("dimension mismatch")
    if log_det is None:
        log_det = cov.log_det
    quad = float(cov.mahalanobis((v - mu)[None, :])[0])
    return -0.5 * (quad + v.size * LOG_2PI + log_det)


def _check_shapes(data: Dataset, params: GmmParams):
    if data.d != params.d:
        raise DomainError(f"dimension mismatch: data has d={data.d}, model has d={params.d}")


def component_log_densities(data: Dataset, params: GmmParams) -> np.ndarray:
    """n x k matrix of log φ(v_i; μ_j, Σ_j)"""
    _check_shapes(data, params)
    params.check_integrity()
    out = np.empty((data.n, params.k))
    const = params.d * LOG_2PI
    for j, cov in enumerate(params.covariances):
        quad = cov.mahalanobis(data.points - params.means[j])
        out[:, j] = -0.5 * (quad + const + params.log_dets[j])
    return out


def component_log_joint(data: Dataset, params: GmmParams) -> np.ndarray:
    """n x k matrix of log θ_j + log φ(v_i; μ_j, Σ_j)"""
    with np.errstate(divide="ignore"):
        log_theta = np.log(params.theta)
    return component_log_densities(data, params) + log_theta


def softmax(x: Any) -> np.ndarray:
    """Row-wise softmax with log-sum-exp stabilization"""
    x = np.asarray(x, dtype=float)
    lse = logsumexp(x, axis=-1, keepdims=True)
    out = np.exp(x - lse)
    return out / out.sum(axis=-1, keepdims=True)


class Responsibilities:
    """Row-stochastic n x k matrix r_ij"""

    def __init__(self, r: Any):
        r = np.array(r, dtype=float)
        if r.ndim != 2:
            raise DomainError("responsibilities must be an n x k matrix")
        self.r = _readonly(r)

    @property
    def n(self) -> int:
        return self.r.shape[0]

    @property
    def k(self) -> int:
        return self.r.shape[1]

    def column_sums(self) -> np.ndarray:
        """R_j totals, i.e. nθ_j"""
        return self.r.sum(axis=0)

    def column_norms(self) -> np.ndarray:
        """Z_j = ‖R_j‖₂"""
        return np.linalg.norm(self.r, axis=0)

    @classmethod
    def hard(cls, labels: Any, k: int) -> "Responsibilities":
        labels = np.asarray(labels, dtype=int)
        r = np.zeros((labels.size, k))
        r[np.arange(labels.size), labels] = 1.0
        return cls(r)


def responsibilities_from_log_joint(log_joint: np.ndarray) -> Responsibilities:
    lse = logsumexp(log_joint, axis=1)
    if not np.all(np.isfinite(lse)):
        raise DomainError("degenerate responsibility row")
    r = np.exp(log_joint - lse[:, None])
    r /= r.sum(axis=1, keepdims=True)
    return Responsibilities(r)


def responsibilities(data: Dataset, params: GmmParams) -> Responsibilities:
    """
    Posterior component probabilities for every sample

    Args:
        data: Dataset
        params: Mixture parameters

    Returns:
        Responsibilities r_ij = θ_j φ_j(v_i) / Σ_l θ_l φ_l(v_i), computed in log space
    """
    return responsibilities_from_log_joint(component_log_joint(data, params))


def per_sample_log_likelihood(data: Dataset, params: GmmParams) -> np.ndarray:
    return logsumexp(component_log_joint(data, params), axis=1)


def log_likelihood(data: Dataset, params: GmmParams) -> float:
    """ℓ(γ;V) = Σ_i log Σ_j θ_j φ(v_i; μ_j, Σ_j)"""
    return float(np.sum(per_sample_log_likelihood(data, params)))


def mean_probability(data: Dataset, params: GmmParams) -> float:
    """E[p(v_i; γ)] = (1/n) Σ_i p(v_i; γ)"""
    return float(np.mean(np.exp(per_sample_log_likelihood(data, params))))
