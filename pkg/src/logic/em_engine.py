"""
EM Engine Module
Classical expectation-maximization for Gaussian mixtures: initialization
strategies, ML and MAP M-steps per covariance kind, and the iteration loop
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import linalg

from core.errors import ConfigError, DomainError, EmptyComponentError
from logic.gmm import (
    FULL,
    Covariance,
    CovarianceKind,
    CovarianceType,
    Dataset,
    GmmParams,
    Responsibilities,
    component_log_joint,
    log_likelihood,
    per_sample_log_likelihood,
    responsibilities,
)

logger = logging.getLogger("QemLab")

EMPTY_COMPONENT_FRACTION = 1e-12


# ============================================================================
# CONFIGURATION TYPES
# ============================================================================

class InitMethod(Enum):
    RANDOM_EM = "random"
    KMEANS_PP = "kmeans_pp"
    SMALL_EM = "small_em"
    CEM = "cem"


@dataclass(frozen=True)
class InitStrategy:
    """Initialization method plus its parameters (unused ones are ignored)"""
    method: InitMethod = InitMethod.KMEANS_PP
    rounds: int = 10
    restarts: int = 5
    burn_iters: int = 5

    def __post_init__(self):
        if self.rounds < 1 or self.restarts < 1 or self.burn_iters < 1:
            raise ConfigError("init rounds, restarts and burn_iters must be >= 1")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "InitStrategy":
        try:
            method = InitMethod(payload.get("strategy", "kmeans_pp"))
        except ValueError:
            raise ConfigError(f"unknown init strategy '{payload.get('strategy')}'")
        return cls(
            method=method,
            rounds=int(payload.get("rounds", 10)),
            restarts=int(payload.get("restarts", 5)),
            burn_iters=int(payload.get("burn_iters", 5)),
        )


class Estimator(Enum):
    ML = "ml"
    MAP = "map"


class StoppingCriterion(Enum):
    AUTO = "auto"
    LOG_LIKELIHOOD = "log_likelihood"
    MEAN_PROBABILITY = "mean_probability"


@dataclass
class MapPrior:
    """Dirichlet prior on θ and Normal-inverse-Wishart prior on (μ_j, Σ_j)"""
    alpha: np.ndarray
    m0: np.ndarray
    iota0: float
    nu0: float
    s0: np.ndarray
    check_invariants: bool = True

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.m0 = np.atleast_1d(np.asarray(self.m0, dtype=float))
        self.s0 = np.atleast_2d(np.asarray(self.s0, dtype=float))
        d = self.m0.size
        if self.s0.shape != (d, d):
            raise ConfigError("prior S0 must be d x d")
        if not self.check_invariants:
            return
        if np.any(self.alpha <= 0):
            raise ConfigError("Dirichlet parameters alpha must be > 0")
        if not self.iota0 > 0:
            raise ConfigError("prior iota0 must be > 0")
        if not self.nu0 > d + 1:
            raise ConfigError(f"prior nu0 must be > d + 1 = {d + 1}")
        try:
            linalg.cholesky(self.s0, lower=True)
        except linalg.LinAlgError:
            raise ConfigError("prior S0 must be positive definite")

    @classmethod
    def default_for(cls, data: Dataset, k: int, reg_floor: float, alpha: Any = 2.0,
                    iota0: float = 1.0, nu0: Optional[float] = None, m0: Any = None,
                    s0: Any = None) -> "MapPrior":
        """
        Data-driven prior: m0 = data mean, nu0 = d + 2, S0 pooled per-dimension variance

        Args:
            data: Dataset
            k: Component count
            reg_floor: Floor for zero-variance dimensions of S0
            alpha: Scalar (broadcast to k) or length-k Dirichlet parameters

        Returns:
            MapPrior
        """
        alpha_vec = np.full(k, float(alpha)) if np.isscalar(alpha) else np.asarray(alpha, dtype=float)
        if alpha_vec.size != k:
            raise ConfigError(f"prior alpha must have {k} entries")
        return cls(
            alpha=alpha_vec,
            m0=data.points.mean(axis=0) if m0 is None else m0,
            iota0=float(iota0),
            nu0=float(data.d + 2 if nu0 is None else nu0),
            s0=pooled_prior_s0(data, k, reg_floor) if s0 is None else s0,
        )


@dataclass
class FitConfig:
    """Settings of one EM fit"""
    k: int
    kind: CovarianceKind = FULL
    eps_tau: float = 7e-3
    max_iters: int = 70
    reg_floor: Optional[float] = None  # None -> resolved from the data
    init: InitStrategy = field(default_factory=InitStrategy)
    seed: int = 0
    estimator: Estimator = Estimator.ML
    prior: Optional[MapPrior] = None
    criterion: StoppingCriterion = StoppingCriterion.AUTO
    n_init: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not self.eps_tau > 0:
            raise ConfigError("eps_tau must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.reg_floor is not None and not self.reg_floor > 0:
            raise ConfigError("reg_floor must be > 0")
        if self.n_init < 1:
            raise ConfigError("n_init must be >= 1")

    def resolve_reg_floor(self, data: Dataset) -> float:
        """Configured floor, or 1e-6 times the mean per-dimension data variance"""
        if self.reg_floor is not None:
            return self.reg_floor
        mean_var = float(np.mean(data.variance()))
        return 1e-6 * mean_var if mean_var > 0 else 1e-6


@dataclass
class IterationRecord:
    iteration: int
    log_likelihood: float
    mean_probability: float
    wall_ms: float
    non_monotone: bool = False


@dataclass
class FitResult:
    params: GmmParams
    iterations: int
    converged: bool
    trace: List[IterationRecord] = field(default_factory=list)
    seed: int = 0
    criterion: StoppingCriterion = StoppingCriterion.LOG_LIKELIHOOD

    @property
    def final_log_likelihood(self) -> float:
        return self.trace[-1].log_likelihood if self.trace else float("-inf")

    def to_dict(self) -> Dict[str, Any]:
        payload = self.params.to_dict()
        payload["iterations"] = self.iterations
        payload["converged"] = self.converged
        return payload


# ============================================================================
# M-STEP BUILDING BLOCKS
# ============================================================================

def _floored_dense(matrix: np.ndarray, floor: float) -> np.ndarray:
    matrix = 0.5 * (matrix + matrix.T)
    eigvals, eigvecs = linalg.eigh(matrix)
    if eigvals[0] >= floor:
        return matrix
    rebuilt = (eigvecs * np.maximum(eigvals, floor)) @ eigvecs.T
    return 0.5 * (rebuilt + rebuilt.T)


def _build_covariances(scatters: List[np.ndarray], weights: np.ndarray, kind: CovarianceKind,
                       reg_floor: float, d: int) -> List[Covariance]:
    """
    Turn per-component normalized scatter matrices into kind-constrained, floored covariances

    Args:
        scatters: k dense d x d covariance estimates
        weights: Length-k responsibility totals (used for tied pooling)
        kind: Covariance kind
        reg_floor: Eigenvalue floor
        d: Dimension
    """
    ctype = kind.type
    if ctype == CovarianceType.SOFT_KMEANS:
        return [Covariance(ctype, 1.0 / (2.0 * kind.beta), dim=d) for _ in scatters]
    if ctype == CovarianceType.TIED:
        pooled = sum(w * s for w, s in zip(weights, scatters)) / float(np.sum(weights))
        shared = Covariance(ctype, _floored_dense(pooled, reg_floor))
        return [shared] * len(scatters)
    if ctype == CovarianceType.DIAGONAL:
        return [Covariance(ctype, np.maximum(np.diag(s), reg_floor)) for s in scatters]
    if ctype == CovarianceType.SPHERICAL:
        return [Covariance(ctype, max(float(np.trace(s)) / d, reg_floor), dim=d) for s in scatters]
    return [Covariance(ctype, _floored_dense(s, reg_floor)) for s in scatters]


def weighted_scatter(points: np.ndarray, weights: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Unnormalized scatter Σ_i w_i (v_i - c)(v_i - c)ᵀ"""
    diff = points - center
    return (weights[:, None] * diff).T @ diff


def covariance_centered(points: np.ndarray, weights: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Σ_j as the responsibility-weighted scatter about μ_j"""
    return weighted_scatter(points, weights, mean) / float(np.sum(weights))


def covariance_raw_moment(points: np.ndarray, weights: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Σ_j = (Σ_i r_ij v_i v_iᵀ) / (nθ_j) - μ_j μ_jᵀ"""
    second = (weights[:, None] * points).T @ points / float(np.sum(weights))
    return second - np.outer(mean, mean)


def means_from_responsibility_columns(points: np.ndarray, resp: Responsibilities) -> np.ndarray:
    """μ_j = VᵀR_j / (nθ_j), one row per component"""
    n = points.shape[0]
    theta = resp.column_sums() / n
    return (points.T @ resp.r / (n * theta)).T


def _check_resp(data: Dataset, resp: Responsibilities):
    if resp.n != data.n:
        raise DomainError("responsibilities do not match the dataset")


def m_step_ml(data: Dataset, resp: Responsibilities, kind: CovarianceKind,
              reg_floor: float) -> GmmParams:
    """
    Maximum-likelihood M-step

    Args:
        data: Dataset
        resp: Responsibilities from the E-step
        kind: Covariance kind constraint
        reg_floor: Covariance eigenvalue floor

    Returns:
        New GmmParams (means first, then covariances about the new means)

    Raises:
        EmptyComponentError: If some column total is below 1e-12 n
    """
    _check_resp(data, resp)
    X = data.points
    n, d = X.shape
    totals = resp.column_sums()
    for j, total in enumerate(totals):
        if total < EMPTY_COMPONENT_FRACTION * n:
            raise EmptyComponentError(j)

    theta = totals / totals.sum()
    means = (resp.r.T @ X) / totals[:, None]
    scatters = [covariance_centered(X, resp.r[:, j], means[j]) for j in range(resp.k)]
    covariances = _build_covariances(scatters, totals, kind, reg_floor, d)
    return GmmParams(theta, means, covariances, kind)


def m_step_map(data: Dataset, resp: Responsibilities, prior: MapPrior, reg_floor: float,
               kind: CovarianceKind = FULL) -> GmmParams:
    """
    Maximum-a-posteriori M-step under the Dirichlet / Normal-inverse-Wishart prior

    Args:
        data: Dataset
        resp: Responsibilities from the E-step
        prior: MapPrior (alpha, m0, iota0, nu0, S0)
        reg_floor: Covariance eigenvalue floor
        kind: Covariance kind constraint applied to the posterior modes

    Returns:
        New GmmParams
    """
    _check_resp(data, resp)
    X = data.points
    n, d = X.shape
    k = resp.k
    if prior.alpha.size != k or prior.m0.size != d:
        raise DomainError("prior dimension mismatch")

    totals = resp.column_sums()
    denom = n + float(prior.alpha.sum()) - k
    theta = (totals + prior.alpha - 1.0) / denom if denom > 0 else np.full(k, -1.0)
    if np.any(theta < 0):
        raise DomainError("invalid Dirichlet prior for empty component")
    theta = theta / theta.sum()

    means = np.empty((k, d))
    scatters = []
    for j in range(k):
        r_j = float(totals[j])
        if r_j > 0:
            xbar = resp.r[:, j] @ X / r_j
            scatter = weighted_scatter(X, resp.r[:, j], xbar)
            means[j] = (r_j * xbar + prior.iota0 * prior.m0) / (r_j + prior.iota0)
        else:
            xbar = prior.m0
            scatter = np.zeros((d, d))
            means[j] = prior.m0
        dev = xbar - prior.m0
        shrink = prior.iota0 * r_j / (prior.iota0 + r_j)
        numerator = prior.s0 + scatter + shrink * np.outer(dev, dev)
        scatters.append(numerator / (prior.nu0 + r_j + d + 2))

    covariances = _build_covariances(scatters, totals, kind, reg_floor, d)
    return GmmParams(theta, means, covariances, kind)


def pooled_prior_s0(data: Dataset, k: int, reg_floor: float = 1e-6) -> np.ndarray:
    """
    Pooled prior scale S0 = k^(-1/d) Diag(s_1², ..., s_d²)

    Args:
        data: Dataset with n >= 2
        k: Component count
        reg_floor: Floor for zero-variance dimensions

    Returns:
        d x d diagonal SPD matrix
    """
    if data.n < 2:
        raise DomainError("pooled prior needs n >= 2")
    variances = np.maximum(data.variance(), reg_floor)
    return np.diag(variances) / (k ** (1.0 / data.d))


# ============================================================================
# INITIALIZATION
# ============================================================================

def _global_params(data: Dataset, means: np.ndarray, kind: CovarianceKind, reg_floor: float) -> GmmParams:
    k = means.shape[0]
    X = data.points
    global_cov = np.cov(X.T, bias=True).reshape(data.d, data.d)
    covariances = _build_covariances([global_cov] * k, np.ones(k), kind, reg_floor, data.d)
    return GmmParams(np.full(k, 1.0 / k), means, covariances, kind)


def _squared_distances(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _reseed_empty(X: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int) -> np.ndarray:
    """Move the farthest point of a non-singleton cluster into every empty cluster"""
    labels = labels.copy()
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return labels
        j = int(empty[0])
        dist = ((X - centers[labels]) ** 2).sum(axis=1)
        dist[counts[labels] < 2] = -1.0
        i = int(np.argmax(dist))
        labels[i] = j
        centers[j] = X[i]


def _kmeans_pp_seeds(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(np.argmax(d2))
        chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _lloyd(X: np.ndarray, centers: np.ndarray, rounds: int) -> np.ndarray:
    k = centers.shape[0]
    labels = np.argmin(_squared_distances(X, centers), axis=1)
    labels = _reseed_empty(X, labels, centers, k)
    for _ in range(rounds):
        for j in range(k):
            centers[j] = X[labels == j].mean(axis=0)
        new_labels = _reseed_empty(X, np.argmin(_squared_distances(X, centers), axis=1), centers, k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def _random_em(data: Dataset, cfg: FitConfig, rng: np.random.Generator, reg_floor: float) -> GmmParams:
    idx = rng.choice(data.n, size=cfg.k, replace=False)
    return _global_params(data, data.points[idx].copy(), cfg.kind, reg_floor)


def initialize(data: Dataset, cfg: FitConfig, rng: np.random.Generator) -> GmmParams:
    """
    Build starting parameters with the configured strategy

    Args:
        data: Dataset
        cfg: FitConfig (k, kind, init, reg_floor)
        rng: Seeded generator owned by the caller

    Returns:
        Initial GmmParams

    Raises:
        DomainError: If k > n
    """
    if cfg.k > data.n:
        raise DomainError("k > n")
    reg_floor = cfg.resolve_reg_floor(data)
    method = cfg.init.method
    X = data.points

    if method == InitMethod.RANDOM_EM:
        return _random_em(data, cfg, rng, reg_floor)

    if method == InitMethod.KMEANS_PP:
        centers = _kmeans_pp_seeds(X, cfg.k, rng)
        labels = _lloyd(X, centers, cfg.init.rounds)
        return m_step_ml(data, Responsibilities.hard(labels, cfg.k), cfg.kind, reg_floor)

    if method == InitMethod.SMALL_EM:
        best, best_ll = None, float("-inf")
        for restart in range(cfg.init.restarts):
            params = _random_em(data, cfg, rng, reg_floor)
            try:
                for _ in range(cfg.init.burn_iters):
                    params = m_step_ml(data, e_step(data, params), cfg.kind, reg_floor)
            except EmptyComponentError as e:
                logger.debug(f"small-EM restart {restart} discarded: {e}")
                continue
            ll = log_likelihood(data, params)
            if ll > best_ll:
                best, best_ll = params, ll
        if best is None:
            raise DomainError("every small-EM restart produced an empty component")
        return best

    # CEM: one E-step, hard classification, one M-step
    params = _random_em(data, cfg, rng, reg_floor)
    labels = predict_labels(data, params)
    labels = _reseed_empty(X, labels, params.means.copy(), cfg.k)
    return m_step_ml(data, Responsibilities.hard(labels, cfg.k), cfg.kind, reg_floor)


# ============================================================================
# ITERATION LOOP
# ============================================================================

def e_step(data: Dataset, params: GmmParams) -> Responsibilities:
    return responsibilities(data, params)


def _resolve_criterion(cfg: FitConfig, noise) -> StoppingCriterion:
    if cfg.criterion != StoppingCriterion.AUTO:
        return cfg.criterion
    if noise is not None and noise.is_noisy:
        return StoppingCriterion.MEAN_PROBABILITY
    return StoppingCriterion.LOG_LIKELIHOOD


def _fit_once(data: Dataset, cfg: FitConfig, seed: int, noise) -> FitResult:
    rng = np.random.default_rng(seed)
    reg_floor = cfg.resolve_reg_floor(data)
    prior = cfg.prior
    if cfg.estimator == Estimator.MAP and prior is None:
        prior = MapPrior.default_for(data, cfg.k, reg_floor)
    criterion = _resolve_criterion(cfg, noise)

    params = initialize(data, cfg, rng)
    trace: List[IterationRecord] = []
    previous_stat: Optional[float] = None
    converged = False

    for iteration in range(1, cfg.max_iters + 1):
        started = time.perf_counter()
        resp = e_step(data, params)
        if cfg.estimator == Estimator.MAP:
            params = m_step_map(data, resp, prior, reg_floor, cfg.kind)
        else:
            params = m_step_ml(data, resp, cfg.kind, reg_floor)
        if noise is not None:
            params = noise.apply(params)

        per_sample = per_sample_log_likelihood(data, params)
        ll = float(np.sum(per_sample))
        mp = float(np.mean(np.exp(per_sample)))
        wall_ms = (time.perf_counter() - started) * 1000.0

        non_monotone = bool(trace) and ll < trace[-1].log_likelihood - 1e-9 * abs(trace[-1].log_likelihood)
        if non_monotone and (noise is None or not noise.is_noisy) and cfg.estimator == Estimator.ML:
            logger.warning(f"Log-likelihood decreased at iteration {iteration}: "
                           f"{trace[-1].log_likelihood:.10g} -> {ll:.10g}")
        trace.append(IterationRecord(iteration, ll, mp, wall_ms, non_monotone))
        logger.debug(f"iter {iteration}: log_likelihood={ll:.10g} mean_probability={mp:.6g}")

        stat = ll / data.n if criterion == StoppingCriterion.LOG_LIKELIHOOD else mp
        if previous_stat is not None and abs(stat - previous_stat) < cfg.eps_tau:
            converged = True
            break
        previous_stat = stat

    return FitResult(params=params, iterations=len(trace), converged=converged, trace=trace, seed=seed,
                     criterion=criterion)


def fit(data: Dataset, cfg: FitConfig, noise=None) -> FitResult:
    """
    Run EM until the stopping criterion fires or max_iters is reached

    Args:
        data: Dataset
        cfg: FitConfig
        noise: Optional NoiseChannel applied to the parameters after every M-step

    Returns:
        FitResult of the best of cfg.n_init runs (seeds seed, seed+1, ...) by final log-likelihood
    """
    if cfg.k > data.n:
        raise DomainError("k > n")

    best: Optional[FitResult] = None
    for attempt in range(cfg.n_init):
        seed = cfg.seed + attempt
        if noise is not None and cfg.n_init > 1:
            noise.reseed(noise.base_seed + attempt)
        result = _fit_once(data, cfg, seed, noise)
        logger.debug(f"fit attempt {attempt} (seed {seed}): {result.iterations} iterations, "
                     f"log_likelihood={result.final_log_likelihood:.10g}")
        if best is None or result.final_log_likelihood > best.final_log_likelihood:
            best = result

    status = f"converged on {best.criterion.value}" if best.converged else "stopped at max_iters"
    logger.info(f"EM {status} after {best.iterations} iterations "
                f"(log_likelihood={best.final_log_likelihood:.10g})")
    return best


def predict_labels(data: Dataset, params: GmmParams) -> np.ndarray:
    """Hard clustering y_i = argmax_j r_ij; ties go to the lowest index"""
    return np.argmax(component_log_joint(data, params), axis=1)
