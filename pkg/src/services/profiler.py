"""
Profiler Service Module
Measures the dataset and model parameters that drive the approximate-EM
runtime: condition numbers, μ(M), η and log-determinants (exact and
stochastic Chebyshev estimates)
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev
from scipy import linalg

from core.errors import ConfigError, DomainError
from logic.gmm import Covariance, Dataset, GmmParams

logger = logging.getLogger("QemLab")

DEFAULT_P = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_KAPPA_THRESHOLD = 0.07
LAMBDA_SAFETY = 1.1
SINGULAR_TOLERANCE = 1e-10


# ============================================================================
# MATRIX PARAMETERS
# ============================================================================

def _as_matrix(M: Any) -> np.ndarray:
    if isinstance(M, Covariance):
        return M.dense()
    if isinstance(M, Dataset):
        return np.array(M.points)
    return np.atleast_2d(np.asarray(M, dtype=float))


def condition_number(M: Any, threshold: Optional[float] = None) -> float:
    """
    Ratio of the largest to the smallest retained singular value

    Args:
        M: Matrix
        threshold: Keep only singular values above this (default: numerically nonzero ones)

    Returns:
        κ(M), or 1.0 when at most the top singular value survives the threshold
    """
    A = _as_matrix(M)
    s = linalg.svdvals(A)
    s_max = float(s.max()) if s.size else 0.0
    if s_max == 0.0:
        raise DomainError("condition number of the zero matrix")
    cutoff = threshold if threshold is not None else s_max * max(A.shape) * np.finfo(float).eps
    kept = s[s > cutoff]
    if kept.size == 0:
        return 1.0
    return float(kept.max() / kept.min())


def _row_power_sum(A: np.ndarray, p: float) -> float:
    """s_p(A) = max_i ‖a_i‖_p^p; p = 0 counts nonzero entries"""
    if p == 0:
        return float(np.count_nonzero(A, axis=1).max())
    return float((np.abs(A) ** p).sum(axis=1).max())


def mu_param_terms(M: Any, P: Sequence[float] = DEFAULT_P) -> Dict[str, float]:
    """
    Candidate values of μ(M) after rescaling M to unit spectral norm

    Returns:
        {"frobenius": ‖M‖_F, "p=<p>": sqrt(s_2p(M) s_2(1-p)(Mᵀ)) for each p in P}
    """
    A = _as_matrix(M)
    spectral = float(linalg.norm(A, 2))
    if spectral == 0.0:
        raise DomainError("mu of the zero matrix")
    A = A / spectral
    terms = {"frobenius": float(linalg.norm(A, "fro"))}
    for p in P:
        terms[f"p={p:g}"] = math.sqrt(_row_power_sum(A, 2 * p) * _row_power_sum(A.T, 2 * (1 - p)))
    return terms


def mu_param(M: Any, P: Sequence[float] = DEFAULT_P) -> float:
    """μ(M) = min(‖M‖_F, min_p sqrt(s_2p(M) s_2(1-p)(Mᵀ))) with ‖M‖₂ normalized to 1"""
    return min(mu_param_terms(M, P).values())


def eta(data: Dataset) -> float:
    """Maximum squared row norm once the shortest row is rescaled to unit norm"""
    return data.normalize().eta()


# ============================================================================
# LOG-DETERMINANTS
# ============================================================================

def logdet_exact(sigma: Any) -> float:
    """Sum of log-eigenvalues via a symmetric eigendecomposition"""
    A = _as_matrix(sigma)
    eigvals = linalg.eigvalsh(A)
    if eigvals[0] <= 0:
        raise DomainError("covariance not positive definite")
    return float(np.sum(np.log(eigvals)))


def _hutchinson_chebyshev(B: np.ndarray, lower: float, eps: float, delta: float,
                          rng: np.random.Generator, max_probes: int) -> float:
    """Estimate tr(log B) for B with spectrum in [lower, 1]"""
    d = B.shape[0]
    kappa = 1.0 / lower
    eps_poly = eps / (2.0 * d)
    degree = max(1, int(math.ceil(math.sqrt(kappa) * math.log(1.0 / eps_poly))))
    probes = int(math.ceil(14.0 * math.log(2.0 / delta) / eps ** 2))
    if probes > max_probes:
        logger.warning(f"Hutchinson probe count capped at {max_probes} (requested {probes})")
        probes = max_probes

    a, b = lower, 1.0
    coeffs = chebyshev.chebinterpolate(lambda t: np.log(0.5 * ((b - a) * t + (a + b))), degree)
    # T maps [a, b] onto [-1, 1]
    T = (2.0 * B - (a + b) * np.eye(d)) / (b - a)

    Z = rng.choice([-1.0, 1.0], size=(d, probes))
    w_prev = Z
    w_curr = T @ Z
    total = coeffs[0] * np.sum(Z * w_prev)
    if coeffs.size > 1:
        total += coeffs[1] * np.sum(Z * w_curr)
    for c in coeffs[2:]:
        w_next = 2.0 * (T @ w_curr) - w_prev
        total += c * np.sum(Z * w_next)
        w_prev, w_curr = w_curr, w_next
    logger.debug(f"Chebyshev log-det: degree {degree}, {probes} probes, interval [{a:.3g}, 1]")
    return float(total / probes)


def logdet_chebyshev(sigma: Any, eps: float, delta: float, rng: np.random.Generator,
                     max_probes: int = 4096) -> float:
    """
    Stochastic Chebyshev / Hutchinson estimate of log det Σ

    Σ is rescaled by c = 1.1 λmax so its spectrum lies in [λmin/c, 1/1.1]; both
    extremes come from a symmetric eigensolve.
    A coarse pass at precision 1/4 gives γ̂ ≈ |log det(Σ/c)|; the second pass runs at
    ε' = ε / (4γ̂), which turns the relative guarantee into an absolute one.

    Args:
        sigma: SPD matrix or Covariance
        eps: Absolute precision target in (0, 1)
        delta: Failure probability in (0, 1)
        rng: Seeded generator
        max_probes: Cap on Hutchinson probes per pass

    Returns:
        Estimate of log det Σ
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise DomainError("logdet eps and delta must lie in (0, 1)")
    A = _as_matrix(sigma)
    A = 0.5 * (A + A.T)
    d = A.shape[0]
    eigvals = linalg.eigvalsh(A)
    lam_min, lam_max = float(eigvals[0]), float(eigvals[-1])
    if lam_min <= 0:
        raise DomainError("covariance not positive definite")
    c = LAMBDA_SAFETY * lam_max
    if lam_min <= SINGULAR_TOLERANCE * c:
        raise DomainError("singular within tolerance")

    B = A / c
    lower = lam_min / c

    coarse = _hutchinson_chebyshev(B, lower, 0.25, delta, rng, max_probes)
    gamma = abs(coarse)
    refined_eps = 0.25 if gamma == 0 else min(0.25, eps / (4.0 * gamma))
    estimate = _hutchinson_chebyshev(B, lower, refined_eps, delta, rng, max_probes)
    return estimate + d * math.log(c)


# ============================================================================
# PROFILE REPORT
# ============================================================================

@dataclass
class ProfileReport:
    """Measured runtime parameters of a dataset and a fitted model"""
    kappa_V: float
    mu_V: float
    eta: float
    kappa_sigma: List[float]
    kappa_sigma_thresholded: List[float]
    mu_sigma: List[float]
    log_abs_dets: List[float]
    spectral_norms: List[float]
    mu_V_prime: Optional[float] = None
    mu_V_prime_is_bound: bool = False
    log_dets_exact: List[float] = field(default_factory=list)
    kappa_threshold: float = DEFAULT_KAPPA_THRESHOLD
    n: int = 0
    d: int = 0
    k: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "ProfileReport":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown profile fields: {', '.join(sorted(unknown))}")
        try:
            return cls(**payload)
        except TypeError as e:
            raise ConfigError(f"malformed profile report: {e}")

    def table_rows(self) -> List[Tuple[str, float, float]]:
        """(label, average, maximum) rows in summary-table order"""
        def stats(values: Sequence[float]) -> Tuple[float, float]:
            return float(np.mean(values)), float(np.max(values))

        rows = [
            ("‖Σ‖₂", *stats(self.spectral_norms)),
            ("|log det Σ|", *stats(self.log_abs_dets)),
            ("κ*(Σ)", *stats(self.kappa_sigma_thresholded)),
            ("μ(Σ)", *stats(self.mu_sigma)),
            ("μ(V)", self.mu_V, self.mu_V),
            ("κ(V)", self.kappa_V, self.kappa_V),
        ]
        return rows


def v_prime(data: Dataset) -> np.ndarray:
    """n x d² matrix whose i-th row is vec(v_i v_iᵀ)"""
    X = data.points
    return np.einsum("ni,nj->nij", X, X).reshape(data.n, data.d * data.d)


def v_prime_mu_bound(data: Dataset) -> float:
    """‖V'‖_F / max_i ‖v_i‖², an upper bound on μ(V') computed without forming V'"""
    norms_sq = data.row_norms ** 2
    return float(math.sqrt(np.sum(norms_sq ** 2)) / norms_sq.max())


def _profile_component(cov: Covariance, kappa_threshold: float, logdet_eps: float,
                       logdet_delta: float, seed: int, max_probes: int) -> Dict[str, float]:
    dense = cov.dense()
    rng = np.random.default_rng(seed)
    estimate = logdet_chebyshev(dense, logdet_eps, logdet_delta, rng, max_probes)
    return {
        "kappa": condition_number(dense),
        "kappa_thresholded": condition_number(dense, kappa_threshold),
        "mu": mu_param(dense),
        "spectral_norm": cov.spectral_norm(),
        "log_abs_det": abs(estimate),
        "log_det_exact": logdet_exact(dense),
    }


def profile(data: Dataset, params: GmmParams, include_v_prime: bool = False,
            v_prime_budget: int = 50000000, kappa_threshold: float = DEFAULT_KAPPA_THRESHOLD,
            logdet_eps: float = 0.5, logdet_delta: float = 0.1, seed: int = 0,
            max_probes: int = 4096, threads: int = 1) -> ProfileReport:
    """
    Assemble a ProfileReport for a dataset and a fitted mixture

    Args:
        data: Dataset
        params: Fitted mixture
        include_v_prime: Form V' explicitly (needs n d² <= v_prime_budget)
        v_prime_budget: Maximum number of V' entries
        kappa_threshold: Singular-value threshold for κ*(Σ)
        logdet_eps: Precision of the log-determinant estimates
        logdet_delta: Failure probability of the log-determinant estimates
        seed: Base seed (component j uses seed + j)
        max_probes: Hutchinson probe cap
        threads: Worker threads for the per-component fan-out

    Returns:
        ProfileReport
    """
    if data.d != params.d:
        raise DomainError(f"dimension mismatch: data has d={data.d}, model has d={params.d}")

    normalized = data.normalize()
    report_eta = normalized.eta()
    kappa_v = condition_number(data.points)
    mu_v = mu_param(data.points)

    if include_v_prime:
        entries = data.n * data.d * data.d
        if entries > v_prime_budget:
            raise DomainError(f"V' needs {entries} entries, over the budget of {v_prime_budget}")
        mu_v_prime = mu_param(v_prime(data))
        is_bound = False
    else:
        mu_v_prime = v_prime_mu_bound(data)
        is_bound = True

    def run(j: int) -> Dict[str, float]:
        return _profile_component(params.covariances[j], kappa_threshold, logdet_eps,
                                  logdet_delta, seed + j, max_probes)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        components = list(executor.map(run, range(params.k)))

    for j, comp in enumerate(components):
        drift = abs(comp["log_abs_det"] - abs(comp["log_det_exact"]))
        if drift > logdet_eps:
            logger.warning(f"component {j}: log-det estimate off by {drift:.3g} (> {logdet_eps})")

    report = ProfileReport(
        kappa_V=kappa_v,
        mu_V=mu_v,
        eta=report_eta,
        kappa_sigma=[c["kappa"] for c in components],
        kappa_sigma_thresholded=[c["kappa_thresholded"] for c in components],
        mu_sigma=[c["mu"] for c in components],
        log_abs_dets=[c["log_abs_det"] for c in components],
        spectral_norms=[c["spectral_norm"] for c in components],
        mu_V_prime=mu_v_prime,
        mu_V_prime_is_bound=is_bound,
        log_dets_exact=[c["log_det_exact"] for c in components],
        kappa_threshold=kappa_threshold,
        n=data.n,
        d=data.d,
        k=params.k,
    )
    logger.info(f"Profiled n={data.n} d={data.d} k={params.k}: κ(V)={kappa_v:.4g}, "
                f"μ(V)={mu_v:.4g}, η={report_eta:.4g}")
    return report


def kappa_stability(data: Dataset, increments: int, start_rows: Optional[int] = None) -> List[Dict[str, float]]:
    """
    κ(V) of growing prefixes of the dataset

    Args:
        data: Dataset (rows in arrival order)
        increments: Number of equal appended chunks
        start_rows: Rows in the base prefix (default: none, i.e. n/increments rows in the first prefix)

    Returns:
        One entry per prefix with rows, kappa and the relative change from the previous prefix
        (the base prefix, when given, is the first entry)
    """
    start = 0 if start_rows is None else int(start_rows)
    if increments < 1 or increments > data.n - start or start < 0:
        raise DomainError("increments must lie in [1, n - start_rows]")
    sizes = [start + int(math.ceil((data.n - start) * i / increments)) for i in range(1, increments + 1)]
    if start > 0:
        sizes.insert(0, start)
    history: List[Dict[str, float]] = []
    previous: Optional[float] = None
    for rows in sizes:
        kappa = condition_number(data.points[:rows])
        change = 0.0 if previous is None else abs(kappa - previous) / previous
        history.append({"rows": rows, "kappa": kappa, "relative_change": change})
        previous = kappa
    return history
