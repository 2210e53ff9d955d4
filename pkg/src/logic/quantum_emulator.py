"""
Quantum Subroutine Emulator Module
Classical emulation of the error contracts of vector-state tomography,
amplitude estimation with median boosting, quadratic-form estimation,
Gaussian-exponent evaluation and responsibility estimation.

Truths are computed exactly and estimates are drawn from the outcome
statistics of the corresponding procedure, so failure events happen at
their real rates.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.stats import binom

from core.errors import DomainError
from logic.gmm import (
    LOG_2PI,
    Covariance,
    CovarianceType,
    Dataset,
    GmmParams,
    responsibilities,
    softmax,
)

logger = logging.getLogger("QemLab")

TOMOGRAPHY_CONSTANT = 36.0
SIGN_THRESHOLD = 0.4
DEFAULT_MEDIAN_RUNS = 15


@dataclass
class EmulatedEstimate:
    value: Union[float, np.ndarray]
    error_budget: float
    samples_used: int
    failed: bool = False

    def to_dict(self) -> Dict[str, Any]:
        value = self.value.tolist() if isinstance(self.value, np.ndarray) else float(self.value)
        return {
            "value": value,
            "error_budget": self.error_budget,
            "samples_used": self.samples_used,
            "failed": self.failed,
        }


# ============================================================================
# TOMOGRAPHY
# ============================================================================

def _check_unit(x: np.ndarray):
    if x.ndim != 1 or x.size < 1:
        raise DomainError("tomography input must be a vector")
    if abs(float(np.linalg.norm(x)) - 1.0) > 1e-9:
        raise DomainError("tomography input must be a unit vector")


def tomography_samples(d: int, precision: float, l2: bool, constant: float = TOMOGRAPHY_CONSTANT) -> int:
    """N = ceil(C ln(d) / δ²) for l∞, ceil(C d ln(d) / ε²) for l2 (ln taken of max(d, 2))"""
    log_d = math.log(max(d, 2))
    scale = d if l2 else 1
    return int(math.ceil(constant * scale * log_d / precision ** 2))


def _reconstruct(x: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Two measurement rounds: magnitudes from index frequencies, signs from an interference round"""
    d = x.size
    probs = x * x
    counts = rng.multinomial(n_samples, probs / probs.sum())
    magnitudes = np.sqrt(counts / n_samples)

    plus = (x + magnitudes) ** 2 / 4.0
    minus = (x - magnitudes) ** 2 / 4.0
    outcome_probs = np.concatenate([plus, minus])
    outcomes = rng.multinomial(n_samples, outcome_probs / outcome_probs.sum())
    positive = outcomes[:d] > SIGN_THRESHOLD * magnitudes ** 2 * n_samples

    estimate = np.where(positive, magnitudes, -magnitudes)
    norm = float(np.linalg.norm(estimate))
    return estimate / norm if norm > 0 else estimate


def tomography_linf(x: Any, delta: float, rng: np.random.Generator,
                    constant: float = TOMOGRAPHY_CONSTANT) -> EmulatedEstimate:
    """
    Reconstruct a unit vector with l∞ error at most delta (with high probability)

    Args:
        x: Unit d-vector
        delta: Target l∞ precision in (0, 1)
        rng: Seeded generator
        constant: Sample-count constant C

    Returns:
        EmulatedEstimate with a unit vector value and samples_used = 2N
    """
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    if not 0 < delta < 1:
        raise DomainError("tomography precision must lie in (0, 1)")
    n_samples = tomography_samples(x.size, delta, l2=False, constant=constant)
    estimate = _reconstruct(x, n_samples, rng)
    error = float(np.max(np.abs(estimate - x)))
    return EmulatedEstimate(estimate, delta, 2 * n_samples, failed=error > delta)


def tomography_l2(x: Any, eps: float, rng: np.random.Generator,
                  constant: float = TOMOGRAPHY_CONSTANT) -> EmulatedEstimate:
    """
    Reconstruct a unit vector with l2 error at most eps (with high probability)

    Args:
        x: Unit d-vector
        eps: Target l2 precision in (0, 1)
        rng: Seeded generator
        constant: Sample-count constant C

    Returns:
        EmulatedEstimate with a unit vector value and samples_used = 2N
    """
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    if not 0 < eps < 1:
        raise DomainError("tomography precision must lie in (0, 1)")
    n_samples = tomography_samples(x.size, eps, l2=True, constant=constant)
    estimate = _reconstruct(x, n_samples, rng)
    error = float(np.linalg.norm(estimate - x))
    return EmulatedEstimate(estimate, eps, 2 * n_samples, failed=error > eps)


# ============================================================================
# AMPLITUDE ESTIMATION
# ============================================================================

def _fejer(x: np.ndarray, M: int) -> np.ndarray:
    """sin²(Mπx) / (M² sin²(πx)), equal to 1 at integers"""
    denom = np.sin(np.pi * x)
    near_integer = np.abs(denom) < 1e-9
    safe = np.where(near_integer, 1.0, denom)
    values = np.sin(M * np.pi * x) ** 2 / (M * M * safe * safe)
    return np.where(near_integer, 1.0, values)


def _check_amplitude(a: float, M: int):
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"amplitude must lie in [0, 1], got {a}")
    if int(M) != M or M < 2:
        raise DomainError("amplitude estimation grid size M must be an integer >= 2")


def amplitude_outcome_distribution(a: float, M: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact outcome law of amplitude estimation on a grid of size M

    Args:
        a: True amplitude sin²(θ) in [0, 1]
        M: Grid size

    Returns:
        (estimates sin²(πy/M), probabilities) for y = 0..M-1
    """
    _check_amplitude(a, M)
    theta = math.asin(math.sqrt(a))
    grid = np.arange(M) / M
    offset = theta / math.pi
    probs = 0.5 * (_fejer(grid - offset, M) + _fejer(grid + offset, M))
    estimates = np.sin(np.pi * grid) ** 2
    return estimates, probs


def amplitude_error_bound(a: float, M: int) -> float:
    """2π sqrt(a(1-a)) / M + π² / M²"""
    return 2.0 * math.pi * math.sqrt(a * (1.0 - a)) / M + math.pi ** 2 / M ** 2


def amplitude_success_probability(a: float, M: int, bound: Optional[float] = None) -> float:
    """Exact probability that one draw lands within bound (default: the standard error bound)"""
    estimates, probs = amplitude_outcome_distribution(a, M)
    if bound is None:
        bound = amplitude_error_bound(a, M)
    hits = np.abs(estimates - a) <= bound * (1.0 + 1e-12)
    return float(probs[hits].sum())


def boosted_success_probability(p_success: float, runs: int) -> float:
    """
    Probability that a majority of `runs` independent draws succeed

    A majority of successes keeps the median inside the success interval,
    so this is a lower bound on the success probability of median_boost.
    """
    return float(binom.sf((runs - 1) // 2, runs, p_success))


def amplitude_estimate(a: float, M: int, rng: np.random.Generator) -> EmulatedEstimate:
    """
    Draw one amplitude-estimation outcome

    Args:
        a: True amplitude in [0, 1]
        M: Grid size (>= 2)
        rng: Seeded generator

    Returns:
        EmulatedEstimate; failed when the draw misses 2π sqrt(a(1-a))/M + π²/M²
    """
    estimates, probs = amplitude_outcome_distribution(a, M)
    y = int(rng.choice(M, p=probs / probs.sum()))
    bound = amplitude_error_bound(a, M)
    value = float(estimates[y])
    return EmulatedEstimate(value, bound, int(M), failed=abs(value - a) > bound)


def median_boost(estimator: Callable[[], Any], runs: int) -> float:
    """
    Median of `runs` independent invocations of a randomized estimator

    Args:
        estimator: Zero-argument callable returning a real or an EmulatedEstimate
        runs: Odd number of invocations

    Returns:
        Median value
    """
    if runs < 1 or runs % 2 == 0:
        raise DomainError("median boosting needs an odd number of runs")
    values = []
    for _ in range(runs):
        result = estimator()
        values.append(float(result.value) if isinstance(result, EmulatedEstimate) else float(result))
    if runs == 1:
        return values[0]
    return float(np.median(values))


# ============================================================================
# QUADRATIC FORMS AND GAUSSIAN EXPONENTS
# ============================================================================

def _as_covariance(sigma: Any) -> Covariance:
    if isinstance(sigma, Covariance):
        return sigma
    return Covariance.from_dense(np.atleast_2d(np.asarray(sigma, dtype=float)), CovarianceType.FULL)


def quadratic_form_estimate(v: Any, sigma: Any, inverse: bool, eps: float, rng: np.random.Generator,
                            runs: int = DEFAULT_MEDIAN_RUNS) -> EmulatedEstimate:
    """
    Estimate vᵀΣv (or vᵀΣ⁻¹v) with absolute error at most eps‖v‖²

    The exact form s is encoded as the amplitude a = c s / ‖v‖² (c = 1 for Σ,
    c = λmin(Σ) for Σ⁻¹), estimated on a grid of size M = ceil(2π / (eps c)) and
    boosted by the median of `runs` draws.

    Args:
        v: d-vector
        sigma: SPD covariance with spectral norm <= 1
        inverse: Estimate the form of Σ⁻¹ instead of Σ
        eps: Relative precision in (0, 1]
        rng: Seeded generator
        runs: Odd median-boost count

    Returns:
        EmulatedEstimate with samples_used = runs * M
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not eps > 0:
        raise DomainError("quadratic form precision must be > 0")
    eps = min(float(eps), 1.0)
    cov = _as_covariance(sigma)
    if cov.dim != v.size:
        raise DomainError("dimension mismatch")
    norm_sq = float(v @ v)
    if norm_sq == 0.0:
        return EmulatedEstimate(0.0, 0.0, 1, False)

    eigvals = cov.eigenvalues()
    if eigvals[-1] > 1.0 + 1e-12:
        raise DomainError("quadratic form estimation needs spectral norm <= 1")

    if inverse:
        truth = float(v @ cov.solve(v))
        c = float(eigvals[0])
    else:
        truth = float(v @ cov.multiply(v))
        c = 1.0

    a = min(max(c * truth / norm_sq, 0.0), 1.0)
    M = max(2, int(math.ceil(2.0 * math.pi / (eps * c))))
    estimates, probs = amplitude_outcome_distribution(a, M)
    draws = rng.choice(M, size=runs, p=probs / probs.sum())
    a_hat = float(np.median(estimates[draws]))

    value = a_hat * norm_sq / c
    budget = eps * norm_sq
    return EmulatedEstimate(value, budget, runs * M, failed=abs(value - truth) > budget)


def gaussian_exponent_estimate(v: Any, mu: Any, sigma: Any, log_det_est: float, eps1: float,
                               rng: np.random.Generator, runs: int = DEFAULT_MEDIAN_RUNS) -> EmulatedEstimate:
    """
    Estimate s = -½((v-μ)ᵀΣ⁻¹(v-μ) + d log 2π + log det Σ) within 2 eps1

    The quadratic form is split into vᵀΣ⁻¹v - 2vᵀΣ⁻¹μ + μᵀΣ⁻¹μ; the bilinear term goes
    through polarization. Each of the three terms is estimated to eps1/4 after Σ is
    rescaled to unit spectral norm. eps1 = 0 evaluates the exponent exactly.

    Args:
        v: d-vector
        mu: d-vector
        sigma: SPD covariance
        log_det_est: Estimate of log det Σ
        eps1: Target precision (>= 0)
        rng: Seeded generator
        runs: Odd median-boost count per quadratic form

    Returns:
        EmulatedEstimate
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    cov = _as_covariance(sigma)
    if v.shape != mu.shape or cov.dim != v.size:
        raise DomainError("dimension mismatch")
    if eps1 < 0:
        raise DomainError("precision eps1 must be >= 0")
    d = v.size
    const = d * LOG_2PI + log_det_est

    if eps1 == 0:
        quad = float(cov.mahalanobis((v - mu)[None, :])[0])
        return EmulatedEstimate(-0.5 * (quad + const), 0.0, 1, False)

    scale = cov.spectral_norm()
    unit_cov = Covariance.from_dense(cov.dense() / scale, cov.type)
    term_eps = eps1 / 4.0

    def form(x: np.ndarray) -> EmulatedEstimate:
        norm_sq = float(x @ x)
        if norm_sq == 0.0:
            return EmulatedEstimate(0.0, 0.0, 1, False)
        # the unscaled form is (form of Σ/scale) / scale
        relative = term_eps * scale / norm_sq
        est = quadratic_form_estimate(x, unit_cov, True, relative, rng, runs)
        return EmulatedEstimate(est.value / scale, est.error_budget / scale, est.samples_used, est.failed)

    vv = form(v)
    plus = form(v + mu)
    minus = form(v - mu)
    mm = form(mu)
    bilinear = 0.5 * (plus.value - minus.value)
    quad = vv.value - bilinear + mm.value

    truth = float(cov.mahalanobis((v - mu)[None, :])[0])
    value = -0.5 * (quad + const)
    budget = 2.0 * eps1
    failed = any(e.failed for e in (vv, plus, minus, mm)) or abs(0.5 * (quad - truth)) > budget
    samples = vv.samples_used + plus.samples_used + minus.samples_used + mm.samples_used
    return EmulatedEstimate(value, budget, samples, failed)


def responsibility_estimate(v: Any, params: GmmParams, eps1: float, rng: np.random.Generator,
                            runs: int = DEFAULT_MEDIAN_RUNS) -> EmulatedEstimate:
    """
    Estimate the responsibility vector of one sample with per-entry error eps1

    Exponents are estimated at precision eps1/sqrt(2k) with exact log-determinants,
    log θ_j is added and the softmax is applied after the noise.

    Args:
        v: d-vector
        params: Mixture parameters
        eps1: Target per-entry precision (0 -> exact responsibilities)
        rng: Seeded generator
        runs: Odd median-boost count

    Returns:
        EmulatedEstimate with a k-vector value
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    exact = responsibilities(Dataset(v[None, :]), params).r[0]
    if eps1 == 0:
        return EmulatedEstimate(exact.copy(), 0.0, 1, False)
    if eps1 < 0:
        raise DomainError("precision eps1 must be >= 0")

    precision = eps1 / math.sqrt(2.0 * params.k)
    with np.errstate(divide="ignore"):
        log_theta = np.log(params.theta)
    exponents = np.empty(params.k)
    samples = 0
    failed = False
    for j in range(params.k):
        est = gaussian_exponent_estimate(v, params.means[j], params.covariances[j],
                                         float(params.log_dets[j]), precision, rng, runs)
        exponents[j] = est.value + log_theta[j]
        samples += est.samples_used
        failed = failed or est.failed

    value = softmax(exponents)
    failed = failed or float(np.max(np.abs(value - exact))) > eps1
    return EmulatedEstimate(value, eps1, samples, failed)


# ============================================================================
# COMPOSITION OF ERRORS
# ============================================================================

def estimate_vector(c: Any, eps_tom: float, eps_norm: float, rng: np.random.Generator,
                    constant: float = TOMOGRAPHY_CONSTANT) -> EmulatedEstimate:
    """
    Recover a vector from an l2 tomography of its direction and an estimate of its norm

    Args:
        c: d-vector
        eps_tom: l2 precision of the direction
        eps_norm: Relative precision of the norm
        rng: Seeded generator
        constant: Tomography constant

    Returns:
        EmulatedEstimate with error budget ‖c‖(eps_tom + eps_norm)
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    norm = float(np.linalg.norm(c))
    if norm == 0.0:
        return EmulatedEstimate(np.zeros_like(c), 0.0, 1, False)
    direction = tomography_l2(c / norm, eps_tom, rng, constant)
    norm_est = norm * (1.0 + rng.uniform(-eps_norm, eps_norm))
    value = norm_est * direction.value
    budget = norm * (eps_tom + eps_norm)
    failed = direction.failed or float(np.linalg.norm(value - c)) > budget * (1.0 + 1e-12)
    return EmulatedEstimate(value, budget, direction.samples_used + 1, failed)


def _random_unit(d: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(d)
    return x / np.linalg.norm(x)


def compose_error_claims(trials: int, rng: np.random.Generator, dim: int = 8,
                         eps_a: float = 0.05, eps_b: float = 0.05) -> Dict[str, Any]:
    """
    Randomized checks of two error-composition inequalities

    angle: for x, y at an acute angle, ‖x/‖x‖ - y/‖y‖‖ <= sqrt(2)‖x - y‖/‖x‖.
    norm_direction: combining a norm with relative error eps_a and a unit direction with
    l2 error eps_b gives ‖c̄ - c‖ <= ‖c‖(eps_a + eps_b).

    Args:
        trials: Number of random draws per inequality
        rng: Seeded generator
        dim: Vector dimension
        eps_a: Norm error
        eps_b: Direction error

    Returns:
        Report with the maximum observed lhs/rhs ratio per inequality
    """
    max_angle_ratio = 0.0
    for _ in range(trials):
        x = rng.standard_normal(dim) * rng.uniform(0.1, 10.0)
        y = x + rng.standard_normal(dim) * rng.uniform(0.0, 2.0) * np.linalg.norm(x) / math.sqrt(dim)
        if float(x @ y) < 0:
            y = -y
        if float(x @ y) == 0.0:
            continue
        lhs = float(np.linalg.norm(x / np.linalg.norm(x) - y / np.linalg.norm(y)))
        rhs = math.sqrt(2.0) * float(np.linalg.norm(x - y)) / float(np.linalg.norm(x))
        if rhs > 0:
            max_angle_ratio = max(max_angle_ratio, lhs / rhs)

    max_norm_ratio = 0.0
    for _ in range(trials):
        c = rng.standard_normal(dim) * rng.uniform(0.1, 10.0)
        norm = float(np.linalg.norm(c))
        unit = c / norm
        # unit direction at chord distance <= eps_b from c/‖c‖
        chord = eps_b * rng.uniform(0.0, 1.0)
        phi = 2.0 * math.asin(min(chord / 2.0, 1.0))
        ortho = _random_unit(dim, rng)
        ortho -= (ortho @ unit) * unit
        ortho_norm = float(np.linalg.norm(ortho))
        ortho = ortho / ortho_norm if ortho_norm > 0 else ortho
        direction = math.cos(phi) * unit + math.sin(phi) * ortho
        norm_est = norm * (1.0 + rng.uniform(-eps_a, eps_a))
        c_bar = norm_est * direction
        bound = norm * (eps_a + eps_b)
        if bound > 0:
            max_norm_ratio = max(max_norm_ratio, float(np.linalg.norm(c_bar - c)) / bound)

    return {
        "angle": {
            "trials": trials,
            "max_ratio": max_angle_ratio,
            "bound": 1.0,
            "passed": max_angle_ratio <= 1.0 + 1e-12,
        },
        "norm_direction": {
            "trials": trials,
            "eps_a": eps_a,
            "eps_b": eps_b,
            "max_ratio": max_norm_ratio,
            "bound": 1.0,
            "passed": max_norm_ratio <= 1.0 + 1e-12,
        },
    }
