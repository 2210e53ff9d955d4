"""
Cost Model Service Module
Evaluates the per-iteration runtime formulas of approximate (quantum) EM
from a ProfileReport and error targets, against the classical k·n·d² baseline
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import ConfigError, DomainError
from services.profiler import ProfileReport

logger = logging.getLogger("QemLab")

TERM_NAMES = ("t_theta", "t_mu", "t_sigma", "t_ell")
DISCLAIMER = (
    "Model units: hidden constants and polylogarithmic factors are set to 1. "
    "Terms compare scaling shapes, not wall-clock time."
)


@dataclass
class CostReport:
    t_theta: float
    t_mu: float
    t_sigma: float
    t_ell: float
    dominant_term: str
    classical_cost: Optional[float]
    crossover_n: Optional[float]
    estimator: str = "ml"
    flags: List[str] = field(default_factory=list)
    inputs_echo: Dict[str, Any] = field(default_factory=dict)
    disclaimer: str = DISCLAIMER

    @property
    def terms(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in TERM_NAMES}

    @property
    def max_term(self) -> float:
        return max(self.terms.values())

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _reduce(values: Sequence[float], reduction: str) -> float:
    if not values:
        raise DomainError("profile has no per-component values")
    if reduction == "max":
        return float(np.max(values))
    if reduction == "mean":
        return float(np.mean(values))
    raise ConfigError(f"unknown reduction '{reduction}'")


def iteration_terms(k: int, d: int, eta: float, kappa_sigma: float, mu_sigma: float,
                    kappa_v: float, mu_v: float, mu_v_prime: float, delta_theta: float,
                    delta_mu: float, eps_tau: float, kappa_v_power: int = 2) -> Dict[str, float]:
    """
    The four per-iteration terms

    T_θ = k^3.5 η^1.5 κ(Σ)μ(Σ) / δθ²
    T_μ = k d η κ(V) (μ(V) + k^3.5 η^1.5 κ(Σ)μ(Σ)) / δμ³
    T_Σ = k d² η κ(V)^p (μ(V') + η² k^3.5 κ(Σ)μ(Σ)) / δμ³   (p = 2 by default)
    T_ℓ = k^1.5 η^1.5 κ(Σ)μ(Σ) / ε_τ²
    """
    for name, value in (("delta_theta", delta_theta), ("delta_mu", delta_mu), ("eps_tau", eps_tau)):
        if not value > 0:
            raise DomainError(f"{name} must be > 0")
    model = kappa_sigma * mu_sigma
    inner = k ** 3.5 * eta ** 1.5 * model
    return {
        "t_theta": inner / delta_theta ** 2,
        "t_mu": k * d * eta * kappa_v * (mu_v + inner) / delta_mu ** 3,
        "t_sigma": k * d ** 2 * eta * kappa_v ** kappa_v_power
                   * (mu_v_prime + eta ** 2 * k ** 3.5 * model) / delta_mu ** 3,
        "t_ell": k ** 1.5 * eta ** 1.5 * model / eps_tau ** 2,
    }


def dominant_term(terms: Dict[str, float]) -> str:
    """Name of the largest term; ties go to the earliest in t_theta, t_mu, t_sigma, t_ell order"""
    best = TERM_NAMES[0]
    for name in TERM_NAMES[1:]:
        if terms[name] > terms[best]:
            best = name
    return best


def crossover_n(report: CostReport, k: Optional[int] = None, d: Optional[int] = None) -> Optional[float]:
    """
    Dataset size past which the classical k·n·d² cost exceeds the largest model term

    Returns:
        max_term / (k d²), at least 1; None when the largest term is not finite
    """
    k = report.inputs_echo["k"] if k is None else k
    d = report.inputs_echo["d"] if d is None else d
    peak = report.max_term
    if not np.isfinite(peak):
        return None
    return max(1.0, peak / (k * d * d))


def qem_iteration_cost(profile: ProfileReport, k: int, d: int, delta_theta: float, delta_mu: float,
                       eps_tau: float, n: Optional[int] = None, kappa_v_power: int = 2,
                       reduction: str = "max", thresholded_kappa: bool = True,
                       estimator: str = "ml") -> CostReport:
    """
    Evaluate one approximate-EM iteration against the classical cost

    Args:
        profile: ProfileReport of the dataset and fitted model
        k: Component count
        d: Dimension
        delta_theta: Mixing-weight tolerance
        delta_mu: Mean tolerance
        eps_tau: Stopping tolerance
        n: Dataset size for the classical cost (defaults to profile.n when set)
        kappa_v_power: Exponent of κ(V) in T_Σ (1 or 2)
        reduction: "max" or "mean" over per-component κ(Σ_j), μ(Σ_j)
        thresholded_kappa: Use the thresholded κ*(Σ_j)
        estimator: "ml" or "map" tag

    Returns:
        CostReport
    """
    if k < 1 or d < 1:
        raise DomainError("k and d must be >= 1")
    flags: List[str] = []
    kappa_values = profile.kappa_sigma_thresholded if thresholded_kappa else profile.kappa_sigma
    kappa_sigma = _reduce(kappa_values, reduction)
    mu_sigma = _reduce(profile.mu_sigma, reduction)

    mu_v_prime = profile.mu_V_prime
    if mu_v_prime is None:
        # μ ≤ ‖·‖_F ≤ sqrt(rank) ≤ d for the n x d² matrix V'
        mu_v_prime = float(d)
        flags.append("mu_V_prime_missing_used_frobenius_bound")
        logger.warning("μ(V') missing from the profile; using the Frobenius upper bound")
    elif profile.mu_V_prime_is_bound:
        flags.append("mu_V_prime_is_upper_bound")

    terms = iteration_terms(k, d, profile.eta, kappa_sigma, mu_sigma, profile.kappa_V, profile.mu_V,
                            mu_v_prime, delta_theta, delta_mu, eps_tau, kappa_v_power)
    if n is None and profile.n:
        n = profile.n
    classical = float(k * n * d * d) if n is not None else None

    report = CostReport(
        t_theta=terms["t_theta"],
        t_mu=terms["t_mu"],
        t_sigma=terms["t_sigma"],
        t_ell=terms["t_ell"],
        dominant_term=dominant_term(terms),
        classical_cost=classical,
        crossover_n=None,
        estimator=estimator,
        flags=flags,
        inputs_echo={
            "k": k,
            "d": d,
            "n": n,
            "eta": profile.eta,
            "kappa_sigma": kappa_sigma,
            "mu_sigma": mu_sigma,
            "kappa_V": profile.kappa_V,
            "mu_V": profile.mu_V,
            "mu_V_prime": mu_v_prime,
            "delta_theta": delta_theta,
            "delta_mu": delta_mu,
            "eps_tau": eps_tau,
            "kappa_v_power": kappa_v_power,
            "reduction": reduction,
            "thresholded_kappa": thresholded_kappa,
        },
    )
    report.crossover_n = crossover_n(report, k, d)
    if flags:
        logger.warning(f"Cost report flagged: {', '.join(flags)}")
    logger.info(f"Dominant term: {report.dominant_term} ({report.max_term:.4g} model units)")
    return report


def map_iteration_cost(profile: ProfileReport, k: int, d: int, delta_theta: float, delta_mu: float,
                       eps_tau: float, **kwargs) -> CostReport:
    """MAP-estimate iteration cost: the same four terms, tagged estimator=map"""
    kwargs["estimator"] = "map"
    return qem_iteration_cost(profile, k, d, delta_theta, delta_mu, eps_tau, **kwargs)


def cost_curves(report: CostReport, n_values: Sequence[float]) -> pd.DataFrame:
    """(n, classical, quantum_max_term) rows for plotting; the model term does not depend on n"""
    k = report.inputs_echo["k"]
    d = report.inputs_echo["d"]
    n_values = np.asarray(n_values, dtype=float)
    return pd.DataFrame({
        "n": n_values,
        "classical": k * n_values * d * d,
        "quantum_max_term": np.full(n_values.size, report.max_term),
    })


def default_n_grid(report: CostReport, points: int = 50) -> np.ndarray:
    """Log-spaced n values spanning two decades either side of the crossover"""
    center = report.crossover_n or 1.0
    low = max(1.0, center / 100.0)
    return np.unique(np.round(np.logspace(np.log10(low), np.log10(center * 100.0), points)))
