"""
Test cost model
Per-iteration terms, dominant term, crossover point and plotting curves
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.errors import DomainError
from services.cost_model import (
    CostReport,
    cost_curves,
    crossover_n,
    default_n_grid,
    dominant_term,
    iteration_terms,
    map_iteration_cost,
    qem_iteration_cost,
)
from services.profiler import ProfileReport


def unit_profile(k: int = 1) -> ProfileReport:
    return ProfileReport(
        kappa_V=1.0, mu_V=1.0, eta=1.0,
        kappa_sigma=[1.0] * k, kappa_sigma_thresholded=[1.0] * k, mu_sigma=[1.0] * k,
        log_abs_dets=[0.0] * k, spectral_norms=[1.0] * k,
        mu_V_prime=1.0, n=10, d=1, k=k,
    )


def regime_profile() -> ProfileReport:
    k = 16
    return ProfileReport(
        kappa_V=23.82, mu_V=2.14, eta=10.0,
        kappa_sigma=[4.21] * k, kappa_sigma_thresholded=[4.21] * k, mu_sigma=[3.82] * k,
        log_abs_dets=[10.0] * k, spectral_norms=[1.0] * k,
        mu_V_prime=None, n=5000, d=40, k=k,
    )


def test_unit_inputs():
    terms = iteration_terms(1, 1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert (terms["t_theta"], terms["t_mu"], terms["t_sigma"], terms["t_ell"]) == (1.0, 2.0, 2.0, 1.0)
    report = qem_iteration_cost(unit_profile(), 1, 1, 1.0, 1.0, 1.0)
    assert report.terms == terms
    assert report.dominant_term == "t_mu"


def test_regime_is_dominated_by_covariance_term():
    report = qem_iteration_cost(regime_profile(), 16, 40, 0.038, 0.5, 7e-3)
    assert report.dominant_term == "t_sigma"
    assert "mu_V_prime_missing_used_frobenius_bound" in report.flags
    assert report.inputs_echo["mu_V_prime"] == 40.0
    assert report.crossover_n is not None and np.isfinite(report.crossover_n)
    assert report.classical_cost == pytest.approx(16 * 5000 * 40 ** 2)


def test_halving_delta_mu_multiplies_covariance_term_by_eight():
    base = qem_iteration_cost(regime_profile(), 16, 40, 0.038, 0.5, 7e-3)
    halved = qem_iteration_cost(regime_profile(), 16, 40, 0.038, 0.25, 7e-3)
    assert halved.t_sigma == pytest.approx(8 * base.t_sigma)
    assert halved.t_mu == pytest.approx(8 * base.t_mu)
    assert halved.t_theta == pytest.approx(base.t_theta)


def test_kappa_v_power_option():
    squared = qem_iteration_cost(regime_profile(), 16, 40, 0.038, 0.5, 7e-3)
    linear = qem_iteration_cost(regime_profile(), 16, 40, 0.038, 0.5, 7e-3, kappa_v_power=1)
    assert squared.t_sigma == pytest.approx(23.82 * linear.t_sigma)


def test_mean_reduction_and_unthresholded_kappa():
    profile = regime_profile()
    profile.kappa_sigma = [2.0, 6.0] + [4.0] * 14
    profile.kappa_sigma_thresholded = [1.0] * 16
    mean = qem_iteration_cost(profile, 16, 40, 0.038, 0.5, 7e-3, reduction="mean", thresholded_kappa=False)
    assert mean.inputs_echo["kappa_sigma"] == pytest.approx(4.0)
    thresholded = qem_iteration_cost(profile, 16, 40, 0.038, 0.5, 7e-3)
    assert thresholded.inputs_echo["kappa_sigma"] == pytest.approx(1.0)


def test_upper_bound_flag():
    profile = unit_profile()
    profile.mu_V_prime_is_bound = True
    report = qem_iteration_cost(profile, 1, 1, 1.0, 1.0, 1.0)
    assert report.flags == ["mu_V_prime_is_upper_bound"]


def test_map_cost_repeats_the_terms():
    ml = qem_iteration_cost(regime_profile(), 16, 40, 0.038, 0.5, 7e-3)
    map_report = map_iteration_cost(regime_profile(), 16, 40, 0.038, 0.5, 7e-3)
    assert map_report.terms == ml.terms
    assert map_report.estimator == "map"
    unit = map_iteration_cost(unit_profile(), 1, 1, 1.0, 1.0, 1.0)
    assert (unit.t_theta, unit.t_mu, unit.t_sigma, unit.t_ell) == (1.0, 2.0, 2.0, 1.0)


def test_crossover_examples():
    zero = CostReport(0.0, 0.0, 0.0, 0.0, "t_theta", None, None, inputs_echo={"k": 2, "d": 3})
    assert crossover_n(zero) == 1.0
    k, d = 4, 5
    peak = k * d * d * 1e6
    report = CostReport(1.0, peak, 2.0, 3.0, "t_mu", None, None, inputs_echo={"k": k, "d": d})
    assert crossover_n(report) == pytest.approx(1e6)


def test_dominant_term_tie_goes_first():
    assert dominant_term({"t_theta": 5.0, "t_mu": 5.0, "t_sigma": 1.0, "t_ell": 5.0}) == "t_theta"


def test_non_positive_targets_rejected():
    with pytest.raises(DomainError):
        qem_iteration_cost(unit_profile(), 1, 1, 0.0, 1.0, 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_terms_grow_as_targets_tighten(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 9))
    d = int(rng.integers(k, 65))
    args = dict(k=k, d=d, eta=float(rng.uniform(1, 20)), kappa_sigma=float(rng.uniform(1, 10)),
                mu_sigma=float(rng.uniform(1, 10)), kappa_v=float(rng.uniform(1, 50)),
                mu_v=float(rng.uniform(1, np.sqrt(d))), mu_v_prime=float(rng.uniform(1, d)))
    delta_theta = float(rng.uniform(0.05, 1.0))
    delta_mu = float(rng.uniform(0.01, delta_theta))
    eps_tau = float(rng.uniform(delta_mu, 1.0))
    loose = iteration_terms(delta_theta=delta_theta, delta_mu=delta_mu, eps_tau=eps_tau, **args)
    tight = iteration_terms(delta_theta=delta_theta / 2, delta_mu=delta_mu / 2, eps_tau=eps_tau / 2, **args)
    for name in loose:
        assert tight[name] > loose[name] > 0


def test_cost_curves_classical_column_is_monotone():
    report = qem_iteration_cost(regime_profile(), 16, 40, 0.038, 0.5, 7e-3)
    frame = cost_curves(report, default_n_grid(report, 30))
    assert list(frame.columns) == ["n", "classical", "quantum_max_term"]
    assert frame["classical"].is_monotonic_increasing
    assert (frame["quantum_max_term"] == report.max_term).all()


def test_covariance_term_dominates_across_sweep():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        k = int(rng.integers(2, 17))
        d = int(rng.integers(k, 129))
        delta_theta = float(rng.uniform(0.01, 1.0))
        delta_mu = float(rng.uniform(0.005, delta_theta))
        terms = iteration_terms(
            k, d,
            eta=float(rng.uniform(1, 100)),
            kappa_sigma=float(rng.uniform(1, 100)),
            mu_sigma=float(rng.uniform(1, np.sqrt(d))),
            kappa_v=float(rng.uniform(1, 100)),
            mu_v=float(rng.uniform(1, np.sqrt(d))),
            mu_v_prime=float(rng.uniform(1, d)),
            delta_theta=delta_theta,
            delta_mu=delta_mu,
            eps_tau=float(rng.uniform(delta_mu, 1.0)),
        )
        assert dominant_term(terms) == "t_sigma", terms
