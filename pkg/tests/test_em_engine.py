"""
Test EM engine
M-steps (ML and MAP), initialization strategies, the iteration loop and best-of-N restarts
"""
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.errors import ConfigError, DomainError, EmptyComponentError
from logic.em_engine import (
    Estimator,
    FitConfig,
    InitMethod,
    InitStrategy,
    MapPrior,
    fit,
    initialize,
    m_step_map,
    m_step_ml,
    pooled_prior_s0,
    predict_labels,
)
from logic.gmm import DIAGONAL, FULL, SPHERICAL, TIED, Covariance, CovarianceKind, CovarianceType, Dataset, GmmParams, Responsibilities


def two_blobs(seed: int = 0, per_blob: int = 200) -> Dataset:
    rng = np.random.default_rng(seed)
    points = np.concatenate([rng.normal(0.0, 0.5, per_blob), rng.normal(10.0, 0.5, per_blob)])
    return Dataset(points.reshape(-1, 1))


def test_m_step_ml_point_clusters_hit_floor():
    data = Dataset([[0.0], [2.0]])
    params = m_step_ml(data, Responsibilities.hard([0, 1], 2), FULL, reg_floor=1e-3)
    assert_allclose(params.theta, [0.5, 0.5])
    assert_allclose(params.means[:, 0], [0.0, 2.0])
    for cov in params.covariances:
        assert_allclose(cov.dense(), [[1e-3]], rtol=1e-12)


def test_m_step_ml_uniform_responsibilities_give_global_moments():
    data = Dataset(np.random.default_rng(1).standard_normal((50, 3)))
    params = m_step_ml(data, Responsibilities(np.full((50, 2), 0.5)), FULL, reg_floor=1e-9)
    mean = data.points.mean(axis=0)
    cov = np.cov(data.points.T, bias=True)
    for j in range(2):
        assert_allclose(params.means[j], mean, atol=1e-12)
        assert_allclose(params.covariances[j].dense(), cov, atol=1e-12)


def test_m_step_ml_population_moments():
    data = Dataset([[0.0], [1.0], [2.0], [3.0]])
    params = m_step_ml(data, Responsibilities(np.ones((4, 1))), FULL, reg_floor=1e-9)
    assert params.means[0, 0] == pytest.approx(1.5)
    assert params.covariances[0].dense()[0, 0] == pytest.approx(1.25)


def test_m_step_ml_respects_kind():
    data = Dataset(np.random.default_rng(2).standard_normal((40, 3)) * [1.0, 2.0, 3.0])
    resp = Responsibilities(np.full((40, 2), 0.5))
    assert m_step_ml(data, resp, DIAGONAL, 1e-9).covariances[0].type == CovarianceType.DIAGONAL
    spherical = m_step_ml(data, resp, SPHERICAL, 1e-9).covariances[0]
    assert spherical.values == pytest.approx(float(np.mean(data.variance())))
    tied = m_step_ml(data, resp, TIED, 1e-9)
    assert tied.covariances[0] is tied.covariances[1]


def test_m_step_ml_empty_component_carries_index():
    data = Dataset([[0.0], [1.0], [2.0]])
    with pytest.raises(EmptyComponentError, match="empty component 1") as info:
        m_step_ml(data, Responsibilities.hard([0, 0, 0], 2), FULL, 1e-6)
    assert info.value.component == 1


def test_m_step_map_hand_values():
    data = Dataset([[0.0], [2.0]])
    prior = MapPrior(alpha=[2.0, 2.0], m0=[1.0], iota0=1.0, nu0=3.0, s0=[[1.0]])
    params = m_step_map(data, Responsibilities.hard([0, 1], 2), prior, reg_floor=1e-9)
    assert_allclose(params.theta, [0.5, 0.5])
    assert params.means[0, 0] == pytest.approx(0.5)
    assert params.means[1, 0] == pytest.approx(1.5)


def test_m_step_map_empty_component_falls_back_to_prior_mean():
    data = Dataset([[0.0, 1.0], [2.0, 3.0]])
    prior = MapPrior(alpha=[2.0, 2.0], m0=[7.0, -7.0], iota0=1.0, nu0=4.0, s0=np.eye(2))
    params = m_step_map(data, Responsibilities.hard([0, 0], 2), prior, reg_floor=1e-9)
    assert_array_equal(params.means[1], [7.0, -7.0])


def test_m_step_map_reproduces_ml_in_the_flat_prior_limit():
    rng = np.random.default_rng(4)
    data = Dataset(rng.standard_normal((60, 2)))
    resp = Responsibilities(rng.dirichlet([1.0, 1.0, 1.0], size=60))
    d = data.d
    prior = MapPrior(alpha=np.ones(3), m0=np.zeros(d), iota0=1e-10, nu0=-(d + 2.0),
                     s0=np.zeros((d, d)), check_invariants=False)
    ml = m_step_ml(data, resp, FULL, 1e-12)
    mp = m_step_map(data, resp, prior, 1e-12)
    assert_allclose(mp.theta, ml.theta, atol=1e-6)
    assert_allclose(mp.means, ml.means, atol=1e-6)
    for a, b in zip(mp.covariances, ml.covariances):
        assert_allclose(a.dense(), b.dense(), atol=1e-6)


def test_m_step_map_invalid_dirichlet_for_empty_component():
    data = Dataset([[0.0], [2.0]])
    prior = MapPrior(alpha=[0.5, 0.5], m0=[1.0], iota0=1.0, nu0=3.0, s0=[[1.0]])
    with pytest.raises(DomainError, match="invalid Dirichlet prior for empty component"):
        m_step_map(data, Responsibilities.hard([0, 0], 2), prior, reg_floor=1e-9)


def test_map_prior_rejects_small_nu0():
    with pytest.raises(ConfigError):
        MapPrior(alpha=[2.0], m0=[0.0, 0.0], iota0=1.0, nu0=2.5, s0=np.eye(2))


def test_pooled_prior_s0():
    assert_allclose(pooled_prior_s0(Dataset([[0.0], [2.0]]), k=1), [[1.0]])
    flat = pooled_prior_s0(Dataset([[1.0, 1.0]] * 5), k=1, reg_floor=1e-4)
    assert_allclose(flat, np.diag([1e-4, 1e-4]))
    with pytest.raises(DomainError):
        pooled_prior_s0(Dataset([[1.0]]), k=1)


def test_random_em_with_n_equal_k_uses_the_rows():
    data = Dataset([[0.0, 1.0], [4.0, 2.0], [-3.0, 5.0]])
    cfg = FitConfig(k=3, init=InitStrategy(InitMethod.RANDOM_EM))
    params = initialize(data, cfg, np.random.default_rng(9))
    rows = sorted(map(tuple, data.points))
    assert sorted(map(tuple, params.means)) == rows


def test_kmeans_pp_separates_two_blobs():
    data = Dataset([[0.0], [0.1], [10.0], [10.1]])
    cfg = FitConfig(k=2, init=InitStrategy(InitMethod.KMEANS_PP))
    for seed in range(10):
        means = np.sort(initialize(data, cfg, np.random.default_rng(seed)).means[:, 0])
        assert means[0] < 1.0 and means[1] > 9.0


def test_initialize_rejects_k_greater_than_n():
    with pytest.raises(DomainError, match="k > n"):
        initialize(Dataset([[0.0], [1.0]]), FitConfig(k=3), np.random.default_rng(0))


@pytest.mark.parametrize("method", list(InitMethod))
def test_every_init_strategy_builds_valid_params(method):
    data = two_blobs(seed=5)
    cfg = FitConfig(k=3, kind=DIAGONAL, init=InitStrategy(method, restarts=2, burn_iters=2))
    params = initialize(data, cfg, np.random.default_rng(3))
    assert params.k == 3 and params.d == 1
    assert params.theta.sum() == pytest.approx(1.0)
    assert all(cov.type == CovarianceType.DIAGONAL for cov in params.covariances)


def test_fit_recovers_two_blobs():
    data = two_blobs()
    result = fit(data, FitConfig(k=2, seed=11))
    assert result.converged
    order = np.argsort(result.params.means[:, 0])
    assert_allclose(result.params.means[order, 0], [0.0, 10.0], atol=0.15)
    assert_allclose(result.params.theta[order], [0.5, 0.5], atol=0.05)
    assert not any(r.non_monotone for r in result.trace)
    assert [r.iteration for r in result.trace] == list(range(1, result.iterations + 1))


def test_fit_is_deterministic_for_a_seed():
    data = two_blobs(seed=8)
    a = fit(data, FitConfig(k=2, seed=21, kind=DIAGONAL))
    b = fit(data, FitConfig(k=2, seed=21, kind=DIAGONAL))
    assert a.to_dict() == b.to_dict()


def test_fit_best_of_n_init_is_no_worse_than_single_run():
    rng = np.random.default_rng(12)
    data = Dataset(rng.standard_normal((150, 2)) + rng.integers(0, 3, size=(150, 1)) * 4.0)
    single = fit(data, FitConfig(k=3, seed=2, init=InitStrategy(InitMethod.RANDOM_EM)))
    best = fit(data, FitConfig(k=3, seed=2, init=InitStrategy(InitMethod.RANDOM_EM), n_init=4))
    assert best.final_log_likelihood >= single.final_log_likelihood


def test_fit_map_estimator_runs_with_default_prior():
    result = fit(two_blobs(seed=6), FitConfig(k=2, seed=1, estimator=Estimator.MAP))
    means = np.sort(result.params.means[:, 0])
    assert abs(means[0]) < 0.2 and abs(means[1] - 10.0) < 0.2


def test_soft_kmeans_kind_keeps_fixed_covariance():
    result = fit(two_blobs(seed=7), FitConfig(k=2, seed=1, kind=CovarianceKind.parse("soft_kmeans:2.0")))
    for cov in result.params.covariances:
        assert cov.values == pytest.approx(0.25)


def test_predict_labels_tie_goes_to_lowest_index():
    covs = [Covariance(CovarianceType.FULL, [[1.0]])] * 2
    params = GmmParams([0.5, 0.5], [[-1.0], [1.0]], covs, FULL)
    assert predict_labels(Dataset([[0.0]]), params)[0] == 0
    shifted = GmmParams([0.5, 0.5], [[0.0], [2.0]], covs, FULL)
    assert predict_labels(Dataset([[0.5]]), shifted)[0] == 0


def test_predict_labels_single_component():
    params = GmmParams([1.0], [[0.0]], [Covariance(CovarianceType.FULL, [[1.0]])], FULL)
    assert_array_equal(predict_labels(Dataset([[1.0], [-4.0], [9.0]]), params), [0, 0, 0])


def test_fit_config_validation():
    with pytest.raises(ConfigError):
        FitConfig(k=0)
    with pytest.raises(ConfigError):
        FitConfig(k=2, eps_tau=0.0)
    with pytest.raises(ConfigError):
        FitConfig(k=2, n_init=0)


def test_clean_fit_traces_are_monotone_on_random_datasets():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 5))
        d = int(rng.integers(1, 9))
        n = int(rng.integers(40 * k, 501))
        centers = rng.normal(0.0, 5.0, size=(k, d))
        points = centers[rng.integers(0, k, size=n)] + rng.standard_normal((n, d))
        result = fit(Dataset(points), FitConfig(k=k, seed=seed))
        assert not any(r.non_monotone for r in result.trace), seed
