"""
Test mixture invariants on generated inputs
Densities against an eigendecomposition, responsibility rows, hard labels,
single-component convergence and the alternative M-step formulas
"""
import math
import sys
from pathlib import Path

import numpy as np
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from logic.em_engine import (
    FitConfig,
    covariance_centered,
    covariance_raw_moment,
    fit,
    m_step_ml,
    means_from_responsibility_columns,
    predict_labels,
)
from logic.gmm import FULL, Covariance, CovarianceType, Dataset, GmmParams, Responsibilities, gaussian_log_pdf, responsibilities

MATRIX_DIMENSION = 4
MIN_EIGENVALUE = 0.1
MAX_EIGENVALUE = 10.0
SEEDS = st.integers(min_value=0, max_value=2 ** 32 - 1)


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q


def random_params(k: int, d: int, scale: float, rng: np.random.Generator) -> GmmParams:
    covariances = []
    for _ in range(k):
        q = random_rotation(d, rng)
        eigvals = rng.uniform(MIN_EIGENVALUE, MAX_EIGENVALUE, size=d)
        covariances.append(Covariance(CovarianceType.FULL, (q * eigvals) @ q.T))
    theta = rng.dirichlet(np.ones(k))
    means = rng.normal(0.0, scale, size=(k, d))
    return GmmParams(theta, means, covariances, FULL)


@seed(1)
@settings(max_examples=60, deadline=None)
@given(
    eigvals=arrays(np.float64, (MATRIX_DIMENSION,),
                   elements=st.floats(min_value=MIN_EIGENVALUE, max_value=MAX_EIGENVALUE)),
    v=arrays(np.float64, (MATRIX_DIMENSION,), elements=st.floats(min_value=-10.0, max_value=10.0)),
    mu=arrays(np.float64, (MATRIX_DIMENSION,), elements=st.floats(min_value=-10.0, max_value=10.0)),
    rotation_seed=SEEDS,
)
def test_log_pdf_matches_eigendecomposition(eigvals, v, mu, rotation_seed):
    q = random_rotation(MATRIX_DIMENSION, np.random.default_rng(rotation_seed))
    sigma = (q * eigvals) @ q.T
    sigma = 0.5 * (sigma + sigma.T)

    w = q.T @ (v - mu)
    expected = -0.5 * (np.sum(w * w / eigvals) + MATRIX_DIMENSION * math.log(2 * math.pi)
                       + np.sum(np.log(eigvals)))
    assert_allclose(gaussian_log_pdf(v, mu, sigma), expected, rtol=1e-9, atol=1e-9)


@seed(2)
@settings(max_examples=60, deadline=None)
@given(
    rng_seed=SEEDS,
    k=st.integers(min_value=1, max_value=5),
    d=st.integers(min_value=1, max_value=4),
    scale=st.floats(min_value=0.1, max_value=1e3),
)
def test_responsibility_rows_are_distributions(rng_seed, k, d, scale):
    rng = np.random.default_rng(rng_seed)
    params = random_params(k, d, scale, rng)
    data = Dataset(rng.normal(0.0, 2.0 * scale, size=(20, d)))

    r = responsibilities(data, params).r
    assert np.all(r >= 0.0) and np.all(r <= 1.0)
    assert_allclose(r.sum(axis=1), 1.0, atol=1e-12)


@seed(3)
@settings(max_examples=60, deadline=None)
@given(
    rng_seed=SEEDS,
    k=st.integers(min_value=1, max_value=5),
    d=st.integers(min_value=1, max_value=4),
)
def test_hard_labels_take_the_largest_responsibility(rng_seed, k, d):
    rng = np.random.default_rng(rng_seed)
    params = random_params(k, d, 3.0, rng)
    data = Dataset(rng.normal(0.0, 6.0, size=(25, d)))

    labels = predict_labels(data, params)
    r = responsibilities(data, params).r
    assert labels.shape == (25,)
    assert np.all(r[np.arange(25), labels] >= r.max(axis=1) - 1e-12)


@seed(4)
@settings(max_examples=30, deadline=None)
@given(
    rng_seed=SEEDS,
    d=st.integers(min_value=1, max_value=4),
    n=st.integers(min_value=5, max_value=60),
)
def test_single_component_converges_in_two_iterations(rng_seed, d, n):
    rng = np.random.default_rng(rng_seed)
    data = Dataset(rng.normal(rng.uniform(-5, 5, size=d), rng.uniform(0.5, 3.0, size=d), size=(n, d)))

    result = fit(data, FitConfig(k=1, seed=0))
    assert result.converged
    assert result.iterations <= 2


@seed(5)
@settings(max_examples=60, deadline=None)
@given(
    rng_seed=SEEDS,
    k=st.integers(min_value=1, max_value=4),
    d=st.integers(min_value=1, max_value=4),
)
def test_alternative_m_step_formulas_agree(rng_seed, k, d):
    rng = np.random.default_rng(rng_seed)
    points = rng.normal(0.0, 3.0, size=(30, d))
    resp = Responsibilities(rng.dirichlet(np.ones(k), size=30))

    means = means_from_responsibility_columns(points, resp)
    params = m_step_ml(Dataset(points), resp, FULL, reg_floor=1e-12)
    assert_allclose(means, params.means, rtol=1e-10, atol=1e-12)

    for j in range(k):
        centered = covariance_centered(points, resp.r[:, j], means[j])
        assert_allclose(covariance_raw_moment(points, resp.r[:, j], means[j]), centered, atol=1e-9)
        assert_allclose(params.covariances[j].dense(), centered, atol=1e-9)
