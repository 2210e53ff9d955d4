"""
Test scoring and the mixture classifier
Aligned accuracy under label permutations and per-class mixture classification
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.errors import DomainError
from logic.classifier import MixtureClassifier
from logic.em_engine import FitConfig
from logic.gmm import DIAGONAL, Dataset
from logic.noise_channel import NoiseSpec
from services.scoring import align_components, aligned_accuracy, confusion_matrix


def test_perfect_agreement_up_to_permutation():
    truth = np.array([0, 0, 1, 1, 2, 2])
    predicted = np.array([2, 2, 0, 0, 1, 1])
    assert aligned_accuracy(truth, predicted) == 1.0
    assert align_components(truth, predicted) == {2: 0, 0: 1, 1: 2}


def test_accuracy_is_invariant_to_relabeling():
    rng = np.random.default_rng(0)
    truth = rng.integers(0, 4, size=200)
    predicted = np.where(rng.random(200) < 0.8, truth, rng.integers(0, 4, size=200))
    base = aligned_accuracy(truth, predicted, 4)
    for _ in range(5):
        perm = rng.permutation(4)
        assert aligned_accuracy(truth, perm[predicted], 4) == pytest.approx(base)


def test_one_mistake():
    assert aligned_accuracy([0, 0, 0, 1], [1, 1, 1, 1]) == pytest.approx(0.75)


def test_confusion_matrix_size_and_errors():
    counts = confusion_matrix([0, 1], [1, 1], k=3)
    assert counts.shape == (3, 3)
    assert counts.sum() == 2
    with pytest.raises(DomainError):
        confusion_matrix([0, 1], [0])
    with pytest.raises(DomainError):
        confusion_matrix([], [])


def class_samples(rng: np.random.Generator, center: float, n: int) -> np.ndarray:
    return rng.normal(center, 1.0, size=(n, 2)) + 20.0


def test_classifier_separates_well_apart_classes():
    rng = np.random.default_rng(1)
    points = np.concatenate([class_samples(rng, 0.0, 150), class_samples(rng, 6.0, 150)])
    labels = np.array(["a"] * 150 + ["b"] * 150)
    clf = MixtureClassifier(FitConfig(k=2, kind=DIAGONAL, seed=3)).fit(Dataset(points), labels)
    assert clf.classes == ["a", "b"]

    groups = [Dataset(class_samples(rng, 0.0, 10)) for _ in range(5)]
    groups += [Dataset(class_samples(rng, 6.0, 10)) for _ in range(5)]
    truth = ["a"] * 5 + ["b"] * 5
    assert clf.predict(groups) == truth
    assert clf.accuracy(groups, truth) == 1.0
    assert clf.score_groups(groups).shape == (10, 2)


def test_classifier_with_noise_channel():
    rng = np.random.default_rng(2)
    points = np.concatenate([class_samples(rng, 0.0, 120), class_samples(rng, 8.0, 120)])
    labels = [0] * 120 + [1] * 120
    clf = MixtureClassifier(FitConfig(k=1, kind=DIAGONAL, seed=0), NoiseSpec(delta_theta=0.01, delta_mu=0.01))
    clf.fit(Dataset(points), labels)
    groups = [Dataset(class_samples(rng, 0.0, 10)), Dataset(class_samples(rng, 8.0, 10))]
    assert clf.predict(groups) == [0, 1]


def test_classifier_errors():
    clf = MixtureClassifier(FitConfig(k=1))
    with pytest.raises(DomainError):
        clf.score_groups([Dataset([[0.0]])])
    with pytest.raises(DomainError):
        clf.fit(Dataset([[0.0], [1.0]]), [0])
