"""
Scoring Service Module
Label agreement between clusterings after optimal component matching
"""
from typing import Any, Dict, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.errors import DomainError


def confusion_matrix(true_labels: Any, predicted: Any, k: Optional[int] = None) -> np.ndarray:
    true_labels = np.asarray(true_labels, dtype=int)
    predicted = np.asarray(predicted, dtype=int)
    if true_labels.shape != predicted.shape:
        raise DomainError("label vectors differ in length")
    if true_labels.size == 0:
        raise DomainError("no labels to score")
    size = max(int(true_labels.max()), int(predicted.max())) + 1
    if k is not None:
        size = max(size, k)
    counts = np.zeros((size, size), dtype=int)
    np.add.at(counts, (true_labels, predicted), 1)
    return counts


def align_components(true_labels: Any, predicted: Any, k: Optional[int] = None) -> Dict[int, int]:
    """Predicted component -> true label mapping maximizing agreement (Hungarian matching)"""
    counts = confusion_matrix(true_labels, predicted, k)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return {int(c): int(r) for r, c in zip(rows, cols)}


def aligned_accuracy(true_labels: Any, predicted: Any, k: Optional[int] = None) -> float:
    """
    Fraction of samples whose predicted component maps to their true label

    Args:
        true_labels: Ground-truth labels 0..k-1
        predicted: Predicted component indices 0..k-1
        k: Component count (inferred when omitted)

    Returns:
        Accuracy in [0, 1], invariant to permutations of the predicted indices
    """
    counts = confusion_matrix(true_labels, predicted, k)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return float(counts[rows, cols].sum() / counts.sum())
