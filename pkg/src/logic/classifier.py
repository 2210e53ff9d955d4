"""
Mixture Classifier Module
One Gaussian mixture per class label; a group of samples is assigned the
class whose mixture gives it the highest total log-likelihood

Library API only: no CLI command wraps it (score evaluates a single mixture).
"""
import dataclasses
import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.errors import DomainError
from logic.em_engine import FitConfig, FitResult, fit
from logic.gmm import Dataset, log_likelihood
from logic.noise_channel import NoiseChannel, NoiseSpec

logger = logging.getLogger("QemLab")


class MixtureClassifier:
    """Per-class mixture models, optionally fitted through the noise channel"""

    def __init__(self, cfg: FitConfig, noise_spec: Optional[NoiseSpec] = None):
        """
        Initialize classifier

        Args:
            cfg: Fit settings shared by every class (class i uses seed cfg.seed + i)
            noise_spec: Optional noise applied during every per-class fit
        """
        self.cfg = cfg
        self.noise_spec = noise_spec
        self.classes: List[Any] = []
        self.models: Dict[Any, FitResult] = {}

    def fit(self, data: Dataset, labels: Sequence[Any]) -> "MixtureClassifier":
        labels = np.asarray(labels)
        if labels.size != data.n:
            raise DomainError("labels must have one entry per sample")

        self.classes = sorted(set(labels.tolist()))
        self.models = {}
        for index, label in enumerate(self.classes):
            subset = data.take(np.flatnonzero(labels == label))
            cfg = dataclasses.replace(self.cfg, seed=self.cfg.seed + index)
            noise = None
            if self.noise_spec is not None:
                noise = NoiseChannel(self.noise_spec, subset.eta(), seed=cfg.seed)
            self.models[label] = fit(subset, cfg, noise)
            logger.debug(f"class {label!r}: {subset.n} samples, "
                         f"{self.models[label].iterations} iterations")
        logger.info(f"Fitted {len(self.classes)} class models")
        return self

    def score_groups(self, groups: Sequence[Dataset]) -> np.ndarray:
        """Total log-likelihood of every group (rows) under every class model (columns)"""
        if not self.models:
            raise DomainError("classifier has not been fitted")
        scores = np.empty((len(groups), len(self.classes)))
        for g, group in enumerate(groups):
            for c, label in enumerate(self.classes):
                scores[g, c] = log_likelihood(group, self.models[label].params)
        return scores

    def predict(self, groups: Sequence[Dataset]) -> List[Any]:
        best = np.argmax(self.score_groups(groups), axis=1)
        return [self.classes[i] for i in best]

    def accuracy(self, groups: Sequence[Dataset], labels: Sequence[Any]) -> float:
        predicted = self.predict(groups)
        if len(predicted) == 0:
            return 0.0
        return float(np.mean([p == t for p, t in zip(predicted, labels)]))
