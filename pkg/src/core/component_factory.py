"""
Component Factory Module
Builds fit, noise, profile and cost settings from the run configuration
"""
import logging
from typing import Any, Dict, Optional

import numpy as np

from core.errors import ConfigError
from logic.em_engine import Estimator, FitConfig, InitStrategy, MapPrior, StoppingCriterion
from logic.gmm import CovarianceKind, Dataset
from logic.noise_channel import NoiseChannel, NoiseSpec
from services.synthetic import SyntheticSpec

logger = logging.getLogger("QemLab")


class ComponentFactory:
    """Factory to create run components"""

    def __init__(self, config: dict):
        """
        Initialize component factory

        Args:
            config: Validated run configuration
        """
        self.config = config

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    def create_fit_config(self, data: Dataset) -> FitConfig:
        """
        Create EM fit settings

        Args:
            data: Dataset the fit runs on (needed for the MAP prior defaults)

        Returns:
            FitConfig
        """
        fit = self.config["fit"]
        try:
            estimator = Estimator(fit["estimator"])
            criterion = StoppingCriterion(fit["criterion"])
        except ValueError as e:
            raise ConfigError(str(e))

        cfg = FitConfig(
            k=int(fit["k"]),
            kind=CovarianceKind.parse(fit["kind"]),
            eps_tau=float(fit["eps_tau"]),
            max_iters=int(fit["max_iters"]),
            reg_floor=fit["reg_floor"],
            init=InitStrategy.from_dict(fit["init"]),
            seed=self.seed,
            estimator=estimator,
            criterion=criterion,
            n_init=int(fit["n_init"]),
        )
        if estimator is Estimator.MAP:
            cfg.prior = self.create_map_prior(data, cfg)
        return cfg

    def create_map_prior(self, data: Dataset, cfg: FitConfig) -> MapPrior:
        prior = self.config["fit"]["prior"]
        return MapPrior.default_for(
            data,
            cfg.k,
            cfg.resolve_reg_floor(data),
            alpha=prior["alpha"],
            iota0=prior["iota0"],
            nu0=prior["nu0"],
            m0=None if prior["m0"] is None else np.asarray(prior["m0"], dtype=float),
            s0=None if prior["s0"] is None else np.asarray(prior["s0"], dtype=float),
        )

    def create_noise_spec(self) -> Optional[NoiseSpec]:
        """Noise settings, or None when neither delta is configured (clean EM)"""
        noise = self.config["noise"]
        if noise["delta_theta"] is None and noise["delta_mu"] is None:
            return None
        return NoiseSpec.from_dict(noise)

    def create_noise_channel(self, data: Dataset) -> Optional[NoiseChannel]:
        """Seeded channel for noisy EM; η is only measured when noise is configured"""
        spec = self.create_noise_spec()
        if spec is None:
            return None
        eta = data.eta()
        logger.info(f"Noise channel: δθ={spec.delta_theta}, δμ={spec.delta_mu}, η={eta:.4g}")
        return NoiseChannel(spec, eta, seed=self.seed)

    def create_synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec.from_dict(self.config["synth"])

    def profile_options(self, threads: int) -> Dict[str, Any]:
        """Keyword arguments for profiler.profile"""
        profile = self.config["profile"]
        return {
            "include_v_prime": bool(profile["include_v_prime"]),
            "v_prime_budget": int(profile["v_prime_budget"]),
            "kappa_threshold": float(profile["kappa_threshold"]),
            "logdet_eps": float(profile["logdet_eps"]),
            "logdet_delta": float(profile["logdet_delta"]),
            "max_probes": int(profile["max_probes"]),
            "seed": self.seed,
            "threads": threads,
        }

    def cost_targets(self) -> Dict[str, float]:
        """
        Error targets of the cost model

        Raises:
            ConfigError: If delta_theta, delta_mu or eps_tau is missing
        """
        cost = self.config["cost"]
        missing = [key for key in ("delta_theta", "delta_mu", "eps_tau") if cost[key] is None]
        if missing:
            raise ConfigError(f"cost requires {', '.join('cost.' + m for m in missing)}")
        return {key: float(cost[key]) for key in ("delta_theta", "delta_mu", "eps_tau")}

    def cost_options(self) -> Dict[str, Any]:
        cost = self.config["cost"]
        return {
            "n": None if cost["n"] is None else int(cost["n"]),
            "kappa_v_power": int(cost["kappa_v_power"]),
            "reduction": cost["reduction"],
            "thresholded_kappa": bool(cost["thresholded_kappa"]),
        }
