"""
Configuration loader module
Loads run configuration from a JSON file and environment variables, fills
defaults and rejects unknown keys
"""
import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from core.errors import ConfigError

DEFAULT_CONFIG: Dict[str, Any] = {
    "seed": 0,
    "output_dir": "out",
    "logging": {
        "level": "INFO",
        "file_path": "logs/qemlab.log",
        "max_bytes": 10485760,
        "backup_count": 5,
        "console_output": True,
        "clear_on_start": False,
    },
    "fit": {
        "k": 2,
        "kind": "full",
        "eps_tau": 7e-3,
        "max_iters": 70,
        "reg_floor": None,  # None -> 1e-6 x mean per-dimension data variance
        "init": {
            "strategy": "kmeans_pp",
            "rounds": 10,
            "restarts": 5,
            "burn_iters": 5,
        },
        "estimator": "ml",
        "prior": {
            "alpha": 2.0,
            "iota0": 1.0,
            "nu0": None,  # None -> d + 2
            "m0": None,  # None -> data mean
            "s0": None,  # None -> pooled per-dimension variance
        },
        "criterion": "auto",
        "n_init": 1,
    },
    "noise": {
        "delta_theta": None,
        "delta_mu": None,
        "sigma_floor": 0.07,
        "kappa_cap": None,
        "trunc_sigma": 1.0,
        "seed": None,
    },
    "profile": {
        "include_v_prime": False,
        "v_prime_budget": 50000000,
        "kappa_threshold": 0.07,
        "logdet_eps": 0.5,
        "logdet_delta": 0.1,
        "max_probes": 4096,
        "excel": True,
    },
    "cost": {
        "delta_theta": None,
        "delta_mu": None,
        "eps_tau": None,
        "n": None,
        "kappa_v_power": 2,
        "reduction": "max",
        "thresholded_kappa": True,
        "estimator": "ml",
        "curve_points": 50,
    },
    "validate": {
        "suite": "lipschitz",
        "trials": None,  # None -> suite default
        "runs": 15,
        "tomography_constant": 36.0,
    },
    "synth": {
        "k": 3,
        "d": 2,
        "n": 500,
        "separation": 6.0,
        "sigma": 1.0,
        "kind": "diag",
        "weights": None,
        "offset": 0.0,
    },
}

VALIDATION_SUITES = (
    "lipschitz",
    "responsibility-error",
    "tomography",
    "amplitude",
    "quadratic-form",
    "noise-bounds",
    "logdet",
    "error-claims",
    "kappa-stability",
)


def _load_env_file(config_path: Optional[str]):
    """Load .env from the project root of the config file, falling back to the CWD"""
    project_root = Path.cwd()
    if config_path:
        config_file_path = Path(config_path).resolve()
        # config/run.json -> project root
        if config_file_path.parent.name == "config":
            project_root = config_file_path.parent.parent
        else:
            project_root = config_file_path.parent

    env_path = project_root / ".env"
    if env_path.exists():
        load_dotenv(env_path)
    elif Path(".env").exists():
        load_dotenv(Path(".env"))


def _merge(defaults: Dict[str, Any], overrides: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    if not isinstance(overrides, dict):
        raise ConfigError(f"configuration section '{path.rstrip('.') or '<root>'}' must be an object")
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"unknown configuration key: {path}{key}")
        if isinstance(defaults[key], dict):
            merged[key] = _merge(defaults[key], value, f"{path}{key}.")
        else:
            merged[key] = value
    return merged


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load configuration from JSON file and environment variables

    Args:
        config_path: Path to configuration JSON file (None -> defaults only)

    Returns:
        Dictionary containing the full configuration with defaults filled in

    Raises:
        FileNotFoundError: If config file doesn't exist
        json.JSONDecodeError: If config file is invalid JSON
        ConfigError: On unknown keys
    """
    _load_env_file(config_path)

    if config_path is None:
        return copy.deepcopy(DEFAULT_CONFIG)

    config_file = Path(config_path)
    if not config_file.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_file, 'r', encoding='utf-8') as f:
        raw = json.load(f)

    return _merge(DEFAULT_CONFIG, raw)


def apply_overrides(config: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    Apply dotted-key overrides from command-line flags (None values are skipped)

    Args:
        config: Loaded configuration
        overrides: Mapping such as {"seed": 7, "fit.k": 3}

    Returns:
        New configuration dictionary
    """
    result = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = result
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown configuration key: {dotted}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown configuration key: {dotted}")
        node[parts[-1]] = value
    return result


def get_worker_threads() -> int:
    """Worker thread cap from QEMLAB_THREADS (default: CPU count, minimum 1)"""
    raw = os.getenv("QEMLAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"QEMLAB_THREADS must be an integer, got '{raw}'")
    return max(1, os.cpu_count() or 1)


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _positive(value: Any) -> bool:
    return _is_number(value) and value > 0


def validate_config(config: Dict[str, Any]) -> bool:
    """
    Validate configuration values

    Args:
        config: Configuration dictionary (as returned by load_config)

    Returns:
        True if valid, raises ConfigError if invalid
    """
    seed = config["seed"]
    _require(isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2 ** 64,
             "seed must be an unsigned 64-bit integer")
    _require(isinstance(config["output_dir"], str) and config["output_dir"] != "",
             "output_dir must be a non-empty path")

    fit = config["fit"]
    _require(isinstance(fit["k"], int) and fit["k"] >= 1, "fit.k must be an integer >= 1")
    _require(_positive(fit["eps_tau"]), "fit.eps_tau must be > 0")
    _require(isinstance(fit["max_iters"], int) and fit["max_iters"] >= 1, "fit.max_iters must be >= 1")
    _require(fit["reg_floor"] is None or _positive(fit["reg_floor"]), "fit.reg_floor must be > 0")
    _require(fit["estimator"] in ("ml", "map"), "fit.estimator must be 'ml' or 'map'")
    _require(fit["criterion"] in ("auto", "log_likelihood", "mean_probability"),
             "fit.criterion must be auto, log_likelihood or mean_probability")
    _require(isinstance(fit["n_init"], int) and fit["n_init"] >= 1, "fit.n_init must be >= 1")
    init = fit["init"]
    _require(init["strategy"] in ("random", "kmeans_pp", "small_em", "cem"),
             "fit.init.strategy must be random, kmeans_pp, small_em or cem")
    for key in ("rounds", "restarts", "burn_iters"):
        _require(isinstance(init[key], int) and init[key] >= 1, f"fit.init.{key} must be >= 1")

    noise = config["noise"]
    for key in ("delta_theta", "delta_mu"):
        _require(noise[key] is None or (_is_number(noise[key]) and noise[key] >= 0),
                 f"noise.{key} must be >= 0")
    _require(_positive(noise["sigma_floor"]), "noise.sigma_floor must be > 0")
    _require(noise["kappa_cap"] is None or (_is_number(noise["kappa_cap"]) and noise["kappa_cap"] > 1),
             "noise.kappa_cap must be > 1")
    _require(_positive(noise["trunc_sigma"]), "noise.trunc_sigma must be > 0")

    profile = config["profile"]
    _require(_positive(profile["kappa_threshold"]), "profile.kappa_threshold must be > 0")
    for key in ("logdet_eps", "logdet_delta"):
        _require(_is_number(profile[key]) and 0 < profile[key] < 1, f"profile.{key} must lie in (0, 1)")
    _require(isinstance(profile["max_probes"], int) and profile["max_probes"] >= 1,
             "profile.max_probes must be >= 1")

    cost = config["cost"]
    _require(cost["reduction"] in ("max", "mean"), "cost.reduction must be 'max' or 'mean'")
    _require(cost["kappa_v_power"] in (1, 2), "cost.kappa_v_power must be 1 or 2")
    _require(cost["estimator"] in ("ml", "map"), "cost.estimator must be 'ml' or 'map'")

    _require(config["validate"]["suite"] in VALIDATION_SUITES,
             f"unknown validation suite '{config['validate']['suite']}'")
    trials = config["validate"]["trials"]
    _require(trials is None or (isinstance(trials, int) and trials >= 1), "validate.trials must be >= 1")
    runs = config["validate"]["runs"]
    _require(isinstance(runs, int) and runs >= 1 and runs % 2 == 1, "validate.runs must be a positive odd integer")

    synth = config["synth"]
    for key in ("k", "d", "n"):
        _require(isinstance(synth[key], int) and synth[key] >= 1, f"synth.{key} must be an integer >= 1")
    _require(_positive(synth["separation"]), "synth.separation must be > 0")
    _require(_positive(synth["sigma"]), "synth.sigma must be > 0")

    return True
