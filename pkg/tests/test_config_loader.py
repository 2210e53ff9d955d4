"""
Test configuration loading
Defaults, unknown keys, command-line overrides, validation and QEMLAB_THREADS
"""
import json
import sys
from pathlib import Path

import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from config.loader import DEFAULT_CONFIG, apply_overrides, get_worker_threads, load_config, validate_config
from core.errors import ConfigError


def write_config(tmp_path: Path, payload: dict) -> str:
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_defaults_without_file():
    config = load_config(None)
    assert config == DEFAULT_CONFIG
    assert config is not DEFAULT_CONFIG
    assert validate_config(config)


def test_partial_file_is_merged_with_defaults(tmp_path):
    config = load_config(write_config(tmp_path, {"seed": 9, "fit": {"k": 4, "init": {"rounds": 3}}}))
    assert config["seed"] == 9
    assert config["fit"]["k"] == 4
    assert config["fit"]["init"]["rounds"] == 3
    assert config["fit"]["init"]["strategy"] == "kmeans_pp"
    assert config["noise"] == DEFAULT_CONFIG["noise"]


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown configuration key: fit.kk"):
        load_config(write_config(tmp_path, {"fit": {"kk": 2}}))
    with pytest.raises(ConfigError, match="must be an object"):
        load_config(write_config(tmp_path, {"fit": 3}))


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(json.JSONDecodeError):
        load_config(str(bad))


def test_overrides_skip_none_and_reject_unknown():
    config = apply_overrides(load_config(None), {"seed": 7, "fit.k": 5, "noise.delta_mu": None})
    assert config["seed"] == 7
    assert config["fit"]["k"] == 5
    assert config["noise"]["delta_mu"] is None
    with pytest.raises(ConfigError):
        apply_overrides(config, {"fit.missing": 1})
    with pytest.raises(ConfigError):
        apply_overrides(config, {"seed.inner": 1})


@pytest.mark.parametrize("dotted, value", [
    ("seed", -1),
    ("seed", True),
    ("fit.k", 0),
    ("fit.eps_tau", 0.0),
    ("fit.estimator", "bayes"),
    ("fit.init.strategy", "spectral"),
    ("noise.delta_mu", -0.1),
    ("noise.kappa_cap", 1.0),
    ("profile.logdet_eps", 1.0),
    ("cost.kappa_v_power", 3),
    ("validate.suite", "nope"),
    ("validate.runs", 4),
    ("synth.n", 0),
])
def test_validate_rejects_bad_values(dotted, value):
    config = apply_overrides(load_config(None), {dotted: value})
    with pytest.raises(ConfigError):
        validate_config(config)


def test_worker_threads_from_environment(monkeypatch):
    monkeypatch.setenv("QEMLAB_THREADS", "3")
    assert get_worker_threads() == 3
    monkeypatch.setenv("QEMLAB_THREADS", "0")
    assert get_worker_threads() == 1
    monkeypatch.setenv("QEMLAB_THREADS", "many")
    with pytest.raises(ConfigError):
        get_worker_threads()
    monkeypatch.delenv("QEMLAB_THREADS")
    assert get_worker_threads() >= 1
