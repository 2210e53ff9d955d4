"""
Test command-line entry point
End-to-end synth -> fit -> profile -> cost -> score, determinism and exit codes
"""
import json
import sys
from pathlib import Path

import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.logging_setup import close_logging
from main import main


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "seed": 42,
        "logging": {"file_path": str(tmp_path / "logs" / "qemlab.log"), "console_output": False},
        "fit": {"k": 3, "n_init": 3},
        "synth": {"k": 3, "d": 2, "n": 300},
    }), encoding="utf-8")
    yield str(path)
    close_logging()


def run(config_file: str, out: Path, *args: str) -> int:
    command, rest = args[0], list(args[1:])
    return main([command, "--config", config_file, "--out", str(out)] + rest)


def test_full_pipeline(tmp_path, config_file):
    out = tmp_path / "out"
    assert run(config_file, out, "synth") == 0
    assert (out / "dataset.csv").exists()
    truth = json.loads((out / "truth.json").read_text(encoding="utf-8"))
    assert truth["seed"] == 42 and len(truth["labels"]) == 300

    assert run(config_file, out, "fit", str(out / "dataset.csv")) == 0
    model = json.loads((out / "model.json").read_text(encoding="utf-8"))
    assert len(model["theta"]) == 3
    assert (out / "trace.csv").read_text(encoding="utf-8").startswith("iter,log_likelihood")

    assert run(config_file, out, "profile", str(out / "dataset.csv"), str(out / "model.json")) == 0
    profile = json.loads((out / "profile.json").read_text(encoding="utf-8"))
    assert profile["k"] == 3 and profile["d"] == 2 and profile["n"] == 300
    assert (out / "table.txt").exists()
    assert (out / "profile.xlsx").exists()

    assert run(config_file, out, "cost", str(out / "profile.json"),
               "--delta-theta", "0.038", "--delta-mu", "0.5", "--eps-tau", "0.007") == 0
    cost = json.loads((out / "cost.json").read_text(encoding="utf-8"))
    assert cost["dominant_term"] in ("t_theta", "t_mu", "t_sigma", "t_ell")
    assert (out / "curves.csv").exists()

    assert run(config_file, out, "score", str(out / "dataset.csv"), str(out / "model.json"),
               "--truth", str(out / "truth.json")) == 0
    score = json.loads((out / "score.json").read_text(encoding="utf-8"))
    assert score["accuracy"] >= 0.9


def test_fit_output_is_byte_identical_across_runs(tmp_path, config_file):
    data_dir = tmp_path / "data"
    assert run(config_file, data_dir, "synth") == 0
    first, second = tmp_path / "a", tmp_path / "b"
    assert run(config_file, first, "fit", str(data_dir / "dataset.csv")) == 0
    assert run(config_file, second, "fit", str(data_dir / "dataset.csv")) == 0
    assert (first / "model.json").read_bytes() == (second / "model.json").read_bytes()


def test_noisy_fit_runs(tmp_path, config_file):
    data_dir = tmp_path / "data"
    assert run(config_file, data_dir, "synth") == 0
    assert run(config_file, tmp_path / "noisy", "fit", str(data_dir / "dataset.csv"),
               "--delta-theta", "0.01", "--delta-mu", "0.05") == 0


def test_k_greater_than_n_exits_with_domain_code(tmp_path, config_file):
    dataset = tmp_path / "tiny.csv"
    dataset.write_text("f0\n1.0\n2.0\n", encoding="utf-8")
    assert run(config_file, tmp_path / "out", "fit", str(dataset), "--k", "3") == 2


def test_missing_model_exits_with_io_code(tmp_path, config_file):
    assert run(config_file, tmp_path / "out", "synth") == 0
    assert run(config_file, tmp_path / "out", "profile",
               str(tmp_path / "out" / "dataset.csv"), str(tmp_path / "absent.json")) == 1


def test_invalid_synth_size_exits_with_config_code(tmp_path, config_file):
    assert run(config_file, tmp_path / "out", "synth", "--n", "0") == 1


def test_unknown_suite_exits_with_config_code(tmp_path, config_file):
    assert run(config_file, tmp_path / "out", "validate", "--suite", "nope") == 1


def test_cost_without_targets_exits_with_config_code(tmp_path, config_file):
    out = tmp_path / "out"
    profile = out / "profile.json"
    out.mkdir()
    profile.write_text(json.dumps({
        "kappa_V": 1.0, "mu_V": 1.0, "eta": 1.0, "kappa_sigma": [1.0], "kappa_sigma_thresholded": [1.0],
        "mu_sigma": [1.0], "log_abs_dets": [0.0], "spectral_norms": [1.0], "n": 5, "d": 1, "k": 1,
    }), encoding="utf-8")
    assert run(config_file, out, "cost", str(profile)) == 1


def test_validate_writes_report(tmp_path, config_file):
    out = tmp_path / "out"
    assert run(config_file, out, "validate", "--suite", "lipschitz", "--trials", "50") == 0
    report = json.loads((out / "validation.json").read_text(encoding="utf-8"))
    assert report["passed"] and report["trials"] == 50


def test_synth_is_reproducible_for_a_seed(tmp_path, config_file):
    assert run(config_file, tmp_path / "a", "synth", "--seed", "7") == 0
    assert run(config_file, tmp_path / "b", "synth", "--seed", "7") == 0
    assert (tmp_path / "a" / "dataset.csv").read_bytes() == (tmp_path / "b" / "dataset.csv").read_bytes()
    assert run(config_file, tmp_path / "c", "synth", "--seed", "8") == 0
    assert (tmp_path / "a" / "dataset.csv").read_bytes() != (tmp_path / "c" / "dataset.csv").read_bytes()


def test_hard_separated_mixture_is_recovered_exactly(tmp_path, config_file):
    out = tmp_path / "out"
    assert run(config_file, out, "synth", "--separation", "1000000", "--k", "3", "--d", "3") == 0
    assert run(config_file, out, "fit", str(out / "dataset.csv"), "--k", "3") == 0
    assert run(config_file, out, "score", str(out / "dataset.csv"), str(out / "model.json")) == 0
    score = json.loads((out / "score.json").read_text(encoding="utf-8"))
    assert score["accuracy"] == 1.0


def test_clean_fit_accepts_a_zero_row(tmp_path, config_file):
    dataset = tmp_path / "zero_row.csv"
    dataset.write_text("f0\n0\n0.1\n10\n10.1\n", encoding="utf-8")
    out = tmp_path / "out"
    assert run(config_file, out, "fit", str(dataset), "--k", "2") == 0
    model = json.loads((out / "model.json").read_text(encoding="utf-8"))
    assert len(model["theta"]) == 2


def test_noisy_fit_rejects_a_zero_row(tmp_path, config_file):
    dataset = tmp_path / "zero_row.csv"
    dataset.write_text("f0\n0\n0.1\n10\n10.1\n", encoding="utf-8")
    assert run(config_file, tmp_path / "out", "fit", str(dataset), "--k", "2",
               "--delta-theta", "0.01", "--delta-mu", "0.05") == 2
