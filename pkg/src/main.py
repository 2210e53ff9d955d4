"""
QEM Lab - Main Entry Point
Batch commands: synth, fit, profile, cost, validate, score
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from config.loader import apply_overrides, get_worker_threads, load_config, validate_config
from core.component_factory import ComponentFactory
from core.errors import EXIT_OK, ConfigError, QemLabError, exit_code_for
from core.logging_setup import setup_logging
from logic.em_engine import fit, predict_labels
from logic.gmm import log_likelihood
from services.cost_model import default_n_grid, cost_curves, map_iteration_cost, qem_iteration_cost
from services.dataset_io import (load_model, read_dataset_csv, read_json, write_dataset_csv,
                                 write_frame_csv, write_json, write_trace_csv)
from services.profiler import ProfileReport, profile
from services.reporting import render_cost_table, render_profile_table, write_profile_workbook
from services.scoring import align_components, aligned_accuracy
from services.synthetic import sample_mixture
from services.validation import run_suite

logger = logging.getLogger("QemLab")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="Base seed (unsigned 64-bit)")
    common.add_argument("--out", help="Output directory")

    parser = argparse.ArgumentParser(prog="qemlab", description="Quantum EM emulation lab for Gaussian mixtures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Sample a synthetic mixture dataset")
    p.add_argument("--k", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--kind")

    p = sub.add_parser("fit", parents=[common], help="Fit a mixture with (noisy) EM")
    p.add_argument("dataset")
    p.add_argument("--k", type=int)
    p.add_argument("--kind")
    p.add_argument("--estimator", choices=["ml", "map"])
    p.add_argument("--delta-theta", type=float)
    p.add_argument("--delta-mu", type=float)
    p.add_argument("--n-init", type=int)

    p = sub.add_parser("profile", parents=[common], help="Profile dataset and model parameters")
    p.add_argument("dataset")
    p.add_argument("model")
    p.add_argument("--include-v-prime", action="store_true", default=None)

    p = sub.add_parser("cost", parents=[common], help="Evaluate the per-iteration cost model")
    p.add_argument("profile")
    p.add_argument("--delta-theta", type=float)
    p.add_argument("--delta-mu", type=float)
    p.add_argument("--eps-tau", type=float)
    p.add_argument("--n", type=int)

    p = sub.add_parser("validate", parents=[common], help="Run a Monte-Carlo validation suite")
    p.add_argument("--suite")
    p.add_argument("--trials", type=int)

    p = sub.add_parser("score", parents=[common], help="Label accuracy of a model against ground truth")
    p.add_argument("dataset")
    p.add_argument("model")
    p.add_argument("--truth", help="truth.json written by synth (default: dataset label column)")

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"seed": args.seed, "output_dir": args.out}
    command = args.command
    if command == "synth":
        overrides.update({"synth.k": args.k, "synth.d": args.d, "synth.n": args.n,
                          "synth.separation": args.separation, "synth.kind": args.kind})
    elif command == "fit":
        overrides.update({"fit.k": args.k, "fit.kind": args.kind, "fit.estimator": args.estimator,
                          "noise.delta_theta": args.delta_theta, "noise.delta_mu": args.delta_mu,
                          "fit.n_init": args.n_init})
    elif command == "profile":
        overrides["profile.include_v_prime"] = args.include_v_prime
    elif command == "cost":
        overrides.update({"cost.delta_theta": args.delta_theta, "cost.delta_mu": args.delta_mu,
                          "cost.eps_tau": args.eps_tau, "cost.n": args.n})
    elif command == "validate":
        overrides.update({"validate.suite": args.suite, "validate.trials": args.trials})
    return overrides


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_synth(args, config: Dict[str, Any], factory: ComponentFactory, out_dir: Path) -> List[Path]:
    spec = factory.create_synthetic_spec()
    data, labels, truth = sample_mixture(spec, np.random.default_rng(factory.seed))
    write_dataset_csv(out_dir / "dataset.csv", data, labels)
    write_json(out_dir / "truth.json", {
        "params": truth.to_dict(),
        "labels": labels.tolist(),
        "spec": spec.to_dict(),
        "seed": factory.seed,
    })
    return [out_dir / "dataset.csv", out_dir / "truth.json"]


def cmd_fit(args, config: Dict[str, Any], factory: ComponentFactory, out_dir: Path) -> List[Path]:
    data, _ = read_dataset_csv(args.dataset)
    cfg = factory.create_fit_config(data)
    noise = factory.create_noise_channel(data)
    result = fit(data, cfg, noise)
    if not result.converged:
        logger.warning(f"EM did not converge within {cfg.max_iters} iterations")
    write_json(out_dir / "model.json", result.to_dict())
    write_trace_csv(out_dir / "trace.csv", result.trace)
    return [out_dir / "model.json", out_dir / "trace.csv"]


def cmd_profile(args, config: Dict[str, Any], factory: ComponentFactory, out_dir: Path) -> List[Path]:
    params = load_model(args.model)
    data, _ = read_dataset_csv(args.dataset)
    report = profile(data, params, **factory.profile_options(get_worker_threads()))

    written = [out_dir / "profile.json", out_dir / "table.txt"]
    write_json(written[0], report.to_dict())
    table = render_profile_table(report)
    written[1].write_text(table, encoding="utf-8")
    print(table, end="")
    if config["profile"]["excel"]:
        write_profile_workbook(out_dir / "profile.xlsx", report)
        written.append(out_dir / "profile.xlsx")
    return written


def cmd_cost(args, config: Dict[str, Any], factory: ComponentFactory, out_dir: Path) -> List[Path]:
    targets = factory.cost_targets()
    report_in = ProfileReport.from_dict(read_json(args.profile))
    cost_fn = map_iteration_cost if config["cost"]["estimator"] == "map" else qem_iteration_cost
    report = cost_fn(report_in, report_in.k, report_in.d, targets["delta_theta"], targets["delta_mu"],
                     targets["eps_tau"], **factory.cost_options())

    write_json(out_dir / "cost.json", report.to_dict())
    curves = cost_curves(report, default_n_grid(report, int(config["cost"]["curve_points"])))
    write_frame_csv(out_dir / "curves.csv", curves)
    print(render_cost_table(report), end="")
    return [out_dir / "cost.json", out_dir / "curves.csv"]


def cmd_validate(args, config: Dict[str, Any], factory: ComponentFactory, out_dir: Path) -> List[Path]:
    result = run_suite(config["validate"]["suite"], config, get_worker_threads())
    write_json(out_dir / "validation.json", result.to_dict())
    mark = "✓" if result.passed else "✗"
    print(f"{mark} {result.suite}: max observed {result.max_observed:.6g} vs bound {result.bound:.6g} "
          f"({result.trials} trials)")
    return [out_dir / "validation.json"]


def cmd_score(args, config: Dict[str, Any], factory: ComponentFactory, out_dir: Path) -> List[Path]:
    data, labels = read_dataset_csv(args.dataset)
    params = load_model(args.model)
    if args.truth:
        labels = np.asarray(read_json(args.truth).get("labels", []))
    if labels is None or len(labels) != data.n:
        raise ConfigError("score needs one true label per sample (truth.json or a label column)")
    if labels.dtype.kind not in "iu":
        raise ConfigError("true labels must be integers 0..k-1")

    predicted = predict_labels(data, params)
    k = max(params.k, int(np.max(labels)) + 1)
    payload = {
        "accuracy": aligned_accuracy(labels, predicted, k),
        "mapping": {str(c): t for c, t in align_components(labels, predicted, k).items()},
        "log_likelihood": log_likelihood(data, params),
        "n": data.n,
        "k": params.k,
    }
    write_json(out_dir / "score.json", payload)
    print(f"Aligned accuracy: {payload['accuracy']:.4f}")
    return [out_dir / "score.json"]


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "profile": cmd_profile,
    "cost": cmd_cost,
    "validate": cmd_validate,
    "score": cmd_score,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    args = build_parser().parse_args(argv)
    try:
        config = apply_overrides(load_config(args.config), _overrides(args))
        validate_config(config)

        setup_logging(config["logging"])
        logger.info(f"qemlab {args.command} (seed={config['seed']})")

        out_dir = Path(config["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](args, config, ComponentFactory(config), out_dir)

        for path in written:
            logger.info(f"  ✓ wrote {path}")
        return EXIT_OK
    except FileNotFoundError as e:
        print(f"\n✗ File not found: {e}")
        return exit_code_for(e)
    except json.JSONDecodeError as e:
        print(f"\n✗ Invalid JSON: {e}")
        return exit_code_for(e)
    except QemLabError as e:
        print(f"\n✗ {type(e).__name__}: {e}")
        logger.error(str(e))
        return exit_code_for(e)
    except OSError as e:
        print(f"\n✗ I/O error: {e}")
        return exit_code_for(e)
    except Exception as e:
        print(f"\n✗ Unexpected error: {e}")
        logger.exception("Unexpected error in main")
        return 1


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
