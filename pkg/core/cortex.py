import argparse
import logging
import os
import signal
import sys
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core import harness
from core.config import ExperimentConfig, env_log_level, load_config, make_config
from core.errors import SparseDynError
from core.results import read_coefficients, write_bundle, write_frame, write_json, write_report, write_trajectory
from dynamics.experiments import contaminate, default_protocol, get_sampler, load_dataset, save_dataset, sinusoid_initial_state
from dynamics.models import ModelSpec, true_coefficients
from estimation.quadrature import estimation_study
from library.dictionary import dictionary_from_name
from metrics.evaluation import compute_metrics
from solvers.registry import normalize_solver_name

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s :: %(asctime)s :: %(message)s"

# Global flag set by the first Ctrl+C
should_exit = False


def signal_handler(sig, frame):
    global should_exit
    if not should_exit:
        print("\nStopping after the running cells... (press Ctrl+C again to force exit)")
        should_exit = True
        harness.stop_requested.set()
    else:
        print("\nForcefully exiting...")
        sys.exit(1)


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _config_from_args(args, **extra) -> ExperimentConfig:
    """Config file (if any) overridden by the flags that were given."""
    overrides = {
        "model": getattr(args, "model", None),
        "dimension": getattr(args, "dim", None),
        "formulation": getattr(args, "formulation", None),
        "seed": getattr(args, "seed", None),
        "alpha": getattr(args, "alpha", None),
        "constraints": True if getattr(args, "constraints", False) else None,
        "output_dir": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
        "n_experiments": getattr(args, "experiments", None),
        "total_points": getattr(args, "points", None),
        "t_max": getattr(args, "t_max", None),
    }
    overrides.update(extra)
    if getattr(args, "config", None):
        return load_config(args.config, **overrides)
    return make_config(**{k: v for k, v in overrides.items() if v is not None})


def cmd_generate(args) -> int:
    config = _config_from_args(args)
    dataset = harness.generate_clean(config, args.rep)
    if args.noise:
        dataset = contaminate(dataset, args.noise, (config.seed, 0, args.rep))
    path = save_dataset(dataset, config.output_dir)
    print(f"Saved {dataset.n_experiments} experiments of {dataset.points_per_experiment} points: {path}")
    return 0


def cmd_fit(args) -> int:
    solver = normalize_solver_name(args.solver)
    config = _config_from_args(args)
    clean = harness.generate_clean(config, args.rep)
    cell = harness.prepare_cell(config, clean, 0, args.noise, args.rep)
    fit = harness.fit_solver(config, cell, solver)

    stem = f"{solver}_{args.noise:g}_{args.rep}"
    payload = harness.coefficient_payload(fit, cell.dictionary, cell.model, args.noise, args.rep)
    payload["metrics"] = fit.metrics.to_dict()
    coefficients_path = write_json(payload, os.path.join(config.output_dir, "coefficients", f"{stem}.json"))
    report_path = write_report(fit.report, os.path.join(config.output_dir, "reports", f"{stem}.json"), config.record_timings)

    print(f"Solver: {solver}  iterations: {fit.report.iterations}  FW gap: {fit.report.fw_gap:.3e}")
    print(f"E_R={fit.metrics.E_R:.6e}  E_D={fit.metrics.E_D:.6e}  E_T={fit.metrics.E_T:.6e}  S_E={fit.metrics.S_E}  S_M={fit.metrics.S_M}")
    for column, terms in payload["coefficients"].items():
        rhs_text = " + ".join(f"{term['value']:.6g} {term['label']}" for term in terms) or "0"
        print(f"  d{column}/dt = {rhs_text}")
    print(f"Coefficients: {coefficients_path}")
    print(f"Solve report: {report_path}")
    return 0


def cmd_sweep(args) -> int:
    config = _config_from_args(args)
    bundle = harness.run_sweep(config)
    paths = write_bundle(bundle, config.output_dir)
    print(f"Results: {paths['results']} ({len(bundle.results)} rows, {len(bundle.failures)} failures)")
    print(f"Aggregate: {paths['aggregate']}")
    if bundle.interrupted:
        print("Sweep was interrupted; partial results written.")
        return 130
    return 0


def cmd_sample_sweep(args) -> int:
    extra = {"sample_grid": _int_list(args.samples)} if args.samples else {}
    config = _config_from_args(args, **extra)
    grid = harness.sample_efficiency_sweep(config)
    path = write_frame(grid, os.path.join(config.output_dir, "sample_efficiency.csv"))
    print(f"Sample-efficiency grid: {path} ({len(grid)} rows)")
    return 130 if harness.stop_requested.is_set() else 0


def cmd_simulate(args) -> int:
    payload = read_coefficients(args.coefficients)
    model = ModelSpec.from_dict(payload["model"])
    dictionary = dictionary_from_name(payload["dictionary"])
    omega = np.asarray(payload["omega"], dtype=float)
    xi = true_coefficients(model, dictionary)

    v0 = None
    if args.x0:
        x0 = np.asarray(_float_list(args.x0))
    elif model.order == 2:
        x0 = sinusoid_initial_state(model.dimension)
    else:
        x0, v0 = get_sampler(default_protocol(model).sampler)(np.random.default_rng(args.seed), model)
    t_max = args.t_max or default_protocol(model).t_max
    dt = args.dt or t_max / 1000.0

    comparison = harness.simulate_comparison(omega, xi, model, dictionary, x0, t_max, dt, v0=v0)
    out = args.out or os.path.splitext(args.coefficients)[0] + "_trajectory.csv"
    path = write_trajectory(comparison, out)
    if comparison.blowup_time is not None:
        print(f"Learned dynamic blew up at t={comparison.blowup_time:.6g}")
    print(f"Final divergence: {comparison.divergence[-1]:.6e} at t={comparison.t[-1]:.6g}")
    print(f"Trajectory: {path}")
    return 0


def cmd_metrics(args) -> int:
    payload = read_coefficients(args.coefficients)
    test = load_dataset(args.dataset)
    dictionary = dictionary_from_name(payload["dictionary"])
    omega = np.asarray(payload["omega"], dtype=float)
    xi = true_coefficients(test.model, dictionary)
    config = _config_from_args(args)
    zero_tol = args.zero_tol if args.zero_tol is not None else payload.get("zero_tol", 0.0)
    metrics = compute_metrics(omega, xi, test, dictionary, config.estimator_spec(), zero_tol)
    for name, value in metrics.to_dict().items():
        print(f"{name}: {value}")
    if args.out:
        print(f"Metrics: {write_json(metrics.to_dict(), args.out)}")
    return 0


def cmd_estimate_study(args) -> int:
    config = _config_from_args(args)
    dataset = harness.generate_clean(config, 0)
    frame = estimation_study(dataset, _float_list(args.etas), args.reps, config.seed, args.degree)
    path = write_frame(frame, os.path.join(config.output_dir, "estimation_study.csv"))
    print(f"Estimation study: {path} ({len(frame)} rows)")
    return 0


def _add_common(parser: argparse.ArgumentParser, data: bool = True):
    parser.add_argument("--config", help="TOML sweep configuration")
    parser.add_argument("--out", help="Output directory (default: $SPARSEDYN_OUTPUT_DIR or results)")
    parser.add_argument("--seed", type=int)
    if data:
        parser.add_argument("--model", help="kuramoto, fput, michaelis_menten or spring_mass")
        parser.add_argument("--dim", type=int, help="State dimension for Kuramoto and FPUT")
        parser.add_argument("--experiments", type=int, help="Number of experiments")
        parser.add_argument("--points", type=int, help="Total number of samples over all experiments")
        parser.add_argument("--t-max", type=float, help="Length of every experiment")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m core.cortex", description="Sparse recovery of governing equations")
    parser.add_argument("--log-level", default=None, help="Logging level (default: $SPARSEDYN_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Simulate experiments and save them to disk")
    _add_common(p)
    p.add_argument("--noise", type=float, default=0.0, help="Noise level eta")
    p.add_argument("--rep", type=int, default=0, help="Repetition index used for seeding")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="Run one solver on one noisy dataset")
    _add_common(p)
    p.add_argument("--formulation", choices=["differential", "integral"])
    p.add_argument("--solver", default="bcg")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--constraints", action="store_true", help="Impose the benchmark's structural constraints")
    p.add_argument("--alpha", type=float, help="l1 radius")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="Full noise sweep from a configuration file")
    _add_common(p, data=False)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sample-sweep", help="Noise level x sample count grid")
    _add_common(p, data=False)
    p.add_argument("--samples", help="Comma-separated points per experiment")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sample_sweep)

    p = sub.add_parser("simulate", help="Compare learned and true trajectories")
    p.add_argument("--coefficients", required=True, help="Coefficient JSON written by fit or sweep")
    p.add_argument("--x0", help="Comma-separated initial state")
    p.add_argument("--t-max", type=float)
    p.add_argument("--dt", type=float, help="Output time step")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="Trajectory CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="Recompute metrics of saved coefficients on a saved dataset")
    p.add_argument("--coefficients", required=True)
    p.add_argument("--dataset", required=True, help="Directory written by generate")
    p.add_argument("--config", help="TOML configuration providing the estimator settings")
    p.add_argument("--zero-tol", type=float)
    p.add_argument("--out", help="Metrics JSON path")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("estimate-study", help="Accuracy of derivative and integral estimators")
    _add_common(p)
    p.add_argument("--etas", default="1e-8,1e-6,1e-4,1e-2")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--degree", type=int, default=8)
    p.set_defaults(func=cmd_estimate_study)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the command-line interface."""
    # Load environment variables
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or env_log_level()).upper(), format=LOG_FORMAT)

    # Set up signal handler
    signal.signal(signal.SIGINT, signal_handler)

    try:
        return args.func(args)
    except SparseDynError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
