"""Result files: results.csv, aggregate.csv, failures.csv, coefficients/*.json and trajectory CSVs."""

import json
import logging
import os
from typing import Dict

import pandas as pd

from core.harness import ResultsBundle, TrajectoryComparison
from solvers.conditional_gradient import SolveReport

logger = logging.getLogger(__name__)


def write_frame(frame: pd.DataFrame, path: str) -> str:
    """CSV with shortest round-trip floats; NaN is written as "nan"."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame.to_csv(path, index=False, na_rep="nan")
    return path


def write_json(payload: dict, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(json.dumps(payload, indent=2, sort_keys=True))
        f.write("\n")
    return path


def write_coefficients(payloads: Dict[str, dict], output_dir: str) -> int:
    for name, payload in payloads.items():
        write_json(payload, os.path.join(output_dir, "coefficients", f"{name}.json"))
    return len(payloads)


def write_bundle(bundle: ResultsBundle, output_dir: str) -> Dict[str, str]:
    """Write every table of a sweep; returns the paths by kind."""
    paths = {
        "results": write_frame(bundle.results, os.path.join(output_dir, "results.csv")),
        "aggregate": write_frame(bundle.aggregate, os.path.join(output_dir, "aggregate.csv")),
        "failures": write_frame(bundle.failures, os.path.join(output_dir, "failures.csv")),
    }
    count = write_coefficients(bundle.coefficients, output_dir)
    logger.info("Wrote %d result rows and %d coefficient files to %s", len(bundle.results), count, output_dir)
    return paths


def write_report(report: SolveReport, path: str, include_timing: bool = False) -> str:
    """SolveReport JSON with its objective, gap and active-set traces."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(report.to_json(include_timing))
        f.write("\n")
    return path


def write_trajectory(comparison: TrajectoryComparison, path: str) -> str:
    return write_frame(comparison.to_frame(), path)


def read_coefficients(path: str) -> dict:
    with open(path) as f:
        return json.load(f)
