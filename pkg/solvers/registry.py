from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from constraints.polytope import Polytope
from core.errors import InputError
from problem.regression import RegressionProblem
from solvers.baselines import fista_solve, stlsq_solve
from solvers.conditional_gradient import SolveReport, bcg_solve, cg_solve, fccg_solve

STLSQ_GRID = tuple(float(v) for v in np.logspace(-6, 1, 15))
FISTA_GRID = tuple(float(v) for v in np.logspace(-8, 1, 19))


@dataclass(frozen=True)
class SolverEntry:
    """A registered solver.

    Args:
        label: Name used in result tables.
        constrained: Whether the benchmark's structural constraints are imposed.
        tuned: Whether a hyperparameter is picked on validation data.
        grid: Default hyperparameter grid for tuned solvers.
    """

    label: str
    constrained: bool = False
    tuned: bool = False
    grid: tuple = ()


# Map solver names to their entries
SOLVER_MAP: Dict[str, SolverEntry] = {
    "bcg": SolverEntry("bcg"),
    "bcg_c": SolverEntry("bcg_c", constrained=True),
    "fccg": SolverEntry("fccg"),
    "cg": SolverEntry("cg"),
    "stlsq": SolverEntry("stlsq", tuned=True, grid=STLSQ_GRID),
    "fista": SolverEntry("fista", tuned=True, grid=FISTA_GRID),
}


def normalize_solver_name(name: str) -> str:
    """Lower-case a solver name with spaces and dashes turned into underscores.

    Raises:
        InputError: If the name is not registered.
    """
    normalized_name = name.strip().lower().replace(" ", "_").replace("-", "_")
    if normalized_name not in SOLVER_MAP:
        raise InputError(f"Unknown solver '{name}'. Available solvers: {list(SOLVER_MAP.keys())}")
    return normalized_name


def get_solver(name: str) -> SolverEntry:
    return SOLVER_MAP[normalize_solver_name(name)]


def run_solver(
    name: str,
    problem: RegressionProblem,
    polytope: Optional[Polytope] = None,
    hyperparameter: Optional[float] = None,
    monitor: Optional[RegressionProblem] = None,
    **options,
) -> SolveReport:
    """Run a registered solver.

    Args:
        name: Registered solver name (e.g. "BCG", "bcg-c", "stlsq").
        problem: Training problem.
        polytope: Feasible region; required by the conditional gradient family.
        hyperparameter: STLSQ threshold or FISTA penalty weight.
        monitor: Validation problem whose objective is traced per iteration.
        options: Passed through to the solver (max_iters, gap_tol, ...).

    Returns:
        SolveReport labelled with the registered name.
    """
    normalized_name = normalize_solver_name(name)
    entry = SOLVER_MAP[normalized_name]
    if entry.tuned:
        if hyperparameter is None:
            raise InputError(f"Solver '{normalized_name}' needs a hyperparameter")
        solve: Callable[..., SolveReport] = stlsq_solve if normalized_name == "stlsq" else fista_solve
        report = solve(problem, hyperparameter, **options)
    else:
        if polytope is None:
            raise InputError(f"Solver '{normalized_name}' needs a feasible polytope")
        solve = {"bcg": bcg_solve, "bcg_c": bcg_solve, "fccg": fccg_solve, "cg": cg_solve}[normalized_name]
        report = solve(problem, polytope, monitor=monitor, **options)
    report.solver = entry.label
    return report
