import numpy as np
import pytest

from constraints.polytope import build_polytope
from core.errors import InputError
from problem.regression import default_radius
from solvers.registry import (
    FISTA_GRID,
    SOLVER_MAP,
    STLSQ_GRID,
    get_solver,
    normalize_solver_name,
    run_solver,
)


@pytest.mark.parametrize("raw, expected", [("BCG", "bcg"), ("bcg-c", "bcg_c"), (" Stlsq ", "stlsq"), ("bcg c", "bcg_c")])
def test_normalize_solver_name(raw, expected):
    assert normalize_solver_name(raw) == expected


def test_unknown_solver():
    with pytest.raises(InputError, match="Available solvers"):
        normalize_solver_name("lasso-lars")


def test_entries():
    assert get_solver("bcg_c").constrained
    assert get_solver("fista").tuned and get_solver("fista").grid == FISTA_GRID
    assert not any(SOLVER_MAP[name].tuned for name in ("bcg", "bcg_c", "fccg", "cg"))


def test_default_grids():
    assert len(STLSQ_GRID) == 15 and len(FISTA_GRID) == 19
    assert STLSQ_GRID[0] == pytest.approx(1e-6) and STLSQ_GRID[-1] == pytest.approx(10.0)
    assert FISTA_GRID[0] == pytest.approx(1e-8)
    assert list(STLSQ_GRID) == sorted(STLSQ_GRID)


@pytest.mark.parametrize("name", ["bcg", "bcg_c", "fccg", "cg"])
def test_run_conditional_gradient_solvers(name, make_problem):
    problem, _ = make_problem()
    polytope = build_polytope(default_radius(problem), shape=(problem.n, problem.d))
    report = run_solver(name, problem, polytope, max_iters=50)
    assert report.solver == name
    assert report.omega.shape == (problem.n, problem.d)


@pytest.mark.parametrize("name, value", [("STLSQ", 0.1), ("fista", 1e-3)])
def test_run_tuned_solvers(name, value, make_problem):
    problem, _ = make_problem()
    report = run_solver(name, problem, hyperparameter=value)
    assert report.solver == name.lower()
    assert report.hyperparameter == value


def test_run_solver_requirements(make_problem):
    problem, _ = make_problem()
    with pytest.raises(InputError):
        run_solver("stlsq", problem)
    with pytest.raises(InputError):
        run_solver("bcg", problem)


def test_run_solver_passes_options(make_problem):
    problem, _ = make_problem(noise=0.3)
    polytope = build_polytope(1.0, shape=(problem.n, problem.d))
    report = run_solver("cg", problem, polytope, max_iters=3, gap_tol=0.0)
    assert report.iterations == 3
    assert np.isfinite(report.fw_gap)
