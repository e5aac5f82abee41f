import numpy as np
import pytest

from core.errors import InputError
from problem.regression import RegressionProblem, least_squares, objective
from solvers.baselines import fista_solve, penalized_objective, stlsq_solve


def test_stlsq_threshold_zero_is_least_squares(make_problem):
    problem, _ = make_problem(noise=0.2)
    report = stlsq_solve(problem, 0.0)
    np.testing.assert_allclose(report.omega, least_squares(problem), atol=1e-12)
    assert report.converged and report.iterations == 1


def test_stlsq_single_pass():
    problem = RegressionProblem(np.eye(2), np.array([[1.0, 0.001]]))
    report = stlsq_solve(problem, 0.01)
    np.testing.assert_allclose(report.omega[:, 0], [1.0, 0.0])
    assert report.hyperparameter == 0.01


def test_stlsq_is_idempotent_on_its_support(make_problem):
    problem, _ = make_problem(n=8, noise=0.3, seed=2)
    report = stlsq_solve(problem, 0.3)
    for j in range(problem.d):
        support = np.flatnonzero(report.omega[:, j])
        if not support.size:
            continue
        restricted = RegressionProblem(problem.A[support], problem.B[j : j + 1])
        again = stlsq_solve(restricted, 0.3)
        np.testing.assert_allclose(again.omega[:, 0], report.omega[support, j], atol=1e-12)


def test_stlsq_removed_features_stay_out(make_problem):
    problem, omega = make_problem(n=8, noise=0.0, seed=3, density=0.3)
    report = stlsq_solve(problem, 1e-6)
    assert set(zip(*np.nonzero(report.omega))) <= set(zip(*np.nonzero(omega)))


def test_stlsq_all_thresholded(make_problem):
    problem, _ = make_problem()
    report = stlsq_solve(problem, 1e6)
    assert not np.any(report.omega)
    assert "all_thresholded" in report.flags


def test_stlsq_ridge(make_problem):
    problem, _ = make_problem(noise=0.2)
    plain = stlsq_solve(problem, 0.0)
    ridged = stlsq_solve(problem, 0.0, ridge=10.0)
    assert np.abs(ridged.omega).sum() < np.abs(plain.omega).sum()


def test_stlsq_rejects_bad_arguments(make_problem):
    problem, _ = make_problem()
    with pytest.raises(InputError):
        stlsq_solve(problem, -1.0)
    with pytest.raises(InputError):
        stlsq_solve(problem, 0.1, ridge=-1.0)


def test_fista_large_penalty_gives_zero(make_problem):
    problem, _ = make_problem(noise=0.1)
    lam = 2.0 * np.max(np.abs(problem.C))
    report = fista_solve(problem, lam)
    assert not np.any(report.omega)
    assert report.converged


def test_fista_without_penalty_matches_least_squares(make_problem):
    problem, _ = make_problem(noise=0.3, seed=4)
    report = fista_solve(problem, 0.0, tol=1e-14)
    assert objective(problem, report.omega) == pytest.approx(objective(problem, least_squares(problem)), abs=1e-6)


def test_fista_satisfies_optimality_conditions(make_problem):
    problem, _ = make_problem(n=8, d=2, noise=0.3, seed=5)
    lam = 0.2
    report = fista_solve(problem, lam, tol=1e-14, max_iters=200000)
    omega = report.omega
    grad = 2.0 * (problem.H @ omega - problem.C)
    on = omega != 0
    residual = np.concatenate(
        [
            np.abs(grad[on] + lam * np.sign(omega[on])),
            np.maximum(np.abs(grad[~on]) - lam, 0.0),
        ]
    )
    assert residual.max() <= 1e-5


def test_fista_objective_decreases(make_problem):
    problem, _ = make_problem(noise=0.3, seed=6)
    report = fista_solve(problem, 0.05, tol=1e-12)
    assert penalized_objective(problem, report.omega, 0.05) <= penalized_objective(problem, np.zeros_like(report.omega), 0.05)
    assert report.iterations == len(report.objective_trace)


def test_fista_iteration_cap(make_problem):
    problem, _ = make_problem(noise=0.3)
    report = fista_solve(problem, 0.0, tol=0.0, max_iters=3)
    assert not report.converged
    assert "iteration_cap" in report.flags


def test_fista_zero_features():
    problem = RegressionProblem(np.zeros((2, 5)), np.ones((1, 5)))
    report = fista_solve(problem, 0.1)
    assert report.converged and not np.any(report.omega)


def test_fista_rejects_negative_penalty(make_problem):
    problem, _ = make_problem()
    with pytest.raises(InputError):
        fista_solve(problem, -0.1)
