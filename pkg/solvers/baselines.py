"""
Reference sparse-regression methods.

* stlsq_solve: sequentially thresholded least squares. Each state column is
  fitted by least squares on its active features; coefficients below the
  threshold are zeroed and dropped for good, until nothing changes.
* fista_solve: accelerated proximal gradient (soft thresholding) on the
  penalized problem ||B - Omega^T A||_F^2 + lam ||Omega||_{1,1}.
"""

import logging
import time

import numpy as np
from scipy.linalg import lstsq, solve

from core.errors import InputError
from problem.regression import LSTSQ_COND, RegressionProblem, objective
from solvers.conditional_gradient import SolveReport

logger = logging.getLogger(__name__)

STLSQ_MAX_ROUNDS = 200


def _fit_column(problem: RegressionProblem, active: np.ndarray, j: int, ridge: float) -> np.ndarray:
    if ridge > 0.0:
        H = problem.H[np.ix_(active, active)] + ridge * np.eye(active.size)
        return solve(H, problem.C[active, j], assume_a="pos")
    design = problem.A[active].T
    coef, _, _, _ = lstsq(design, problem.B[j], cond=LSTSQ_COND, lapack_driver="gelsy")
    return coef


def stlsq_solve(
    problem: RegressionProblem,
    threshold: float,
    max_rounds: int = STLSQ_MAX_ROUNDS,
    ridge: float = 0.0,
) -> SolveReport:
    """Sequentially thresholded least squares.

    Args:
        problem: Regression problem (alpha is ignored).
        threshold: Coefficients with |value| < threshold are removed.
        max_rounds: Cap on least-squares/threshold rounds per column.
        ridge: Optional l2 weight, turning each fit into ridge regression.

    Returns:
        Report whose iterations is the largest round count over columns; the
        flag all_thresholded marks columns that lost every feature.
    """
    if not threshold >= 0:
        raise InputError(f"Threshold must be nonnegative, got {threshold}")
    if ridge < 0:
        raise InputError(f"Ridge weight must be nonnegative, got {ridge}")
    start = time.perf_counter()
    report = SolveReport("stlsq", np.zeros((problem.n, problem.d)), hyperparameter=float(threshold))
    omega = report.omega
    for j in range(problem.d):
        active = np.arange(problem.n)
        rounds = 0
        while active.size and rounds < max_rounds:
            rounds += 1
            coef = _fit_column(problem, active, j, ridge)
            keep = np.abs(coef) >= threshold
            omega[:, j] = 0.0
            omega[active[keep], j] = coef[keep]
            if keep.all():
                break
            active = active[keep]
        if not active.size:
            report.flag("all_thresholded", warn=False)
            logger.debug("stlsq: every feature of column %d fell below %g", j, threshold)
        report.iterations = max(report.iterations, rounds)
    report.converged = True
    report.objective_trace.append(objective(problem, omega))
    report.seconds = time.perf_counter() - start
    return report


def _soft_threshold(X: np.ndarray, tau: float) -> np.ndarray:
    return np.sign(X) * np.maximum(np.abs(X) - tau, 0.0)


def penalized_objective(problem: RegressionProblem, omega: np.ndarray, lam: float) -> float:
    return objective(problem, omega) + lam * float(np.sum(np.abs(omega)))


def fista_solve(
    problem: RegressionProblem,
    lam: float,
    tol: float = 1e-8,
    max_iters: int = 50000,
) -> SolveReport:
    """FISTA on the l1-penalized least-squares problem.

    Stops when one iteration lowers the penalized objective by less than tol.
    The momentum is restarted whenever the objective goes up.
    """
    if not lam >= 0:
        raise InputError(f"Penalty weight must be nonnegative, got {lam}")
    start = time.perf_counter()
    report = SolveReport("fista", np.zeros((problem.n, problem.d)), hyperparameter=float(lam))
    L = 2.0 * float(np.linalg.eigvalsh(problem.H)[-1])
    if L <= 0.0:
        report.converged = True
        report.objective_trace.append(objective(problem, report.omega))
        return report

    x = report.omega
    y = x.copy()
    t = 1.0
    value = penalized_objective(problem, x, lam)
    for k in range(1, max_iters + 1):
        grad = 2.0 * (problem.H @ y - problem.C)
        x_next = _soft_threshold(y - grad / L, lam / L)
        next_value = penalized_objective(problem, x_next, lam)
        report.iterations = k
        if next_value > value:
            # restart: plain proximal step from x
            grad = 2.0 * (problem.H @ x - problem.C)
            x_next = _soft_threshold(x - grad / L, lam / L)
            next_value = penalized_objective(problem, x_next, lam)
            t = 1.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_next + ((t - 1.0) / t_next) * (x_next - x)
        decrease = value - next_value
        x, value, t = x_next, next_value, t_next
        report.objective_trace.append(objective(problem, x))
        if decrease < tol:
            report.converged = True
            break
    else:
        report.flag("iteration_cap")

    report.omega = x
    report.seconds = time.perf_counter() - start
    return report
