"""
Differential and integral LASSO regression problems.

A problem pairs an n x M feature matrix A (rows normalized) with a d x M
target matrix B and an l1 radius alpha. The objective over n x d coefficient
matrices Omega is

    f(Omega) = ||B - Omega^T A||_F^2
             = tr(Omega^T H Omega) - 2 tr(Omega^T C) + ||B||_F^2,   H = A A^T, C = A B^T

with gradient 2 (H Omega - C) = -2 A (B - Omega^T A)^T. H and C are cached
at construction so every solver iteration costs O(n^2 d) regardless of M.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from scipy.linalg import lstsq

from core.errors import DegenerateProblemError, InputError
from dynamics.experiments import Dataset
from estimation.derivatives import EstimatorSpec, experiment_acceleration, experiment_velocity
from estimation.quadrature import build_delta_targets, build_gamma
from library.dictionary import CoefficientMatrix, Dictionary, RowScales, evaluate, row_normalize

logger = logging.getLogger(__name__)

# Relative rank cutoff of the pivoted-QR least-squares solve.
LSTSQ_COND = 1e-10


class Formulation(str, Enum):
    DIFFERENTIAL = "differential"
    INTEGRAL = "integral"


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Immutable regression instance; H, C and ||B||^2 are derived on creation.

    Args:
        A: n x M normalized features (Psi(Y) or Gamma(Y)).
        B: d x M targets (Y', Y'', dY or dY').
        formulation: Differential or integral.
        ode_order: 1 or 2.
        scales: Divisors applied to the raw feature rows.
        alpha: l1 radius, None until chosen.
    """

    A: np.ndarray
    B: np.ndarray
    formulation: Formulation = Formulation.DIFFERENTIAL
    ode_order: int = 1
    scales: Optional[RowScales] = None
    alpha: Optional[float] = None
    H: np.ndarray = field(init=False, repr=False)
    C: np.ndarray = field(init=False, repr=False)
    b_norm_sq: float = field(init=False, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape[1] != B.shape[1]:
            raise InputError(f"Features have {A.shape[1]} columns but targets have {B.shape[1]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise InputError("Regression matrices contain non-finite entries")
        if self.alpha is not None and self.alpha < 0:
            raise InputError(f"l1 radius must be nonnegative, got {self.alpha}")
        object.__setattr__(self, "formulation", Formulation(self.formulation))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.scales is None:
            object.__setattr__(self, "scales", RowScales.ones(A.shape[0]))
        object.__setattr__(self, "H", A @ A.T)
        object.__setattr__(self, "C", A @ B.T)
        object.__setattr__(self, "b_norm_sq", float(np.sum(B * B)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def columns(self) -> int:
        return self.A.shape[1]

    def with_alpha(self, alpha: float) -> "RegressionProblem":
        return replace(self, alpha=float(alpha))

    def check_shape(self, omega: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (self.n, self.d):
            raise InputError(f"Coefficient matrix must be {self.n} x {self.d}, got {omega.shape}")
        return omega


@dataclass(frozen=True)
class LineSearchResult:
    gamma: float
    null_direction: bool = False
    clipped: bool = False


def _experiment_blocks(experiment, dictionary: Dictionary, formulation: Formulation, spec: EstimatorSpec, order: int):
    features = evaluate(dictionary, experiment.y)
    if formulation == Formulation.DIFFERENTIAL:
        if order == 1:
            return features, experiment_velocity(experiment, spec)
        return features, experiment_acceleration(experiment, spec)
    gamma = build_gamma(features, experiment.t, spec)
    if order == 1:
        return gamma, build_delta_targets(experiment.y, experiment.t, order=1)
    velocity = experiment_velocity(experiment, spec, second_order=True)
    return gamma, build_delta_targets(experiment.y, experiment.t, order=2, W=velocity)


def build_problem(
    dataset: Dataset,
    dictionary: Dictionary,
    formulation: Formulation = Formulation.DIFFERENTIAL,
    estimator_spec: Optional[EstimatorSpec] = None,
    scales: Optional[RowScales] = None,
    alpha: Optional[float] = None,
) -> RegressionProblem:
    """Assemble (A, B) from the noisy samples of every experiment.

    Per-experiment blocks are concatenated column-wise and the feature rows
    normalized to unit standard deviation over all columns. Pass the scales of
    a training problem to build validation and test problems in the same
    coefficient space.

    Raises:
        InputError: Empty dataset or dictionary/model dimension mismatch;
            estimator errors propagate.
    """
    if not dataset.experiments:
        raise InputError("Cannot build a regression problem from an empty dataset")
    if dictionary.dimension != dataset.model.dimension:
        raise InputError(f"Dictionary is over {dictionary.dimension} variables, model has {dataset.model.dimension}")
    spec = estimator_spec or EstimatorSpec()
    formulation = Formulation(formulation)
    order = dataset.model.order

    blocks = [_experiment_blocks(e, dictionary, formulation, spec, order) for e in dataset.experiments]
    A_raw = np.hstack([a for a, _ in blocks])
    B = np.hstack([b for _, b in blocks])
    if scales is None:
        if A_raw.shape[1] >= 2:
            A, scales = row_normalize(A_raw)
        else:
            A, scales = A_raw, RowScales.ones(A_raw.shape[0])
    else:
        if len(scales) != A_raw.shape[0]:
            raise InputError(f"{len(scales)} row scales supplied for {A_raw.shape[0]} features")
        A = A_raw / scales.scales[:, None]
    logger.debug("Built %s problem: n=%d d=%d columns=%d", formulation.value, A.shape[0], B.shape[0], A.shape[1])
    return RegressionProblem(A, B, formulation, order, scales, alpha)


def objective(problem: RegressionProblem, omega: CoefficientMatrix) -> float:
    """Squared Frobenius residual ||B - Omega^T A||_F^2."""
    omega = problem.check_shape(omega)
    residual = problem.B - omega.T @ problem.A
    return float(np.sum(residual * residual))


def quadratic_objective(problem: RegressionProblem, omega: CoefficientMatrix) -> float:
    """Objective through the cached Gram matrices; O(n^2 d) per call."""
    return float(np.sum(omega * (problem.H @ omega)) - 2.0 * np.sum(omega * problem.C) + problem.b_norm_sq)


def gradient(problem: RegressionProblem, omega: CoefficientMatrix) -> np.ndarray:
    """Exact gradient -2 A (B - Omega^T A)^T of the objective."""
    omega = problem.check_shape(omega)
    return 2.0 * (problem.H @ omega - problem.C)


def least_squares(problem: RegressionProblem) -> CoefficientMatrix:
    """Minimum-norm least-squares solution of Omega^T A = B via pivoted QR."""
    solution, _, rank, _ = lstsq(problem.A.T, problem.B.T, cond=LSTSQ_COND, lapack_driver="gelsy")
    if rank < problem.n:
        logger.debug("Feature matrix is rank deficient: rank %d of %d", rank, problem.n)
    return solution


def default_radius(problem: RegressionProblem) -> float:
    """Twice the l_{1,1} norm of the least-squares coefficients.

    Raises:
        DegenerateProblemError: If every feature row is zero, or the
            least-squares coefficients vanish (zero targets) so no positive
            radius follows from the data.
    """
    if not np.any(problem.A):
        raise DegenerateProblemError("All features are zero; the problem carries no information")
    alpha = 2.0 * float(np.sum(np.abs(least_squares(problem))))
    if not alpha > 0.0:
        raise DegenerateProblemError("Least-squares coefficients vanish; set the l1 radius explicitly")
    return alpha


def exact_linesearch(
    problem: RegressionProblem,
    omega: CoefficientMatrix,
    direction: np.ndarray,
    grad: Optional[np.ndarray] = None,
) -> LineSearchResult:
    """Minimize f(Omega + gamma D) over gamma in [0, 1] in closed form.

    gamma = clamp(-tr(D^T grad f(Omega)) / (2 ||D^T A||_F^2), 0, 1). A
    direction in the null space of A^T gives gamma = 0 with null_direction set.
    """
    grad = gradient(problem, omega) if grad is None else grad
    curvature = float(np.sum(direction * (problem.H @ direction)))
    if curvature <= 0.0:
        return LineSearchResult(0.0, null_direction=True)
    step = -0.5 * float(np.sum(direction * grad)) / curvature
    clipped = step > 1.0
    return LineSearchResult(min(max(step, 0.0), 1.0), clipped=clipped)


def validation_residual(problem: RegressionProblem, omega: CoefficientMatrix) -> float:
    """Objective on a held-out problem built with the training scales."""
    return objective(problem, omega)


def save_problem(problem: RegressionProblem, directory: str, dictionary: Optional[Dictionary] = None) -> str:
    """Write header.json plus A.csv and B.csv; returns the header path."""
    os.makedirs(directory, exist_ok=True)
    labels = dictionary.labels if dictionary is not None else [f"psi_{i}" for i in range(problem.n)]
    pd.DataFrame(problem.A.T, columns=labels).to_csv(os.path.join(directory, "A.csv"), index=False)
    pd.DataFrame(problem.B.T, columns=[f"x_{j + 1}" for j in range(problem.d)]).to_csv(
        os.path.join(directory, "B.csv"), index=False
    )
    header = {
        "formulation": problem.formulation.value,
        "ode_order": problem.ode_order,
        "alpha": problem.alpha,
        "scales": [float(s) for s in problem.scales.scales],
        "shape": {"n": problem.n, "d": problem.d, "columns": problem.columns},
        "dictionary": dictionary.name if dictionary is not None else None,
    }
    path = os.path.join(directory, "header.json")
    with open(path, "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
    return path


def load_problem(directory: str) -> RegressionProblem:
    with open(os.path.join(directory, "header.json")) as f:
        header = json.load(f)
    A = pd.read_csv(os.path.join(directory, "A.csv"), float_precision="round_trip").to_numpy().T
    B = pd.read_csv(os.path.join(directory, "B.csv"), float_precision="round_trip").to_numpy().T
    return RegressionProblem(
        A,
        B,
        Formulation(header["formulation"]),
        header["ode_order"],
        RowScales(np.asarray(header["scales"], dtype=float)),
        header["alpha"],
    )
