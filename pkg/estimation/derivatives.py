"""
Time-derivative estimation from sampled (noisy) trajectories.

Every function works on one experiment at a time: a d x m matrix whose
columns are samples on a uniform time grid. Stencils never reach across
experiments; callers concatenate per-experiment results afterwards.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.signal import savgol_filter

from core.errors import InputError

logger = logging.getLogger(__name__)

# Relative tolerance on step-size variation for a grid to count as uniform.
UNIFORM_RTOL = 1e-6


class DerivativeMethod(str, Enum):
    CENTRAL_DIFF = "central_diff"
    LOCAL_POLY = "local_poly"
    EXACT = "exact"


class Quadrature(str, Enum):
    TRAPEZOID = "trapezoid"
    SIMPSON = "simpson"
    LOCAL_POLY_INTEGRAL = "local_poly_integral"


class VelocitySource(str, Enum):
    """Where second-order problems take the first derivative from."""

    ESTIMATED = "estimated"
    OBSERVED = "observed"


@dataclass(frozen=True)
class EstimatorSpec:
    """How derivative targets and integral features are computed.

    Args:
        method: Differentiation rule. EXACT reads the clean derivatives stored
            with each experiment and is meant for oracle checks.
        degree: Local polynomial degree.
        window: Odd number of points per local fit; defaults to 2*degree+1.
        deriv_order: 1 or 2.
        quadrature: Rule used to build cumulative integrals.
        velocity: ESTIMATED differentiates the states (the default), OBSERVED
            uses the measured velocities of second-order datasets.
    """

    method: DerivativeMethod = DerivativeMethod.LOCAL_POLY
    degree: int = 8
    window: Optional[int] = None
    deriv_order: int = 1
    quadrature: Quadrature = Quadrature.LOCAL_POLY_INTEGRAL
    velocity: VelocitySource = VelocitySource.ESTIMATED

    def __post_init__(self):
        object.__setattr__(self, "method", DerivativeMethod(self.method))
        object.__setattr__(self, "quadrature", Quadrature(self.quadrature))
        object.__setattr__(self, "velocity", VelocitySource(self.velocity))
        if self.degree < 1:
            raise InputError(f"Polynomial degree must be >= 1, got {self.degree}")
        if self.window is None:
            object.__setattr__(self, "window", 2 * self.degree + 1)
        if self.window % 2 != 1 or self.window <= self.degree:
            raise InputError(f"Window must be odd and larger than the degree, got window={self.window}, degree={self.degree}")
        if self.deriv_order not in (1, 2):
            raise InputError(f"Derivative order must be 1 or 2, got {self.deriv_order}")

    def with_order(self, deriv_order: int) -> "EstimatorSpec":
        return EstimatorSpec(self.method, self.degree, self.window, deriv_order, self.quadrature, self.velocity)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "degree": self.degree,
            "window": self.window,
            "deriv_order": self.deriv_order,
            "quadrature": self.quadrature.value,
            "velocity": self.velocity.value,
        }


def uniform_step(t: np.ndarray) -> float:
    """Step of a uniform grid; InputError if the grid is not uniform."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise InputError("A time grid needs at least two points")
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not dt > 0 or np.max(np.abs(steps - dt)) > UNIFORM_RTOL * dt:
        raise InputError("Derivative estimation requires a uniform, increasing time grid")
    return float(dt)


def _central_first(Y: np.ndarray, dt: float) -> np.ndarray:
    out = np.gradient(Y, dt, axis=1, edge_order=2)
    # third-order one-sided stencils at both ends
    out[:, 0] = (-11 * Y[:, 0] + 18 * Y[:, 1] - 9 * Y[:, 2] + 2 * Y[:, 3]) / (6 * dt)
    out[:, -1] = (11 * Y[:, -1] - 18 * Y[:, -2] + 9 * Y[:, -3] - 2 * Y[:, -4]) / (6 * dt)
    return out


def _central_second(Y: np.ndarray, dt: float) -> np.ndarray:
    out = np.empty_like(Y)
    out[:, 1:-1] = (Y[:, 2:] - 2 * Y[:, 1:-1] + Y[:, :-2]) / dt**2
    out[:, 0] = (2 * Y[:, 0] - 5 * Y[:, 1] + 4 * Y[:, 2] - Y[:, 3]) / dt**2
    out[:, -1] = (2 * Y[:, -1] - 5 * Y[:, -2] + 4 * Y[:, -3] - Y[:, -4]) / dt**2
    return out


def estimate_derivative(Y: np.ndarray, t: np.ndarray, spec: EstimatorSpec) -> np.ndarray:
    """Estimate the spec.deriv_order-th time derivative of every row of Y.

    CENTRAL_DIFF uses second-order central differences in the interior and
    one-sided differences at the ends. LOCAL_POLY fits a degree-`degree`
    polynomial by least squares over a sliding window, clamped to the ends of
    the experiment, and differentiates the fit.

    Args:
        Y: d x m samples of one experiment.
        t: Uniform time grid of length m.
        spec: Estimator settings.

    Returns:
        d x m matrix of derivative estimates.

    Raises:
        InputError: If the grid is too short for the stencil, not uniform, or
            the method is EXACT (no samples carry exact derivatives).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != np.asarray(t).size:
        raise InputError(f"Samples ({Y.shape[1]}) and time grid ({np.asarray(t).size}) differ in length")
    if spec.method == DerivativeMethod.EXACT:
        raise InputError("Exact derivatives come from a dataset, not from samples")
    dt = uniform_step(t)
    m = Y.shape[1]

    if spec.method == DerivativeMethod.CENTRAL_DIFF:
        if m < 4:
            raise InputError(f"Central differences need at least 4 samples, got {m}")
        return _central_first(Y, dt) if spec.deriv_order == 1 else _central_second(Y, dt)

    if spec.window > m:
        raise InputError(f"Local polynomial window {spec.window} exceeds the {m} samples of the experiment")
    return savgol_filter(Y, spec.window, spec.degree, deriv=spec.deriv_order, delta=dt, axis=1, mode="interp")


def _observed_velocity(experiment) -> np.ndarray:
    if experiment.w is None:
        raise InputError("Observed velocities requested but the dataset has none")
    return experiment.w


def experiment_velocity(experiment, spec: EstimatorSpec, second_order: bool = False) -> np.ndarray:
    """First time derivative of one experiment's states.

    EXACT returns the stored clean derivative; OBSERVED velocities are only
    used for second-order models, which measure them.
    """
    if spec.method == DerivativeMethod.EXACT:
        return experiment.x_dot
    if second_order and spec.velocity == VelocitySource.OBSERVED:
        return _observed_velocity(experiment)
    return estimate_derivative(experiment.y, experiment.t, spec.with_order(1))


def experiment_acceleration(experiment, spec: EstimatorSpec) -> np.ndarray:
    """Second time derivative of a second-order experiment."""
    if spec.method == DerivativeMethod.EXACT:
        if experiment.x_ddot is None:
            raise InputError("Experiment stores no second derivatives")
        return experiment.x_ddot
    if spec.velocity == VelocitySource.OBSERVED:
        return estimate_derivative(_observed_velocity(experiment), experiment.t, spec.with_order(1))
    return estimate_derivative(experiment.y, experiment.t, spec.with_order(2))


def relative_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    """||estimate - reference||_F / ||reference||_F (absolute error if the reference is zero)."""
    norm = np.linalg.norm(reference)
    diff = np.linalg.norm(np.asarray(estimate) - np.asarray(reference))
    return float(diff / norm) if norm > 0 else float(diff)
