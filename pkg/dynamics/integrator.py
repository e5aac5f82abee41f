"""Adaptive high-order Runge-Kutta integration of the benchmark models."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from core.errors import InputError, IntegrationError
from dynamics.models import ModelSpec, rhs

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-13

# States beyond this magnitude are treated as a blow-up of the dynamic.
BLOWUP_NORM = 1e8


@dataclass(frozen=True)
class Trajectory:
    """States on a time grid; v holds velocities for second-order models."""

    t: np.ndarray
    x: np.ndarray
    v: Optional[np.ndarray] = None


def _check_grid(t_grid: np.ndarray) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise InputError("Time grid must be a non-empty 1-D array")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise InputError("Time grid must be strictly increasing")
    return t


def integrate_rhs(
    fun: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    t_grid: np.ndarray,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Integrate the autonomous system y' = fun(y) and sample it on t_grid.

    Uses the Dormand-Prince 8(5,3) embedded pair with absolute and relative
    tolerance both equal to tol.

    Returns:
        len(x0) x len(t_grid) array of states.

    Raises:
        IntegrationError: If the step size underflows or the state blows up.
    """
    if not tol > 0:
        raise InputError(f"Integration tolerance must be positive, got {tol}")
    t = _check_grid(t_grid)
    y0 = np.asarray(x0, dtype=float).ravel()
    if t.size == 1:
        return y0[:, None].copy()

    def blowup(_, y):
        return BLOWUP_NORM - np.max(np.abs(y))

    blowup.terminal = True

    sol = solve_ivp(
        lambda _, y: fun(y),
        (t[0], t[-1]),
        y0,
        method="DOP853",
        t_eval=t,
        rtol=tol,
        atol=tol,
        events=blowup,
    )
    reached = sol.t[-1] if sol.t.size else t[0]
    if sol.status != 0 or sol.y.shape[1] != t.size or not np.all(np.isfinite(sol.y)):
        failure_time = float(sol.t_events[0][0]) if sol.status == 1 and sol.t_events[0].size else float(reached)
        finite = np.all(np.isfinite(sol.y), axis=0)
        keep = int(np.argmin(finite)) if not np.all(finite) else sol.y.shape[1]
        raise IntegrationError(
            f"Integration stopped at t={failure_time:.6g}: {sol.message}",
            time=failure_time,
            t=sol.t[:keep],
            states=sol.y[:, :keep],
        )
    return sol.y


def integrate(
    model: ModelSpec,
    x0: np.ndarray,
    t_grid: np.ndarray,
    v0: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
) -> Trajectory:
    """Simulate a benchmark model from x0 (and v0 for second-order models).

    Second-order models are integrated in first-order form on the doubled
    state (x, x').
    """
    d = model.dimension
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (d,):
        raise InputError(f"Initial state must have length {d}, got shape {x0.shape}")
    t = _check_grid(t_grid)

    if model.order == 1:
        if v0 is not None:
            raise InputError(f"{model.kind.value} is first order; no initial velocity expected")
        return Trajectory(t, integrate_rhs(lambda y: rhs(model, y), x0, t, tol))

    v0 = np.zeros(d) if v0 is None else np.asarray(v0, dtype=float)
    if v0.shape != (d,):
        raise InputError(f"Initial velocity must have length {d}, got shape {v0.shape}")

    def first_order_form(y):
        return np.concatenate([y[d:], rhs(model, y[:d], y[d:])])

    states = integrate_rhs(first_order_form, np.concatenate([x0, v0]), t, tol)
    return Trajectory(t, states[:d], states[d:])
