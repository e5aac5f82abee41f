"""
Cumulative integrals of sampled features and the matching difference targets.

For samples at t_1 < ... < t_m, build_gamma returns an n x (m-1) matrix whose
column j approximates the integral of each feature from t_1 to t_{j+1};
build_delta_targets returns the matching differences value(t_{j+1}) - value(t_1).
"""

import logging
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, simpson

from core.errors import InputError
from dynamics.experiments import Dataset, contaminate
from dynamics.models import rhs
from estimation.derivatives import (
    DerivativeMethod,
    EstimatorSpec,
    Quadrature,
    estimate_derivative,
    relative_error,
)

logger = logging.getLogger(__name__)


@lru_cache(maxsize=64)
def _interval_weights(t_bytes: bytes, degree: int, window: int) -> np.ndarray:
    """(m-1) x m matrix mapping samples to integrals of local polynomial fits over each interval."""
    t = np.frombuffer(t_bytes, dtype=float)
    m = t.size
    half = window // 2
    weights = np.zeros((m - 1, m))
    powers = np.arange(degree + 1)
    for k in range(m - 1):
        start = min(max(k - half + 1, 0), m - window)
        local_t = t[start : start + window]
        center = 0.5 * (local_t[0] + local_t[-1])
        scale = 0.5 * (local_t[-1] - local_t[0])
        s = (local_t - center) / scale
        vandermonde = s[:, None] ** powers[None, :]
        a, b = (t[k] - center) / scale, (t[k + 1] - center) / scale
        q = scale * (b ** (powers + 1) - a ** (powers + 1)) / (powers + 1)
        weights[k, start : start + window] = q @ np.linalg.pinv(vandermonde)
    return weights


def _local_poly_cumulative(F: np.ndarray, t: np.ndarray, degree: int, window: int) -> np.ndarray:
    weights = _interval_weights(np.ascontiguousarray(t, dtype=float).tobytes(), degree, window)
    return np.cumsum(F @ weights.T, axis=1)


def _simpson_cumulative(F: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Composite Simpson over consecutive interval pairs; an unpaired final interval uses the trapezoid rule."""
    n, m = F.shape
    pairs = (m - 1) // 2
    idx = 2 * np.arange(pairs)[:, None] + np.arange(3)[None, :]
    panels = simpson(F[:, idx], x=np.broadcast_to(t[idx], (n, pairs, 3)), axis=-1)
    paired = np.cumsum(panels.reshape(n, pairs), axis=1)
    trapezoids = 0.5 * (F[:, :-1] + F[:, 1:]) * np.diff(t)
    out = np.empty((n, m - 1))
    out[:, 1::2] = paired
    out[:, 0::2] = np.hstack([np.zeros((n, 1)), paired])[:, : (m // 2)] + trapezoids[:, 0::2]
    return out


def build_gamma(features: np.ndarray, t: np.ndarray, spec: Optional[EstimatorSpec] = None) -> np.ndarray:
    """Cumulative integrals of every feature row of one experiment.

    Args:
        features: n x m feature samples (e.g. Psi(Y) of one experiment).
        t: Time grid of length m.
        spec: Selects the quadrature rule; defaults to local polynomial
            integration of degree 8.

    Returns:
        n x (m-1) matrix; column j approximates the integral from t_1 to t_{j+1}.

    Raises:
        InputError: On a malformed grid, or when the local polynomial window
            is longer than the experiment.
    """
    spec = spec or EstimatorSpec()
    F = np.atleast_2d(np.asarray(features, dtype=float))
    t = np.asarray(t, dtype=float)
    if t.size < 2 or F.shape[1] != t.size:
        raise InputError(f"Need at least two samples on a matching grid, got {F.shape[1]} samples and {t.size} times")
    if np.any(np.diff(t) <= 0):
        raise InputError("Time grid must be strictly increasing")

    if spec.quadrature == Quadrature.TRAPEZOID or (spec.quadrature == Quadrature.SIMPSON and t.size < 3):
        return cumulative_trapezoid(F, t, axis=1)
    if spec.quadrature == Quadrature.SIMPSON:
        return _simpson_cumulative(F, t)
    if spec.window > t.size:
        raise InputError(f"Local polynomial window {spec.window} exceeds the {t.size} samples of the experiment")
    return _local_poly_cumulative(F, t, spec.degree, spec.window)


def build_delta_targets(
    Y: np.ndarray,
    t: np.ndarray,
    order: int = 1,
    W: Optional[np.ndarray] = None,
    spec: Optional[EstimatorSpec] = None,
) -> np.ndarray:
    """Differences value(t_{j+1}) - value(t_1) for j = 1..m-1.

    First-order problems difference the states Y. Second-order problems
    difference the first-derivative samples W, which are estimated from Y with
    `spec` when not supplied.

    Raises:
        InputError: If order is 2 and neither W nor spec is given.
    """
    if order == 1:
        values = np.atleast_2d(np.asarray(Y, dtype=float))
    elif order == 2:
        if W is None:
            if spec is None or spec.method == DerivativeMethod.EXACT:
                raise InputError("Second-order difference targets need velocities or a derivative estimator")
            W = estimate_derivative(Y, t, spec.with_order(1))
        values = np.atleast_2d(np.asarray(W, dtype=float))
    else:
        raise InputError(f"ODE order must be 1 or 2, got {order}")
    if values.shape[1] < 2:
        raise InputError("Difference targets need at least two samples")
    return values[:, 1:] - values[:, :1]


def estimation_study(
    dataset: Dataset,
    etas: Sequence[float],
    repetitions: int = 5,
    seed: int = 0,
    degree: int = 8,
) -> pd.DataFrame:
    """Accuracy of the derivative and integral estimators across noise levels.

    For every noise level and repetition the clean dataset is contaminated and
    the relative Frobenius errors (pooled over experiments) of

    * first derivative estimates (central differences vs local polynomials),
    * second derivative estimates, for second-order models,
    * integrals of the true right-hand side evaluated on the noisy samples,
      against the exact differences of the clean first derivatives,

    are recorded, one row per (eta, rep, quantity, method).
    """
    if repetitions < 1:
        raise InputError("Need at least one repetition")
    model = dataset.model
    second_order = model.order == 2
    rows = []
    for eta_index, eta in enumerate(etas):
        for rep in range(repetitions):
            noisy = contaminate(dataset, eta, (seed, eta_index, rep))
            for method in (DerivativeMethod.CENTRAL_DIFF, DerivativeMethod.LOCAL_POLY):
                spec = EstimatorSpec(method=method, degree=degree)
                orders = (1, 2) if second_order else (1,)
                for order in orders:
                    est = [estimate_derivative(e.y, e.t, spec.with_order(order)) for e in noisy.experiments]
                    ref = [e.x_dot if order == 1 else e.x_ddot for e in noisy.experiments]
                    rows.append(
                        {
                            "eta": eta,
                            "rep": rep,
                            "quantity": "first_derivative" if order == 1 else "second_derivative",
                            "method": method.value,
                            "rel_error": relative_error(np.hstack(est), np.hstack(ref)),
                        }
                    )
            for quadrature in Quadrature:
                spec = EstimatorSpec(degree=degree, quadrature=quadrature)
                est, ref = [], []
                for e in noisy.experiments:
                    integrand = rhs(model, e.y, e.x_dot) if second_order else rhs(model, e.y)
                    est.append(build_gamma(integrand, e.t, spec))
                    ref.append(build_delta_targets(e.x, e.t, order=model.order, W=e.x_dot))
                rows.append(
                    {
                        "eta": eta,
                        "rep": rep,
                        "quantity": "integral",
                        "method": quadrature.value,
                        "rel_error": relative_error(np.hstack(est), np.hstack(ref)),
                    }
                )
        logger.info("Estimation study finished eta=%g", eta)
    return pd.DataFrame(rows, columns=["eta", "rep", "quantity", "method", "rel_error"])
