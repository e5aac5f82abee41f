"""
Accelerated projected gradient descent over the probability simplex.

Solves min_{lambda in simplex} q(lambda) = lambda^T Q lambda - 2 c^T lambda + const,
the reoptimization over the convex hull of an active set. Curvature bounds
come from the extreme eigenvalues of Q: the step is 1/L with L = 2 lambda_max(Q);
when mu = 2 lambda_min(Q) is not negligible the constant strongly-convex
momentum (1 - sqrt(mu/L)) / (1 + sqrt(mu/L)) replaces the FISTA sequence.
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.errors import InputError
from solvers.oracles import project_simplex

logger = logging.getLogger(__name__)

# mu/L ratio below which the problem is treated as merely convex.
STRONG_CONVEXITY_RATIO = 1e-8


@dataclass(frozen=True)
class SimplexQuadratic:
    """q(lambda) = lambda^T Q lambda - 2 c^T lambda + const."""

    Q: np.ndarray
    c: np.ndarray
    const: float = 0.0

    @classmethod
    def from_least_squares(cls, Lambda: np.ndarray, b: np.ndarray) -> "SimplexQuadratic":
        """The quadratic ||Lambda lambda - b||^2."""
        Lambda = np.asarray(Lambda, dtype=float)
        b = np.asarray(b, dtype=float)
        return cls(Lambda.T @ Lambda, Lambda.T @ b, float(b @ b))

    @property
    def k(self) -> int:
        return self.c.size

    def value(self, lam: np.ndarray) -> float:
        return float(lam @ self.Q @ lam - 2.0 * self.c @ lam + self.const)

    def gradient(self, lam: np.ndarray) -> np.ndarray:
        return 2.0 * (self.Q @ lam - self.c)


@dataclass(frozen=True)
class ApgdResult:
    lam: np.ndarray
    gap: float
    iterations: int
    converged: bool


def simplex_gap(grad: np.ndarray, lam: np.ndarray) -> float:
    """Frank-Wolfe gap over the simplex: <grad, lam> - min_i grad_i."""
    return float(grad @ lam - np.min(grad))


def apgd_simplex(
    quad: SimplexQuadratic,
    lam0: np.ndarray,
    gap_target: float,
    max_iters: int = 10000,
) -> ApgdResult:
    """Run accelerated projected gradient until the simplex gap is <= gap_target.

    Args:
        quad: The quadratic to minimize.
        lam0: Starting weights on the simplex (warm start).
        gap_target: Accuracy Phi > 0.
        max_iters: Iteration cap; when hit, the iterate with the smallest gap
            seen is returned with converged=False.
    """
    if not gap_target > 0:
        raise InputError(f"Gap target must be positive, got {gap_target}")
    lam = project_simplex(lam0)
    if quad.k == 1:
        return ApgdResult(np.ones(1), 0.0, 0, True)

    eigenvalues = np.linalg.eigvalsh(0.5 * (quad.Q + quad.Q.T))
    L = 2.0 * max(float(eigenvalues[-1]), 0.0)
    mu = 2.0 * max(float(eigenvalues[0]), 0.0)
    grad = quad.gradient(lam)
    gap = simplex_gap(grad, lam)
    if gap <= gap_target:
        return ApgdResult(lam, gap, 0, True)
    if L == 0.0:
        # linear objective: the best vertex is exact
        vertex = np.zeros(quad.k)
        vertex[int(np.argmin(grad))] = 1.0
        return ApgdResult(vertex, 0.0, 1, True)

    strongly_convex = mu > STRONG_CONVEXITY_RATIO * L
    constant_momentum = (1.0 - np.sqrt(mu / L)) / (1.0 + np.sqrt(mu / L)) if strongly_convex else 0.0
    best_lam, best_gap = lam, gap
    y = lam.copy()
    t_prev = 0.0
    t = 1.0
    for iteration in range(1, max_iters + 1):
        lam_next = project_simplex(y - quad.gradient(y) / L)
        if strongly_convex:
            momentum = constant_momentum
        else:
            t_prev, t = t, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            momentum = (t_prev - 1.0) / t
        y = lam_next + momentum * (lam_next - lam)
        lam = lam_next
        gap = simplex_gap(quad.gradient(lam), lam)
        if gap < best_gap:
            best_lam, best_gap = lam, gap
        if gap <= gap_target:
            return ApgdResult(lam, gap, iteration, True)
    logger.warning("Simplex subproblem hit %d iterations at gap %.3e (target %.3e)", max_iters, best_gap, gap_target)
    return ApgdResult(best_lam, best_gap, max_iters, False)
