"""Linear minimization oracles over the feasible polytope, and simplex projection."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from constraints.polytope import LmoStrategy, Polytope
from core.errors import InfeasibleConstraintsError, InputError, SolverError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LmoResult:
    """A minimizing vertex: full matrix, reduced coordinates and the zero-gradient flag."""

    vertex: np.ndarray
    z: np.ndarray
    zero_gradient: bool = False

    def value(self, G: np.ndarray) -> float:
        return float(np.sum(self.vertex * G))


def lmo_closed_form(G: np.ndarray, polytope: Polytope) -> LmoResult:
    """argmin over the weighted l1 ball of trace(Omega^T G).

    The minimizer is the single-coordinate vertex -(alpha / w_j) sign(g_j) e_j
    at j = argmax |g_j| / w_j over reduced variables. A zero gradient makes
    every point optimal; the zero matrix is returned, flagged.
    """
    if polytope.lmo_strategy != LmoStrategy.CLOSED_FORM:
        raise InputError("Closed-form oracle used on a polytope with general constraints")
    g = polytope.reduce_gradient(G)
    z = np.zeros(polytope.size)
    ratios = np.abs(g) / polytope.weights
    j = int(np.argmax(ratios))
    if ratios[j] == 0.0:
        return LmoResult(polytope.expand(z), z, zero_gradient=True)
    z[j] = -np.sign(g[j]) * polytope.alpha / polytope.weights[j]
    return LmoResult(polytope.expand(z), z)


def lmo_lp(G: np.ndarray, polytope: Polytope) -> LmoResult:
    """argmin of trace(Omega^T G) over the polytope by linear programming.

    Split variables z = z_plus - z_minus >= 0 turn the weighted l1 ball into
    one inequality; the dual simplex returns a basic (vertex) solution.

    Raises:
        InfeasibleConstraintsError: The constraints admit no point.
        SolverError: Any other LP failure.
    """
    k = polytope.size
    g = polytope.reduce_gradient(G)
    if polytope.alpha == 0.0:
        z = np.zeros(k)
        vertex = polytope.expand(z)
        if not polytope.contains(vertex):
            raise InfeasibleConstraintsError("Constraint set excludes the origin but the l1 radius is 0")
        return LmoResult(vertex, z, zero_gradient=not np.any(g))

    A_eq, b_eq, A_ub, b_ub = polytope.general_rows()
    cost = np.concatenate([g, -g])
    ball = np.concatenate([polytope.weights, polytope.weights])[None, :]
    A_ub_split = np.vstack([ball, np.hstack([A_ub, -A_ub])])
    b_ub_split = np.concatenate([[polytope.alpha], b_ub])
    result = linprog(
        cost,
        A_ub=A_ub_split,
        b_ub=b_ub_split,
        A_eq=np.hstack([A_eq, -A_eq]) if A_eq.shape[0] else None,
        b_eq=b_eq if A_eq.shape[0] else None,
        bounds=(0, None),
        method="highs-ds",
    )
    if result.status == 2:
        raise InfeasibleConstraintsError(f"Constraint set is infeasible: {result.message}")
    if result.status != 0:
        raise SolverError(f"Linear minimization oracle failed (status {result.status}): {result.message}")
    z = result.x[:k] - result.x[k:]
    return LmoResult(polytope.expand(z), z, zero_gradient=not np.any(g))


def lmo(G: np.ndarray, polytope: Polytope) -> LmoResult:
    if polytope.lmo_strategy == LmoStrategy.CLOSED_FORM:
        return lmo_closed_form(G, polytope)
    return lmo_lp(G, polytope)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size < 1:
        raise InputError("Cannot project an empty vector onto the simplex")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
