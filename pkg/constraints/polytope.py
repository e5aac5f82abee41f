"""
The feasible region of the constrained LASSO problems.

    P = { Omega : ||Omega||_{1,1} <= alpha, ties hold, trace(A_l^T Omega) (=|<=) b_l }

Ties are removed by variable substitution: every coefficient position belongs
to exactly one reduced variable z_k and Omega[p] = multiplier[p] * z_k. The
l1 ball becomes the weighted ball sum_k weight_k |z_k| <= alpha with
weight_k = sum of |multiplier| over its positions, so a plain l1 ball with
ties is still a cross-polytope and keeps the closed-form oracle.

Ties and general constraints are stated on unscaled coefficients. When the
solver works on row-normalized features (Omega_s = Omega * scales[:, None]),
pass the scales and they are mapped into solver space here.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from constraints.structure import LinearConstraint, Relation, TieGroup, merge_ties
from core.errors import ConstraintError, InputError
from library.dictionary import RowScales

logger = logging.getLogger(__name__)


class LmoStrategy(str, Enum):
    CLOSED_FORM = "closed_form"
    LINEAR_PROGRAM = "linear_program"


@dataclass(frozen=True, eq=False)
class Polytope:
    """Weighted l1 ball over reduced variables plus general linear constraints.

    Args:
        alpha: l1 radius in solver space.
        n: Dictionary size.
        d: State dimension.
        weights: Per-reduced-variable l1 weights.
        variable_of: Reduced variable of every flat (row-major) position.
        multipliers: Omega_flat = multipliers * z[variable_of].
        ties: Merged tie groups (unscaled statement).
        generals: General constraints in solver space.
        lmo_strategy: Closed form iff there are no general constraints.
    """

    alpha: float
    n: int
    d: int
    weights: np.ndarray
    variable_of: np.ndarray
    multipliers: np.ndarray
    ties: Tuple[TieGroup, ...] = ()
    generals: Tuple[LinearConstraint, ...] = ()
    lmo_strategy: LmoStrategy = LmoStrategy.CLOSED_FORM
    row_scales: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        """Number of reduced variables."""
        return self.weights.size

    def expand(self, z: np.ndarray) -> np.ndarray:
        """Full n x d matrix of a reduced point."""
        return (self.multipliers * np.asarray(z, dtype=float)[self.variable_of]).reshape(self.n, self.d)

    def reduce(self, omega: np.ndarray) -> np.ndarray:
        """Reduced coordinates of a point that satisfies the ties (read at each variable's anchor)."""
        flat = np.asarray(omega, dtype=float).ravel()
        z = np.zeros(self.size)
        # the anchor of every variable has multiplier 1 and comes first in row-major order
        first = np.unique(self.variable_of, return_index=True)[1]
        z[self.variable_of[first]] = flat[first] / self.multipliers[first]
        return z

    def reduce_gradient(self, G: np.ndarray) -> np.ndarray:
        """Gradient with respect to z of a function of Omega whose gradient is G."""
        flat = np.asarray(G, dtype=float).ravel()
        return np.bincount(self.variable_of, weights=self.multipliers * flat, minlength=self.size)

    def general_rows(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(A_eq, b_eq, A_ub, b_ub) of the general constraints over z."""
        eq_rows, eq_b, ub_rows, ub_b = [], [], [], []
        for g in self.generals:
            row = self.reduce_gradient(g.A_l)
            if g.relation == Relation.EQ:
                eq_rows.append(row)
                eq_b.append(g.b_l)
            else:
                ub_rows.append(row)
                ub_b.append(g.b_l)
        shape = (0, self.size)
        return (
            np.array(eq_rows).reshape(-1, self.size) if eq_rows else np.zeros(shape),
            np.array(eq_b, dtype=float),
            np.array(ub_rows).reshape(-1, self.size) if ub_rows else np.zeros(shape),
            np.array(ub_b, dtype=float),
        )

    def l1_norm(self, omega: np.ndarray) -> float:
        return float(np.sum(np.abs(omega)))

    def violation(self, omega: np.ndarray) -> float:
        """Largest violation of the l1 ball, the ties and the general constraints at a solver-space point."""
        omega = np.asarray(omega, dtype=float)
        worst = max(self.l1_norm(omega) - self.alpha, 0.0)
        unscaled = omega if self.row_scales is None else omega / self.row_scales[:, None]
        for group in self.ties:
            worst = max(worst, group.max_violation(unscaled))
        for g in self.generals:
            worst = max(worst, g.violation(omega))
        return worst

    def contains(self, omega: np.ndarray, tol: float = 1e-9) -> bool:
        return self.violation(omega) <= tol


def _scale_vector(scales: Union[RowScales, np.ndarray, None], n: int) -> np.ndarray:
    if scales is None:
        return np.ones(n)
    s = scales.scales if isinstance(scales, RowScales) else np.asarray(scales, dtype=float)
    if s.shape != (n,):
        raise InputError(f"Expected {n} row scales, got shape {s.shape}")
    return s


def build_polytope(
    alpha: float,
    ties: Sequence[TieGroup] = (),
    generals: Sequence[LinearConstraint] = (),
    scales: Union[RowScales, np.ndarray, None] = None,
    shape: Optional[Tuple[int, int]] = None,
) -> Polytope:
    """Build the feasible polytope for n x d coefficient matrices.

    Args:
        alpha: l1 radius (solver space).
        ties: Tie groups; overlapping groups are merged.
        generals: General linear constraints on unscaled coefficients.
        scales: Row scales of the solver's normalized features.
        shape: (n, d); inferred from the constraints or scales when omitted.

    Raises:
        InputError: Negative alpha or unknown shape.
        ConstraintError: Contradictory ties or positions outside the matrix.
    """
    if not alpha >= 0:
        raise InputError(f"l1 radius must be nonnegative, got {alpha}")
    if shape is None:
        if generals:
            shape = generals[0].A_l.shape
        else:
            raise InputError("Polytope shape (n, d) is required when there are no general constraints")
    n, d = shape
    s = _scale_vector(scales, n)

    relations = []
    for group in ties:
        r0, c0, s0 = group.members[0]
        for r, c, sign in group.members:
            if not (0 <= r < n and 0 <= c < d):
                raise ConstraintError(f"Tie position ({r}, {c}) is outside a {n} x {d} matrix")
            relations.append(((r, c), (r0, c0), sign * s0))
    merged = merge_ties(relations)

    variable_of = np.full(n * d, -1, dtype=int)
    multipliers = np.ones(n * d)
    weights = []
    group_at = {}
    for group in merged:
        group_at[group.members[0][0] * d + group.members[0][1]] = group
    for flat in range(n * d):
        if variable_of[flat] >= 0:
            continue
        k = len(weights)
        group = group_at.get(flat)
        if group is None:
            variable_of[flat] = k
            weights.append(1.0)
            continue
        anchor_row = group.members[0][0]
        total = 0.0
        for r, c, sign in group.members:
            mult = sign * s[r] / s[anchor_row]
            variable_of[r * d + c] = k
            multipliers[r * d + c] = mult
            total += abs(mult)
        weights.append(total)

    mapped = []
    for g in generals:
        if g.A_l.shape != (n, d):
            raise ConstraintError(f"Constraint matrix has shape {g.A_l.shape}, expected {(n, d)}")
        mapped.append(LinearConstraint(g.A_l / s[:, None], g.b_l, g.relation))

    strategy = LmoStrategy.LINEAR_PROGRAM if mapped else LmoStrategy.CLOSED_FORM
    logger.debug("Polytope: %d reduced variables from %d coefficients, %s oracle", len(weights), n * d, strategy.value)
    return Polytope(
        float(alpha),
        n,
        d,
        np.asarray(weights),
        variable_of,
        multipliers,
        tuple(merged),
        tuple(mapped),
        strategy,
        s,
    )
