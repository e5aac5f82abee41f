"""
Structural knowledge about the benchmark dynamics, stated on unscaled
coefficient matrices.

Two kinds of constraints are produced:

* tie groups: coefficient positions (row, column) forced to share one value
  up to sign, e.g. the effect of x_i on x_j equals the effect of x_j on x_i;
* general linear constraints trace(A_l^T Omega) (=|<=) b_l, e.g. conservation
  laws of chemical species.

Positions are located by the symbolic tags of the dictionary, never by
hard-coded row numbers.
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConstraintError
from dynamics.models import MM_SPECIES, ModelKind, ModelSpec
from library.dictionary import MONOMIAL, TRIG, Dictionary, evaluate

logger = logging.getLogger(__name__)

Position = Tuple[int, int]
# (row, column, sign): the coefficient equals sign times the group value.
Member = Tuple[int, int, int]
# (p, q, sign): coefficient p equals sign times coefficient q.
TieRelation = Tuple[Position, Position, int]


class Relation(str, Enum):
    EQ = "eq"
    LE = "le"


@dataclass(frozen=True)
class TieGroup:
    """Coefficient positions sharing one value up to sign; the first member has sign +1."""

    members: Tuple[Member, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ConstraintError("A tie group needs at least two members")
        positions = [(r, c) for r, c, _ in self.members]
        if len(set(positions)) != len(positions):
            raise ConstraintError(f"Tie group has repeated positions: {positions}")
        if any(s not in (1, -1) for _, _, s in self.members):
            raise ConstraintError("Tie signs must be +1 or -1")

    @property
    def size(self) -> int:
        return len(self.members)

    def max_violation(self, omega: np.ndarray) -> float:
        r0, c0, s0 = self.members[0]
        value = s0 * omega[r0, c0]
        return max(abs(omega[r, c] - s * value) for r, c, s in self.members)


@dataclass(frozen=True)
class LinearConstraint:
    """trace(A_l^T Omega) relation b_l over n x d coefficient matrices."""

    A_l: np.ndarray
    b_l: float = 0.0
    relation: Relation = Relation.EQ

    def __post_init__(self):
        A_l = np.asarray(self.A_l, dtype=float)
        if A_l.ndim != 2 or not np.all(np.isfinite(A_l)):
            raise ConstraintError("Constraint matrix must be a finite 2-D array")
        object.__setattr__(self, "A_l", A_l)
        object.__setattr__(self, "relation", Relation(self.relation))

    def value(self, omega: np.ndarray) -> float:
        return float(np.sum(self.A_l * omega))

    def violation(self, omega: np.ndarray) -> float:
        gap = self.value(omega) - self.b_l
        return abs(gap) if self.relation == Relation.EQ else max(gap, 0.0)


def merge_ties(relations: Iterable[TieRelation]) -> List[TieGroup]:
    """Merge pairwise sign relations into disjoint tie groups.

    Groups are ordered by their smallest position (row-major); members
    within a group likewise, with signs relative to the first member.

    Raises:
        ConstraintError: If a position is tied to itself with sign -1 through
            some chain of relations.
    """
    parent: Dict[Position, Position] = {}
    sign_to_parent: Dict[Position, int] = {}

    def find(p: Position) -> Tuple[Position, int]:
        """Root of p and the sign with value_p = sign * value_root."""
        if p not in parent:
            parent[p], sign_to_parent[p] = p, 1
        if parent[p] == p:
            return p, 1
        root, sign = find(parent[p])
        parent[p], sign_to_parent[p] = root, sign_to_parent[p] * sign
        return root, sign_to_parent[p]

    for p, q, s in relations:
        if p == q:
            if s != 1:
                raise ConstraintError(f"Coefficient {p} cannot equal its own negative")
            continue
        root_p, sign_p = find(p)
        root_q, sign_q = find(q)
        if root_p == root_q:
            if sign_p != s * sign_q:
                raise ConstraintError(f"Contradictory ties between coefficients {p} and {q}")
            continue
        # value_p = sign_p * root_p and value_p = s * sign_q * root_q
        parent[root_p] = root_q
        sign_to_parent[root_p] = sign_p * s * sign_q

    groups: Dict[Position, List[Tuple[Position, int]]] = {}
    for p in parent:
        root, sign = find(p)
        groups.setdefault(root, []).append((p, sign))
    result = []
    for members in groups.values():
        if len(members) < 2:
            continue
        members.sort()
        anchor_sign = members[0][1]
        result.append(TieGroup(tuple((r, c, s * anchor_sign) for (r, c), s in members)))
    result.sort(key=lambda g: (g.members[0][0], g.members[0][1]))
    return result


def _lookup(dictionary: Dictionary, family: str, powers, cos_powers=()) -> int:
    tags = (family, tuple(powers), tuple(cos_powers))
    if not dictionary.contains(tags):
        raise ConstraintError(f"Dictionary {dictionary.name} has no basis function with tags {tags}")
    return dictionary.index_of(tags)


def _unit(d: int, *indices: int, power: int = 1) -> List[int]:
    v = [0] * d
    for i in indices:
        v[i] += power
    return v


def kuramoto_symmetry(dictionary: Dictionary, d: Optional[int] = None) -> List[TieGroup]:
    """Ties expressing that oscillator i acts on j exactly as j acts on i.

    For all i != j:
        xi_j(sin x_i) = xi_i(sin x_j)
        xi_i(cos x_i) = xi_i(cos x_j)
        xi_j(cos x_i) = xi_i(cos x_j)
        xi_j(sin x_i cos x_j) = xi_i(sin x_j cos x_i)
        xi_j(cos x_i sin x_j) = xi_i(cos x_j sin x_i)
        xi_j(sin x_i sin x_j) = xi_i(sin x_j sin x_i)
        xi_j(cos x_i cos x_j) = xi_i(cos x_j cos x_i)

    The second and third families chain every cosine coefficient into one
    group. i = j identities are trivial and dropped.
    """
    d = dictionary.dimension if d is None else d
    if d != dictionary.dimension:
        raise ConstraintError(f"Dictionary is over {dictionary.dimension} variables, not {d}")
    zero = [0] * d

    def sin_(*ix):
        return _lookup(dictionary, TRIG, _unit(d, *ix), zero)

    def cos_(*ix):
        return _lookup(dictionary, TRIG, zero, _unit(d, *ix))

    def sin_cos(i, j):
        return _lookup(dictionary, TRIG, _unit(d, i), _unit(d, j))

    relations: List[TieRelation] = []
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            relations.append(((sin_(i), j), (sin_(j), i), 1))
            relations.append(((cos_(i), i), (cos_(j), i), 1))
            relations.append(((cos_(i), j), (cos_(j), i), 1))
            relations.append(((sin_cos(i, j), j), (sin_cos(j, i), i), 1))
            relations.append(((sin_cos(j, i), j), (sin_cos(i, j), i), 1))
            relations.append(((sin_(i, j), j), (sin_(i, j), i), 1))
            relations.append(((cos_(i, j), j), (cos_(i, j), i), 1))
    return merge_ties(relations)


def fput_symmetry(dictionary: Dictionary, d: Optional[int] = None) -> List[TieGroup]:
    """Ties xi_j(x_i^a x_j^b) = xi_i(x_i^b x_j^a) for neighbouring particles j = i +- 1.

    Exponent pairs (a, b) range over a, b >= 1 with a + b <= 3.
    """
    d = dictionary.dimension if d is None else d
    if d != dictionary.dimension:
        raise ConstraintError(f"Dictionary is over {dictionary.dimension} variables, not {d}")
    relations: List[TieRelation] = []
    for i in range(d):
        for j in (i - 1, i + 1):
            if not 0 <= j < d:
                continue
            for a, b in ((1, 1), (1, 2), (2, 1)):
                left = _unit(d)
                left[i], left[j] = a, b
                right = _unit(d)
                right[i], right[j] = b, a
                relations.append(
                    ((_lookup(dictionary, MONOMIAL, left), j), (_lookup(dictionary, MONOMIAL, right), i), 1)
                )
    return merge_ties(relations)


def spring_mass_symmetry(dictionary: Dictionary) -> List[TieGroup]:
    """Newton's third law for the coupling spring: xi_1(x_2) = xi_2(x_1)."""
    if dictionary.dimension != 2:
        raise ConstraintError("The spring-mass symmetry needs a dictionary over 2 variables")
    x1 = _lookup(dictionary, MONOMIAL, (1, 0))
    x2 = _lookup(dictionary, MONOMIAL, (0, 1))
    return merge_ties([((x2, 0), (x1, 1), 1)])


def mm_conservation(dictionary: Dictionary) -> List[LinearConstraint]:
    """Conservation of substrate and enzyme in the Michaelis-Menten network.

    Per dictionary row: xi_S + xi_ES + xi_P = 0 (substrate in any form) and
    xi_E + xi_ES = 0 (total enzyme), 2n equality constraints in total.
    """
    if dictionary.dimension != len(MM_SPECIES):
        raise ConstraintError(f"Michaelis-Menten constraints need {len(MM_SPECIES)} species")
    column = {name: k for k, name in enumerate(MM_SPECIES)}
    n, d = dictionary.n, dictionary.dimension
    constraints = []
    for species in (("S", "ES", "P"), ("E", "ES")):
        for row in range(n):
            A_l = np.zeros((n, d))
            for name in species:
                A_l[row, column[name]] = 1.0
            constraints.append(LinearConstraint(A_l, 0.0, Relation.EQ))
    return constraints


def conservation_band(
    dictionary: Dictionary,
    Y: np.ndarray,
    weights: Sequence[float],
    c: float,
    eps: float,
) -> List[LinearConstraint]:
    """Approximate conservation |sum_j a_j xi_j^T psi(y(t_i)) - c| <= eps at every sample.

    Produces two inequality constraints per column of Y.
    """
    if eps < 0:
        raise ConstraintError(f"Band half-width must be nonnegative, got {eps}")
    a = np.asarray(weights, dtype=float)
    if a.shape != (dictionary.dimension,):
        raise ConstraintError(f"Need {dictionary.dimension} conservation weights, got shape {a.shape}")
    features = evaluate(dictionary, Y)
    constraints = []
    for i in range(features.shape[1]):
        A_l = np.outer(features[:, i], a)
        constraints.append(LinearConstraint(A_l, c + eps, Relation.LE))
        constraints.append(LinearConstraint(-A_l, -(c - eps), Relation.LE))
    return constraints


def benchmark_constraints(
    model: ModelSpec,
    dictionary: Dictionary,
) -> Tuple[List[TieGroup], List[LinearConstraint]]:
    """The structural constraints known for a benchmark model."""
    if model.kind == ModelKind.KURAMOTO:
        return kuramoto_symmetry(dictionary), []
    if model.kind == ModelKind.FPUT:
        return fput_symmetry(dictionary), []
    if model.kind == ModelKind.MICHAELIS_MENTEN:
        return [], mm_conservation(dictionary)
    return spring_mass_symmetry(dictionary), []


def constraints_to_json(
    ties: Sequence[TieGroup],
    generals: Sequence[LinearConstraint],
    dictionary: Dictionary,
) -> str:
    """Tie groups by basis label and state column, general constraints as dense matrices."""
    payload = {
        "ties": [
            [{"label": dictionary.functions[r].label, "column": f"x_{c + 1}", "sign": s} for r, c, s in group.members]
            for group in ties
        ],
        "generals": [
            {"A": g.A_l.tolist(), "b": g.b_l, "relation": g.relation.value} for g in generals
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
