import json

import numpy as np
import pytest

from constraints.structure import (
    LinearConstraint,
    Relation,
    TieGroup,
    benchmark_constraints,
    conservation_band,
    constraints_to_json,
    fput_symmetry,
    kuramoto_symmetry,
    merge_ties,
    mm_conservation,
    spring_mass_symmetry,
)
from core.errors import ConstraintError
from dynamics.models import fput, kuramoto, michaelis_menten, spring_mass, true_coefficients
from library.dictionary import MONOMIAL, TRIG, monomial_dictionary, trig_pairwise_dictionary


def _group_positions(groups):
    return [{(r, c) for r, c, _ in g.members} for g in groups]


def test_merge_ties_chains_relations():
    groups = merge_ties([((0, 0), (1, 1), 1), ((1, 1), (2, 0), -1), ((3, 1), (4, 0), 1)])
    assert len(groups) == 2
    assert groups[0].members == ((0, 0, 1), (1, 1, 1), (2, 0, -1))
    assert groups[1].members == ((3, 1, 1), (4, 0, 1))


def test_merge_ties_rejects_contradictions():
    with pytest.raises(ConstraintError):
        merge_ties([((0, 0), (1, 0), 1), ((1, 0), (2, 0), 1), ((2, 0), (0, 0), -1)])
    with pytest.raises(ConstraintError):
        merge_ties([((0, 0), (0, 0), -1)])


def test_tie_group_validation():
    with pytest.raises(ConstraintError):
        TieGroup(((0, 0, 1),))
    with pytest.raises(ConstraintError):
        TieGroup(((0, 0, 1), (0, 0, 1)))
    with pytest.raises(ConstraintError):
        TieGroup(((0, 0, 1), (1, 0, 2)))


def test_tie_group_violation():
    group = TieGroup(((0, 0, 1), (1, 1, -1)))
    assert group.max_violation(np.array([[2.0, 0.0], [0.0, -2.0]])) == 0.0
    assert group.max_violation(np.array([[2.0, 0.0], [0.0, 2.0]])) == 4.0


def test_linear_constraint_violation():
    eq = LinearConstraint(np.array([[1.0, 1.0]]), 1.0)
    le = LinearConstraint(np.array([[1.0, 1.0]]), 1.0, Relation.LE)
    omega = np.array([[0.25, 0.25]])
    assert eq.violation(omega) == pytest.approx(0.5)
    assert le.violation(omega) == 0.0
    assert le.violation(4 * omega) == pytest.approx(1.0)


def test_kuramoto_d2_sine_tie():
    dictionary = trig_pairwise_dictionary(2)
    sin_1 = dictionary.index_of((TRIG, (1, 0), (0, 0)))
    sin_2 = dictionary.index_of((TRIG, (0, 1), (0, 0)))
    assert {(sin_1, 1), (sin_2, 0)} in _group_positions(kuramoto_symmetry(dictionary))


def test_kuramoto_cosine_coefficients_form_one_group():
    dictionary = trig_pairwise_dictionary(3)
    cos_rows = {dictionary.index_of((TRIG, (0, 0, 0), tuple(int(k == i) for k in range(3)))) for i in range(3)}
    groups = _group_positions(kuramoto_symmetry(dictionary))
    cos_groups = [g for g in groups if {r for r, _ in g} <= cos_rows]
    assert len(cos_groups) == 1
    assert cos_groups[0] == {(r, c) for r in cos_rows for c in range(3)}


def test_kuramoto_d1_has_no_ties():
    assert kuramoto_symmetry(trig_pairwise_dictionary(1)) == []


def test_kuramoto_needs_trig_dictionary():
    with pytest.raises(ConstraintError):
        kuramoto_symmetry(monomial_dictionary(2, 3))
    with pytest.raises(ConstraintError):
        kuramoto_symmetry(trig_pairwise_dictionary(2), d=3)


def test_fput_d2_cubic_tie():
    dictionary = monomial_dictionary(2, 3)
    left = dictionary.index_of((MONOMIAL, (1, 2), ()))
    right = dictionary.index_of((MONOMIAL, (2, 1), ()))
    assert {(left, 1), (right, 0)} in _group_positions(fput_symmetry(dictionary))


def test_fput_d1_and_low_degree():
    assert fput_symmetry(monomial_dictionary(1, 3)) == []
    with pytest.raises(ConstraintError):
        fput_symmetry(monomial_dictionary(2, 2))


@pytest.mark.parametrize(
    "model, dictionary",
    [
        (kuramoto(3, seed=1), trig_pairwise_dictionary(3)),
        (fput(4), monomial_dictionary(4, 3)),
        (spring_mass(), monomial_dictionary(2, 3)),
    ],
)
def test_truth_satisfies_ties(model, dictionary):
    ties, generals = benchmark_constraints(model, dictionary)
    assert ties and not generals
    xi = true_coefficients(model, dictionary)
    assert max(g.max_violation(xi) for g in ties) <= 1e-12


def test_spring_mass_tie():
    dictionary = monomial_dictionary(2, 1)
    (group,) = spring_mass_symmetry(dictionary)
    assert {(r, c) for r, c, _ in group.members} == {(2, 0), (1, 1)}
    with pytest.raises(ConstraintError):
        spring_mass_symmetry(monomial_dictionary(3, 1))


def test_mm_conservation():
    dictionary = monomial_dictionary(4, 2)
    constraints = mm_conservation(dictionary)
    assert len(constraints) == 30
    assert all(c.relation == Relation.EQ for c in constraints)
    xi = true_coefficients(michaelis_menten(), dictionary)
    assert max(c.violation(xi) for c in constraints) <= 1e-12
    assert max(c.violation(np.zeros_like(xi)) for c in constraints) == 0.0
    ties, generals = benchmark_constraints(michaelis_menten(), dictionary)
    assert ties == [] and len(generals) == 30


def test_conservation_band(rng):
    dictionary = monomial_dictionary(2, 1)
    Y = rng.standard_normal((2, 5))
    band = conservation_band(dictionary, Y, [1.0, 1.0], 0.0, 0.1)
    assert len(band) == 10
    assert all(c.relation == Relation.LE for c in band)
    # dx_1 + dx_2 = 0 for every state
    omega = np.array([[1.0, -1.0], [0.5, -0.5], [0.0, 0.0]])
    assert max(c.violation(omega) for c in band) == 0.0
    with pytest.raises(ConstraintError):
        conservation_band(dictionary, Y, [1.0], 0.0, 0.1)
    with pytest.raises(ConstraintError):
        conservation_band(dictionary, Y, [1.0, 1.0], 0.0, -1.0)


def test_constraints_to_json():
    dictionary = monomial_dictionary(2, 1)
    payload = json.loads(constraints_to_json(spring_mass_symmetry(dictionary), [], dictionary))
    assert payload["generals"] == []
    assert {(m["label"], m["column"]) for m in payload["ties"][0]} == {("x_1", "x_2"), ("x_2", "x_1")}
