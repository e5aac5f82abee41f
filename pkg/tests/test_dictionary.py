import json
from math import comb

import numpy as np
import pytest

from core.errors import InputError
from library.dictionary import (
    TRIG,
    RowScales,
    coefficient_report,
    dictionary_from_name,
    evaluate,
    monomial_dictionary,
    row_normalize,
    trig_pairwise_dictionary,
    unscale_coefficients,
)


@pytest.mark.parametrize("d, degree, expected", [(5, 3, 56), (10, 3, 286), (1, 0, 1), (4, 2, 15)])
def test_monomial_cardinality(d, degree, expected):
    dictionary = monomial_dictionary(d, degree)
    assert dictionary.n == expected == comb(d + degree, degree)


def test_monomial_order_is_graded_with_constant_first():
    dictionary = monomial_dictionary(2, 2)
    assert dictionary.labels == ["1", "x_1", "x_2", "x_1^2", "x_1*x_2", "x_2^2"]


@pytest.mark.parametrize("d, expected", [(1, 4), (5, 56), (10, 211)])
def test_trig_cardinality(d, expected):
    assert trig_pairwise_dictionary(d).n == expected == 1 + d + 2 * d * d


def test_trig_dictionary_d1_values():
    dictionary = trig_pairwise_dictionary(1)
    assert dictionary.labels == ["1", "sin(x_1)", "cos(x_1)", "sin(x_1)*cos(x_1)"]
    values = evaluate(dictionary, np.array([[np.pi / 2]]))[:, 0]
    np.testing.assert_allclose(values, [1.0, 1.0, 0.0, 0.0], atol=1e-15)


def test_trig_squares_variant_adds_rows():
    assert trig_pairwise_dictionary(2, include_squares=True).n == trig_pairwise_dictionary(2).n + 4


def test_labels_are_unique_and_ids_match_positions():
    dictionary = trig_pairwise_dictionary(4)
    assert len(set(dictionary.labels)) == dictionary.n
    assert [fn.id for fn in dictionary.functions] == list(range(dictionary.n))


def test_evaluate_monomials():
    dictionary = monomial_dictionary(1, 2)
    np.testing.assert_array_equal(evaluate(dictionary, np.array([[2.0]]))[:, 0], [1.0, 2.0, 4.0])


def test_constant_row_is_ones(rng):
    X = rng.standard_normal((3, 7))
    features = evaluate(monomial_dictionary(3, 3), X)
    np.testing.assert_array_equal(features[0], np.ones(7))


def test_trig_periodicity(rng):
    dictionary = trig_pairwise_dictionary(3)
    X = rng.uniform(0, 2 * np.pi, (3, 10))
    np.testing.assert_allclose(evaluate(dictionary, X), evaluate(dictionary, X + 2 * np.pi), atol=1e-12)


def test_evaluate_rejects_wrong_dimension():
    with pytest.raises(InputError):
        evaluate(monomial_dictionary(2, 1), np.zeros((3, 4)))


def test_evaluate_warns_on_non_finite():
    with pytest.warns(RuntimeWarning):
        features = evaluate(monomial_dictionary(1, 2), np.array([[np.inf, 1.0]]))
    assert not np.all(np.isfinite(features))


def test_lookup_by_tags_and_label():
    dictionary = trig_pairwise_dictionary(3)
    row = dictionary.index_of((TRIG, (1, 0, 0), (0, 0, 1)))
    assert dictionary.functions[row].label == "sin(x_1)*cos(x_3)"
    assert dictionary.index_of_label("sin(x_1)*cos(x_3)") == row


def test_to_json_lists_every_function():
    dictionary = monomial_dictionary(2, 1)
    entries = json.loads(dictionary.to_json())
    assert [e["label"] for e in entries] == ["1", "x_1", "x_2"]
    assert entries[1]["tags"]["powers"] == [1, 0]


def test_row_normalize_examples():
    normalized, scales = row_normalize(np.array([[1.0, 1.0, 1.0], [0.0, 2.0, 1.0]]))
    np.testing.assert_array_equal(normalized[0], [1.0, 1.0, 1.0])
    assert scales.scales[0] == 1.0
    np.testing.assert_allclose(np.std(normalized[1], ddof=1), 1.0)

    normalized, scales = row_normalize(np.array([[0.0, 2.0]]))
    np.testing.assert_allclose(scales.scales, [np.sqrt(2.0)])
    np.testing.assert_allclose(normalized, [[0.0, np.sqrt(2.0)]])


def test_row_normalize_is_idempotent(rng):
    once, _ = row_normalize(rng.standard_normal((4, 20)) * 5)
    twice, scales = row_normalize(once)
    np.testing.assert_allclose(twice, once, atol=1e-12)
    np.testing.assert_allclose(scales.scales, 1.0, atol=1e-12)


def test_unscale_preserves_predictions(rng):
    raw = rng.standard_normal((5, 30))
    normalized, scales = row_normalize(raw)
    omega_scaled = rng.standard_normal((5, 2))
    omega = unscale_coefficients(omega_scaled, scales)
    np.testing.assert_allclose(omega.T @ raw, omega_scaled.T @ normalized, atol=1e-10)
    np.testing.assert_array_equal(unscale_coefficients(omega_scaled, RowScales.ones(5)), omega_scaled)
    assert unscale_coefficients(np.array([[4.0]]), np.array([2.0]))[0, 0] == 2.0


def test_row_scales_must_be_positive():
    with pytest.raises(InputError):
        RowScales(np.array([1.0, 0.0]))


def test_coefficient_report_lists_nonzeros():
    dictionary = monomial_dictionary(2, 1)
    omega = np.array([[0.0, 1.5], [2.0, 0.0], [0.0, 0.0]])
    report = coefficient_report(omega, dictionary)
    assert report["x_1"] == [{"id": 1, "label": "x_1", "value": 2.0}]
    assert report["x_2"] == [{"id": 0, "label": "1", "value": 1.5}]


@pytest.mark.parametrize("build", [lambda: monomial_dictionary(3, 2), lambda: trig_pairwise_dictionary(2, include_squares=True)])
def test_dictionary_from_name(build):
    dictionary = build()
    assert dictionary_from_name(dictionary.name).labels == dictionary.labels


def test_dictionary_from_unknown_name():
    with pytest.raises(InputError):
        dictionary_from_name("legendre(d=2)")
