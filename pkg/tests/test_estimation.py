import numpy as np
import pytest

from core.errors import InputError
from estimation.derivatives import (
    DerivativeMethod,
    EstimatorSpec,
    Quadrature,
    VelocitySource,
    estimate_derivative,
    experiment_acceleration,
    experiment_velocity,
    relative_error,
    uniform_step,
)
from estimation.quadrature import build_delta_targets, build_gamma, estimation_study

CENTRAL = EstimatorSpec(method=DerivativeMethod.CENTRAL_DIFF)


def test_default_spec():
    spec = EstimatorSpec()
    assert (spec.method, spec.degree, spec.window) == (DerivativeMethod.LOCAL_POLY, 8, 17)
    assert spec.quadrature == Quadrature.LOCAL_POLY_INTEGRAL


def test_invalid_spec():
    with pytest.raises(InputError):
        EstimatorSpec(degree=4, window=8)
    with pytest.raises(InputError):
        EstimatorSpec(deriv_order=3)


def test_uniform_step():
    assert uniform_step(np.linspace(0.0, 1.0, 11)) == pytest.approx(0.1)
    with pytest.raises(InputError):
        uniform_step(np.array([0.0, 0.1, 0.3]))


def test_central_difference_exact_on_quadratic():
    t = np.linspace(0.0, 1.0, 11)
    Y = np.vstack([t**2, 3 * t - 1])
    np.testing.assert_allclose(estimate_derivative(Y, t, CENTRAL), np.vstack([2 * t, 3 * np.ones_like(t)]), atol=1e-10)
    np.testing.assert_allclose(estimate_derivative(Y, t, CENTRAL.with_order(2))[0], 2.0, atol=1e-8)


def test_central_difference_needs_four_points():
    t = np.linspace(0.0, 1.0, 3)
    with pytest.raises(InputError):
        estimate_derivative(t[None, :], t, CENTRAL)


def test_local_polynomial_exact_on_polynomials():
    t = np.linspace(0.0, 2.0, 41)
    Y = (t**5 - 2 * t**3)[None, :]
    spec = EstimatorSpec(degree=8)
    np.testing.assert_allclose(estimate_derivative(Y, t, spec)[0], 5 * t**4 - 6 * t**2, atol=1e-6)
    np.testing.assert_allclose(estimate_derivative(Y, t, spec.with_order(2))[0], 20 * t**3 - 12 * t, atol=1e-4)


def test_local_polynomial_window_too_long():
    t = np.linspace(0.0, 1.0, 10)
    with pytest.raises(InputError):
        estimate_derivative(t[None, :], t, EstimatorSpec(degree=8))


def test_exact_method_is_not_an_estimator():
    t = np.linspace(0.0, 1.0, 10)
    with pytest.raises(InputError):
        estimate_derivative(t[None, :], t, EstimatorSpec(method=DerivativeMethod.EXACT))


def test_local_polynomial_beats_central_differences(fput_clean):
    spec = EstimatorSpec(degree=8)
    lp, cd, ref = [], [], []
    for e in fput_clean.experiments:
        lp.append(estimate_derivative(e.y, e.t, spec))
        cd.append(estimate_derivative(e.y, e.t, CENTRAL))
        ref.append(e.x_dot)
    assert relative_error(np.hstack(lp), np.hstack(ref)) <= relative_error(np.hstack(cd), np.hstack(ref))


def test_experiment_rates(fput_clean):
    e = fput_clean.experiments[0]
    exact = EstimatorSpec(method=DerivativeMethod.EXACT)
    np.testing.assert_array_equal(experiment_velocity(e, exact), e.x_dot)
    np.testing.assert_array_equal(experiment_acceleration(e, exact), e.x_ddot)
    observed = EstimatorSpec(velocity=VelocitySource.OBSERVED)
    np.testing.assert_array_equal(experiment_velocity(e, observed, second_order=True), e.w)


def test_observed_velocity_missing(kuramoto_clean):
    e = kuramoto_clean.experiments[0]
    with pytest.raises(InputError):
        experiment_acceleration(e, EstimatorSpec(velocity=VelocitySource.OBSERVED))


def test_relative_error():
    assert relative_error(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(1.0)
    assert relative_error(np.array([0.5]), np.array([0.0])) == pytest.approx(0.5)


@pytest.mark.parametrize("quadrature", list(Quadrature))
def test_gamma_integrates_linear_functions_exactly(quadrature):
    t = np.linspace(0.0, 1.0, 21)
    F = np.vstack([np.ones_like(t), 2 * t])
    gamma = build_gamma(F, t, EstimatorSpec(quadrature=quadrature))
    assert gamma.shape == (2, 20)
    np.testing.assert_allclose(gamma, np.vstack([t[1:], t[1:] ** 2]), atol=1e-12)


def test_local_polynomial_integral_exact_on_degree_eight():
    t = np.linspace(0.0, 1.5, 40)
    F = (t**8 - t**3)[None, :]
    gamma = build_gamma(F, t)
    np.testing.assert_allclose(gamma[0], t[1:] ** 9 / 9 - t[1:] ** 4 / 4, atol=1e-9)


def test_gamma_single_interval_and_short_grids():
    t = np.array([0.0, 0.5])
    gamma = build_gamma(np.array([[1.0, 3.0]]), t, EstimatorSpec(quadrature=Quadrature.SIMPSON))
    np.testing.assert_allclose(gamma, [[1.0]])
    t = np.linspace(0.0, 1.0, 6)
    gamma = build_gamma(t[None, :] ** 2, t, EstimatorSpec(degree=2))
    np.testing.assert_allclose(gamma[0], t[1:] ** 3 / 3, atol=1e-12)


def test_local_polynomial_integral_rejects_short_experiments():
    t = np.linspace(0.0, 1.0, 6)
    with pytest.raises(InputError, match="window"):
        build_gamma(t[None, :] ** 2, t)
    with pytest.raises(InputError, match="window"):
        estimate_derivative(t[None, :] ** 2, t, EstimatorSpec())


def test_simpson_closes_an_odd_interval_count_with_a_trapezoid():
    t = np.array([0.0, 0.3, 1.0, 1.4])
    gamma = build_gamma(t[None, :] ** 2, t, EstimatorSpec(quadrature=Quadrature.SIMPSON))
    # Simpson is exact for the first pair; the unpaired last interval is a trapezoid.
    np.testing.assert_allclose(gamma[0], [0.0135, 1.0 / 3.0, 1.0 / 3.0 + 0.592], atol=1e-12)


def test_gamma_input_errors():
    with pytest.raises(InputError):
        build_gamma(np.ones((1, 1)), np.array([0.0]))
    with pytest.raises(InputError):
        build_gamma(np.ones((1, 3)), np.array([0.0, 0.2, 0.1]))


def test_delta_targets():
    Y = np.array([[1.0, 2.0, 4.0], [0.0, -1.0, 1.0]])
    t = np.arange(3.0)
    np.testing.assert_array_equal(build_delta_targets(Y, t), [[1.0, 3.0], [-1.0, 1.0]])
    W = np.array([[0.0, 1.0, 1.0]])
    np.testing.assert_array_equal(build_delta_targets(Y[:1], t, order=2, W=W), [[1.0, 1.0]])
    with pytest.raises(InputError):
        build_delta_targets(Y, t, order=2)


def test_integral_identity_on_clean_data(kuramoto_clean):
    """Gamma of the clean right-hand side reproduces the state differences."""
    e = kuramoto_clean.experiments[0]
    gamma = build_gamma(e.x_dot, e.t)
    np.testing.assert_allclose(gamma, build_delta_targets(e.x, e.t), atol=1e-6)


def test_estimation_study_table(fput_clean):
    frame = estimation_study(fput_clean, [1e-8, 1e-2], repetitions=2)
    assert set(frame["quantity"]) == {"first_derivative", "second_derivative", "integral"}
    # 2 etas x 2 reps x (2 methods x 2 orders + 3 quadratures)
    assert len(frame) == 2 * 2 * 7
    assert (frame["rel_error"] >= 0).all()


def test_integral_error_grows_with_noise(fput_clean):
    frame = estimation_study(fput_clean, [1e-6, 1e-4, 1e-2], repetitions=5)
    integral = frame[(frame["quantity"] == "integral") & (frame["method"] == Quadrature.LOCAL_POLY_INTEGRAL.value)]
    means = integral.groupby("eta")["rel_error"].mean().sort_index().to_numpy()
    assert np.all(np.diff(means) > 0)
