import numpy as np
import pandas as pd
import pytest

from constraints.polytope import LmoStrategy
from core import harness
from core.config import make_config
from core.errors import InputError, SolverError
from dynamics.experiments import Dataset, Experiment, sinusoid_initial_state
from dynamics.models import kuramoto, spring_mass, true_coefficients
from library.dictionary import monomial_dictionary, trig_pairwise_dictionary
from problem.regression import RegressionProblem

SMALL = dict(
    model="kuramoto",
    dimension=2,
    formulation="differential",
    etas=[1e-4],
    repetitions=1,
    n_experiments=10,
    total_points=1000,
    stlsq_grid=[1e-3, 1e-1],
    max_iters=500,
    workers=1,
    record_timings=False,
)


def _labelled_dataset(count):
    experiments = tuple(
        Experiment(np.array([float(i), i + 1.0]), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
        for i in range(count)
    )
    return Dataset(kuramoto(2), experiments)


def _labels(dataset):
    return [int(e.t[0]) for e in dataset.experiments]


def test_split_sizes():
    train, val, test = harness.split_dataset(_labelled_dataset(40), (0.7, 0.2, 0.1), seed=1)
    assert (train.n_experiments, val.n_experiments, test.n_experiments) == (28, 8, 4)
    labels = _labels(train) + _labels(val) + _labels(test)
    assert sorted(labels) == list(range(40))
    assert _labels(train) == sorted(_labels(train))


def test_split_is_seeded():
    a = harness.split_dataset(_labelled_dataset(20), seed=(3, 1))
    b = harness.split_dataset(_labelled_dataset(20), seed=(3, 1))
    c = harness.split_dataset(_labelled_dataset(20), seed=(3, 2))
    assert [_labels(p) for p in a] == [_labels(p) for p in b]
    assert [_labels(p) for p in a] != [_labels(p) for p in c]


def test_split_all_training():
    train, val, test = harness.split_dataset(_labelled_dataset(5), (1.0, 0.0, 0.0))
    assert train.n_experiments == 5 and not val.experiments and not test.experiments


def test_split_errors():
    with pytest.raises(InputError):
        harness.split_dataset(_labelled_dataset(2), (0.7, 0.2, 0.1))
    with pytest.raises(InputError):
        harness.split_dataset(_labelled_dataset(10), (0.5, 0.2, 0.2))


@pytest.fixture
def noiseless_pair(rng):
    A = rng.standard_normal((5, 80)) / np.sqrt(80)
    omega = np.zeros((5, 1))
    omega[[0, 3], 0] = [1.0, -2.0]
    B = omega.T @ A
    return RegressionProblem(A[:, :60], B[:, :60]), RegressionProblem(A[:, 60:], B[:, 60:])


def test_tune_single_point(noiseless_pair):
    train, val = noiseless_pair
    value, report = harness.tune_hyperparameter("stlsq", [0.3], train, val)
    assert value == 0.3 and report.hyperparameter == 0.3


def test_tune_prefers_exact_fit(noiseless_pair):
    train, val = noiseless_pair
    value, report = harness.tune_hyperparameter("stlsq", [np.inf, 0.0], train, val)
    assert value == 0.0
    np.testing.assert_allclose(report.omega[[0, 3], 0], [1.0, -2.0], atol=1e-10)


def test_tune_ties_go_to_the_smallest_value(noiseless_pair):
    train, val = noiseless_pair
    # both thresholds keep exactly the true support
    value, _ = harness.tune_hyperparameter("stlsq", [0.5, 0.1], train, val)
    assert value == 0.1


def test_tune_errors(noiseless_pair, monkeypatch):
    train, val = noiseless_pair
    with pytest.raises(InputError):
        harness.tune_hyperparameter("stlsq", [], train, val)

    def failing(*args, **kwargs):
        raise SolverError("boom")

    monkeypatch.setattr(harness, "run_solver", failing)
    with pytest.raises(SolverError):
        harness.tune_hyperparameter("stlsq", [0.1, 1.0], train, val)


def test_tune_skips_grid_points_with_numerical_failures(noiseless_pair, monkeypatch):
    train, val = noiseless_pair
    run = harness.run_solver

    def fragile(solver, problem, hyperparameter=None, **options):
        if hyperparameter == 0.0:
            raise np.linalg.LinAlgError("SVD did not converge")
        return run(solver, problem, hyperparameter=hyperparameter, **options)

    monkeypatch.setattr(harness, "run_solver", fragile)
    value, _ = harness.tune_hyperparameter("stlsq", [0.0, 0.1], train, val)
    assert value == 0.1


def test_prepare_cell_shares_training_scales():
    config = make_config(**SMALL)
    clean = harness.generate_clean(config, 0)
    cell = harness.prepare_cell(config, clean, 0, 1e-4, 0)
    assert (cell.train.n_experiments, cell.validation.n_experiments, cell.test.n_experiments) == (7, 2, 1)
    assert cell.validation_problem.scales is cell.train_problem.scales
    assert cell.alpha > 0
    np.testing.assert_array_equal(cell.xi, true_coefficients(cell.model, cell.dictionary))


def test_fit_solver_returns_unscaled_coefficients():
    config = make_config(**SMALL)
    cell = harness.prepare_cell(config, harness.generate_clean(config, 0), 0, 1e-4, 0)
    fit = harness.fit_solver(config, cell, "bcg")
    np.testing.assert_allclose(fit.omega, fit.report.omega / cell.train_problem.scales.scales[:, None])
    assert fit.zero_tol == 0.0
    assert fit.metrics.E_R < np.linalg.norm(cell.xi)
    tuned = harness.fit_solver(config, cell, "stlsq")
    assert tuned.hyperparameter in (1e-3, 1e-1)


def test_feasible_region_with_conservation_band():
    config = make_config(
        model="michaelis_menten",
        n_experiments=10,
        total_points=200,
        conservation_band_eps=1e-3,
        conservation_band_weights=[1.0, 0.0, 1.0, 0.0],
        solvers=["bcg_c"],
    )
    cell = harness.prepare_cell(config, harness.generate_clean(config, 0), 0, 1e-6, 0)
    polytope = harness.feasible_region(
        config, cell.model, cell.dictionary, cell.train_problem, cell.alpha, True, cell.train
    )
    assert polytope.lmo_strategy == LmoStrategy.LINEAR_PROGRAM
    train_samples = sum(e.m for e in cell.train.experiments)
    assert len(polytope.generals) == 30 + 2 * train_samples
    unconstrained = harness.feasible_region(config, cell.model, cell.dictionary, cell.train_problem, cell.alpha, False)
    assert unconstrained.lmo_strategy == LmoStrategy.CLOSED_FORM


def test_run_sweep_rows_and_determinism():
    config = make_config(**SMALL, solvers=["bcg", "bcg_c", "stlsq"])
    first = harness.run_sweep(config)
    assert list(first.results.columns) == harness.RESULT_COLUMNS
    assert len(first.results) == 3 and first.failures.empty
    assert not first.interrupted
    assert set(first.coefficients) == {"bcg_0.0001_0", "bcg_c_0.0001_0", "stlsq_0.0001_0"}
    assert (first.results["seconds"] == 0.0).all()

    parallel = harness.run_sweep(config.model_copy(update={"workers": 3}))
    assert first.results.to_csv(index=False) == parallel.results.to_csv(index=False)


def test_run_sweep_single_cell():
    bundle = harness.run_sweep(make_config(**SMALL, solvers=["bcg"]))
    assert len(bundle.results) == 1
    aggregate = bundle.aggregate
    assert len(aggregate) == 1
    assert aggregate.loc[0, "E_R_ratio_mean"] == pytest.approx(bundle.results.loc[0, "E_R"] / 1e-4)


def test_run_sweep_records_failures():
    # STLSQ cannot be tuned without a validation partition
    config = make_config(**{**SMALL, "split": (0.9, 0.0, 0.1)}, solvers=["stlsq", "bcg"])
    bundle = harness.run_sweep(config)
    assert list(bundle.failures["solver"]) == ["stlsq"]
    assert bundle.failures.loc[0, "error"] == "InputError"
    assert list(bundle.results["solver"]) == ["bcg"]


def test_run_sweep_survives_numerical_failures(monkeypatch):
    fit = harness.fit_solver

    def singular_stlsq(config, cell, solver):
        if solver == "stlsq":
            raise np.linalg.LinAlgError("Singular matrix")
        return fit(config, cell, solver)

    monkeypatch.setattr(harness, "fit_solver", singular_stlsq)
    bundle = harness.run_sweep(make_config(**SMALL, solvers=["stlsq", "bcg"]))
    assert list(bundle.failures["solver"]) == ["stlsq"]
    assert bundle.failures.loc[0, "error"] == "LinAlgError"
    assert list(bundle.results["solver"]) == ["bcg"]
    assert not bundle.interrupted


def test_run_sweep_honours_stop_requests():
    harness.stop_requested.set()
    try:
        bundle = harness.run_sweep(make_config(**SMALL, solvers=["bcg"]))
    finally:
        harness.stop_requested.clear()
    assert bundle.interrupted
    assert bundle.results.empty


def test_aggregate_of_empty_results():
    assert harness.aggregate_results(pd.DataFrame()).empty


def test_sample_efficiency_sweep():
    config = make_config(**{**SMALL, "etas": [1e-6, 1e-3]}, solvers=["bcg"], sample_grid=[40, 100])
    grid = harness.sample_efficiency_sweep(config)
    assert list(grid.columns) == ["solver", "eta", "samples", "E_R", "S_E", "S_M"]
    assert len(grid) == 2 * 2
    assert sorted(set(grid["samples"])) == [40, 100]
    with pytest.raises(InputError):
        harness.sample_efficiency_sweep(make_config(**SMALL), [])


def test_simulate_truth_tracks_the_model():
    model = kuramoto(2, seed=0)
    dictionary = trig_pairwise_dictionary(2)
    xi = true_coefficients(model, dictionary)
    comparison = harness.simulate_comparison(xi, xi, model, dictionary, np.array([0.3, 2.0]), 5.0, 0.1)
    assert comparison.t.size == 51 and comparison.blowup_time is None
    assert comparison.divergence.max() <= 1e-8


def test_simulate_zero_dynamic_drifts_apart():
    model = kuramoto(2, seed=0)
    dictionary = trig_pairwise_dictionary(2)
    xi = true_coefficients(model, dictionary)
    comparison = harness.simulate_comparison(np.zeros_like(xi), xi, model, dictionary, np.array([0.3, 2.0]), 5.0, 0.1)
    assert comparison.divergence[0] == 0.0
    assert comparison.divergence[-1] > comparison.divergence[1] > 0.0
    frame = comparison.to_frame()
    assert list(frame.columns) == ["t", "learned_x_1", "learned_x_2", "true_x_1", "true_x_2", "divergence"]


def test_simulate_reports_blowup():
    model = spring_mass()
    dictionary = monomial_dictionary(2, 3)
    omega = np.zeros((dictionary.n, 2))
    omega[dictionary.index_of_label("x_1^3"), 0] = 10.0
    xi = true_coefficients(model, dictionary)
    comparison = harness.simulate_comparison(omega, xi, model, dictionary, np.array([1.0, 0.0]), 5.0, 0.01)
    assert comparison.blowup_time is not None and comparison.blowup_time < 5.0
    assert comparison.t.size < 501
    assert comparison.learned.shape[1] == comparison.true.shape[1] == comparison.t.size


def test_simulate_rejects_bad_inputs():
    model = kuramoto(2)
    dictionary = trig_pairwise_dictionary(2)
    xi = true_coefficients(model, dictionary)
    with pytest.raises(InputError):
        harness.simulate_comparison(xi[:-1], xi, model, dictionary, np.zeros(2), 1.0, 0.1)
    with pytest.raises(InputError):
        harness.simulate_comparison(xi, xi, model, dictionary, np.zeros(2), 1.0, 0.0)


@pytest.mark.slow
def test_bcg_is_sparser_than_stlsq_under_noise():
    config = make_config(model="kuramoto", dimension=5, etas=[1e-5, 1e-4, 1e-3], repetitions=5, solvers=["bcg", "stlsq"])
    results = harness.run_sweep(config).results
    means = results.groupby(["eta", "solver"])[["S_E", "E_R"]].mean()
    for eta in config.etas:
        assert means.loc[(eta, "bcg"), "S_E"] <= means.loc[(eta, "stlsq"), "S_E"]
    for eta in (1e-4, 1e-3):
        assert means.loc[(eta, "bcg"), "E_R"] <= means.loc[(eta, "stlsq"), "E_R"]


@pytest.mark.slow
def test_bcg_dynamics_generalize_better_than_stlsq():
    config = make_config(model="fput", dimension=5, etas=[1e-4], solvers=["bcg", "stlsq"])
    x0 = sinusoid_initial_state(5)
    wins = 0
    for rep in range(5):
        cell = harness.prepare_cell(config, harness.generate_clean(config, rep), 0, 1e-4, rep)
        final = {}
        for solver in config.solvers:
            fit = harness.fit_solver(config, cell, solver)
            comparison = harness.simulate_comparison(fit.omega, cell.xi, cell.model, cell.dictionary, x0, 1.0, 0.01)
            final[solver] = comparison.divergence[-1] if comparison.blowup_time is None else np.inf
        wins += final["bcg"] <= final["stlsq"]
    assert wins >= 4
