"""
Experiment pipeline: split, tune, solve, score and sweep.

One sweep cell is a (noise level, repetition) pair. Within a repetition the
clean experiments and their train/validation/test split are shared by every
noise level, and every solver in a cell consumes the same problem matrices.
Random streams are keyed by (seed, eta index, repetition) so cells can run in
any order, on any number of workers, with identical results.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from constraints.polytope import Polytope, build_polytope
from constraints.structure import benchmark_constraints, conservation_band
from core.config import ExperimentConfig
from core.errors import InputError, IntegrationError, SolverError, SparseDynError
from dynamics.experiments import Dataset, SeedKey, contaminate, generate_experiments, seed_key
from dynamics.integrator import DEFAULT_TOL, integrate, integrate_rhs
from dynamics.models import ModelSpec, true_coefficients
from estimation.derivatives import EstimatorSpec
from library.dictionary import CoefficientMatrix, Dictionary, coefficient_report, unscale_coefficients
from metrics.evaluation import MetricReport, compute_metrics, default_zero_tol
from problem.regression import RegressionProblem, build_problem, default_radius, validation_residual
from solvers.conditional_gradient import SolveReport
from solvers.registry import SOLVER_MAP, run_solver

logger = logging.getLogger(__name__)

# Stream id of the experiment-level split permutation.
SPLIT_STREAM = 3

# Numerical failures inside one solve; recorded per cell instead of ending the sweep.
SOLVE_ERRORS = (SparseDynError, np.linalg.LinAlgError, ValueError, FloatingPointError)

RESULT_COLUMNS = ["solver", "formulation", "eta", "rep", "E_R", "E_D", "E_T", "S_E", "S_M", "fw_gap", "iters", "seconds"]
FAILURE_COLUMNS = ["solver", "eta", "rep", "error", "message"]

# Set by the CLI signal handler; checked before each sweep cell starts.
stop_requested = threading.Event()


def split_dataset(
    dataset: Dataset,
    fractions: Sequence[float] = (0.7, 0.2, 0.1),
    seed: SeedKey = 0,
) -> Tuple[Dataset, Dataset, Dataset]:
    """Assign whole experiments to training, validation and test partitions.

    Partition sizes are round(f * c) for training and validation, the rest for
    testing; experiments are shuffled by a permutation drawn from the seed.

    Raises:
        InputError: Fractions that do not sum to 1, or a partition with a
            positive fraction that would receive no experiment.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InputError(f"Split fractions must be three nonnegative numbers summing to 1, got {fractions}")
    c = dataset.n_experiments
    n_train = int(round(fractions[0] * c))
    n_val = min(int(round(fractions[1] * c)), c - n_train)
    n_test = c - n_train - n_val
    for name, size, fraction in zip(("training", "validation", "test"), (n_train, n_val, n_test), fractions):
        if fraction > 0 and size == 0:
            raise InputError(f"{c} experiments are too few for a nonempty {name} partition")
    order = np.random.default_rng([*seed_key(seed), SPLIT_STREAM]).permutation(c)
    train = sorted(order[:n_train])
    val = sorted(order[n_train:n_train + n_val])
    test = sorted(order[n_train + n_val:])
    return dataset.subset(train), dataset.subset(val), dataset.subset(test)


def tune_hyperparameter(
    solver: str,
    grid: Sequence[float],
    train: RegressionProblem,
    validation: RegressionProblem,
    **options,
) -> Tuple[float, SolveReport]:
    """Pick the grid value whose fit has the smallest validation residual.

    Ties go to the smallest value. Grid points whose solve fails are skipped
    with a warning.

    Raises:
        InputError: Empty grid.
        SolverError: Every grid point failed.
    """
    if not len(grid):
        raise InputError(f"Hyperparameter grid for '{solver}' is empty")
    best: Optional[Tuple[float, float, SolveReport]] = None
    for value in sorted(float(v) for v in grid):
        try:
            report = run_solver(solver, train, hyperparameter=value, **options)
        except SOLVE_ERRORS as e:
            logger.warning("%s: skipping grid value %g: %s", solver, value, e)
            continue
        residual = validation_residual(validation, report.omega)
        logger.debug("%s: value %g -> validation residual %.6e", solver, value, residual)
        if best is None or residual < best[1]:
            best = (value, residual, report)
    if best is None:
        raise SolverError(f"Every grid value failed for solver '{solver}'")
    return best[0], best[2]


def feasible_region(
    config: ExperimentConfig,
    model: ModelSpec,
    dictionary: Dictionary,
    problem: RegressionProblem,
    alpha: float,
    constrained: bool,
    train: Optional[Dataset] = None,
) -> Polytope:
    """The l1 ball of radius alpha, with the benchmark's structural constraints when requested."""
    shape = (problem.n, problem.d)
    if not constrained:
        return build_polytope(alpha, scales=problem.scales, shape=shape)
    ties, generals = benchmark_constraints(model, dictionary)
    if config.conservation_band_eps is not None and train is not None:
        Y = np.hstack([e.y for e in train.experiments])
        generals = generals + conservation_band(
            dictionary, Y, config.conservation_band_weights, config.conservation_band_target, config.conservation_band_eps
        )
    return build_polytope(alpha, ties, generals, scales=problem.scales, shape=shape)


@dataclass
class FitResult:
    """One solver run on one cell, with unscaled coefficients and metrics."""

    solver: str
    report: SolveReport
    omega: CoefficientMatrix
    metrics: MetricReport
    alpha: float
    zero_tol: float
    hyperparameter: Optional[float] = None


@dataclass
class CellData:
    """Problems shared by every solver of one cell."""

    model: ModelSpec
    dictionary: Dictionary
    xi: CoefficientMatrix
    train: Dataset
    validation: Dataset
    test: Dataset
    train_problem: RegressionProblem
    validation_problem: Optional[RegressionProblem]
    alpha: float
    spec: EstimatorSpec


def prepare_cell(config: ExperimentConfig, clean: Dataset, eta_index: int, eta: float, rep: int) -> CellData:
    """Contaminate, split and assemble the training and validation problems of a cell."""
    model = clean.model
    dictionary = config.build_dictionary(model)
    spec = config.estimator_spec()
    noisy = contaminate(clean, eta, (config.seed, eta_index, rep))
    train, validation, test = split_dataset(noisy, config.split, (config.seed, rep))
    train_problem = build_problem(train, dictionary, config.formulation, spec)
    validation_problem = None
    if validation.experiments:
        validation_problem = build_problem(validation, dictionary, config.formulation, spec, scales=train_problem.scales)
    alpha = config.alpha if config.alpha is not None else default_radius(train_problem)
    return CellData(
        model,
        dictionary,
        true_coefficients(model, dictionary),
        train,
        validation,
        test,
        train_problem,
        validation_problem,
        alpha,
        spec,
    )


def fit_solver(config: ExperimentConfig, cell: CellData, solver: str) -> FitResult:
    """Solve one cell with one registered solver and score the unscaled result."""
    entry = SOLVER_MAP[solver]
    hyperparameter = None
    if entry.tuned:
        if cell.validation_problem is None:
            raise InputError(f"Solver '{solver}' needs a validation partition for tuning")
        hyperparameter, report = tune_hyperparameter(
            solver, config.solver_grid(solver), cell.train_problem, cell.validation_problem
        )
    else:
        polytope = feasible_region(
            config, cell.model, cell.dictionary, cell.train_problem, cell.alpha, config.constrained(solver), cell.train
        )
        report = run_solver(
            solver,
            cell.train_problem,
            polytope,
            monitor=cell.validation_problem,
            max_iters=config.max_iters,
            gap_tol=config.gap_tol,
        )
    omega = unscale_coefficients(report.omega, cell.train_problem.scales)
    zero_tol = config.zero_tol if config.zero_tol is not None else default_zero_tol(solver, omega)
    metrics = compute_metrics(omega, cell.xi, cell.test, cell.dictionary, cell.spec, zero_tol)
    return FitResult(solver, report, omega, metrics, cell.alpha, zero_tol, hyperparameter)


def generate_clean(config: ExperimentConfig, rep: int, model: Optional[ModelSpec] = None) -> Dataset:
    protocol = config.protocol()
    return generate_experiments(
        model or config.build_model(),
        protocol.n_experiments,
        protocol.total_points,
        protocol.t_max,
        protocol.sampler,
        seed=(config.seed, rep),
    )


def coefficient_payload(fit: FitResult, dictionary: Dictionary, model: ModelSpec, eta: float, rep: int) -> dict:
    return {
        "solver": fit.solver,
        "eta": eta,
        "rep": rep,
        "alpha": fit.alpha,
        "hyperparameter": fit.hyperparameter,
        "zero_tol": fit.zero_tol,
        "flags": list(fit.report.flags),
        "model": model.to_dict(),
        "dictionary": dictionary.name,
        "coefficients": coefficient_report(fit.omega, dictionary, fit.zero_tol),
        "omega": fit.omega.tolist(),
    }


@dataclass
class ResultsBundle:
    """Per-cell rows, failures and coefficient payloads of a sweep."""

    results: pd.DataFrame
    failures: pd.DataFrame
    coefficients: Dict[str, dict] = field(default_factory=dict)
    interrupted: bool = False

    @property
    def aggregate(self) -> pd.DataFrame:
        return aggregate_results(self.results)


def aggregate_results(results: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation per (solver, formulation, eta) of the plotted quantities."""
    if results.empty:
        return pd.DataFrame()
    frame = results.copy()
    positive = frame["eta"] > 0
    for name in ("E_R", "E_D", "E_T"):
        frame[f"{name}_ratio"] = np.where(positive, frame[name] / frame["eta"].where(positive, 1.0), np.nan)
    quantities = ["E_R_ratio", "E_D_ratio", "E_T_ratio", "E_R", "E_D", "E_T", "S_E", "S_M"]
    grouped = frame.groupby(["solver", "formulation", "eta"], sort=False)[quantities].agg(["mean", "std"])
    grouped.columns = [f"{name}_{stat}" for name, stat in grouped.columns]
    return grouped.reset_index()


def _run_cell(
    config: ExperimentConfig,
    clean_for: "_CleanCache",
    eta_index: int,
    eta: float,
    rep: int,
) -> Tuple[List[dict], List[dict], Dict[str, dict]]:
    rows, failures, payloads = [], [], {}
    if stop_requested.is_set():
        return rows, failures, payloads
    try:
        clean = clean_for(rep)
        cell = prepare_cell(config, clean, eta_index, eta, rep)
    except SOLVE_ERRORS as e:
        logger.warning("Cell eta=%g rep=%d failed before solving: %s", eta, rep, e)
        for solver in config.solvers:
            failures.append(_failure_row(solver, eta, rep, e))
        return rows, failures, payloads

    for solver in config.solvers:
        if stop_requested.is_set():
            break
        try:
            fit = fit_solver(config, cell, solver)
        except SOLVE_ERRORS as e:
            logger.warning("%s failed at eta=%g rep=%d: %s", solver, eta, rep, e)
            failures.append(_failure_row(solver, eta, rep, e))
            continue
        rows.append(
            {
                "solver": solver,
                "formulation": config.formulation.value,
                "eta": float(eta),
                "rep": rep,
                "E_R": fit.metrics.E_R,
                "E_D": fit.metrics.E_D,
                "E_T": fit.metrics.E_T,
                "S_E": fit.metrics.S_E,
                "S_M": fit.metrics.S_M,
                "fw_gap": fit.report.fw_gap,
                "iters": fit.report.iterations,
                "seconds": fit.report.seconds if config.record_timings else 0.0,
            }
        )
        payloads[f"{solver}_{eta:g}_{rep}"] = coefficient_payload(fit, cell.dictionary, cell.model, eta, rep)
    logger.info("Finished cell eta=%g rep=%d (%d solvers)", eta, rep, len(rows))
    return rows, failures, payloads


def _failure_row(solver: str, eta: float, rep: int, error: Exception) -> dict:
    return {"solver": solver, "eta": float(eta), "rep": rep, "error": type(error).__name__, "message": str(error)}


class _CleanCache:
    """Clean experiments of each repetition, generated once and shared by every noise level."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.model = config.build_model()
        self._lock = threading.Lock()
        self._rep_locks: Dict[int, threading.Lock] = {}
        self._datasets: Dict[int, Dataset] = {}

    def __call__(self, rep: int) -> Dataset:
        with self._lock:
            rep_lock = self._rep_locks.setdefault(rep, threading.Lock())
        with rep_lock:
            if rep not in self._datasets:
                logger.info("Generating clean experiments for repetition %d", rep)
                self._datasets[rep] = generate_clean(self.config, rep, self.model)
            return self._datasets[rep]


def run_sweep(config: ExperimentConfig) -> ResultsBundle:
    """Run every (noise level, repetition) cell of a configuration.

    Per-cell failures are recorded and the sweep continues. If a stop is
    requested, cells that have not started are skipped and the bundle is
    marked interrupted.
    """
    clean_for = _CleanCache(config)
    cells = [(i, eta, rep) for i, eta in enumerate(config.etas) for rep in range(config.repetitions)]
    outcomes: Dict[Tuple[int, int], Tuple[List[dict], List[dict], Dict[str, dict]]] = {}
    logger.info("Sweeping %d cells with %d worker(s)", len(cells), config.workers)

    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        futures = {executor.submit(_run_cell, config, clean_for, i, eta, rep): (i, rep) for i, eta, rep in cells}
        for future in as_completed(futures):
            outcomes[futures[future]] = future.result()
            if stop_requested.is_set():
                for pending in futures:
                    pending.cancel()

    rows, failures, payloads = [], [], {}
    for key in sorted(outcomes):
        cell_rows, cell_failures, cell_payloads = outcomes[key]
        rows.extend(cell_rows)
        failures.extend(cell_failures)
        payloads.update(cell_payloads)
    interrupted = stop_requested.is_set() or len(outcomes) < len(cells)
    if interrupted:
        logger.warning("Sweep interrupted after %d of %d cells", len(outcomes), len(cells))
    return ResultsBundle(
        pd.DataFrame(rows, columns=RESULT_COLUMNS),
        pd.DataFrame(failures, columns=FAILURE_COLUMNS),
        payloads,
        interrupted,
    )


def sample_efficiency_sweep(config: ExperimentConfig, sample_grid: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Mean E_R, S_E and S_M over repetitions for every (solver, eta, points per experiment).

    Each sample count regenerates the experiments with that many points on the
    same time horizon.
    """
    sample_grid = list(sample_grid if sample_grid is not None else config.sample_grid)
    if not sample_grid:
        raise InputError("Sample grid is empty")
    protocol = config.protocol()
    frames = []
    for points in sample_grid:
        if stop_requested.is_set():
            break
        cell_config = config.model_copy(update={"total_points": int(points) * protocol.n_experiments})
        bundle = run_sweep(cell_config)
        if bundle.results.empty:
            continue
        means = bundle.results.groupby(["solver", "eta"], sort=False)[["E_R", "S_E", "S_M"]].mean().reset_index()
        means.insert(2, "samples", int(points))
        frames.append(means)
    columns = ["solver", "eta", "samples", "E_R", "S_E", "S_M"]
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)[columns]


@dataclass
class TrajectoryComparison:
    """Learned and true trajectories from one initial state.

    The series stop early at blowup_time when the learned dynamic diverges.
    """

    t: np.ndarray
    learned: np.ndarray
    true: np.ndarray
    divergence: np.ndarray
    blowup_time: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.t}
        for i in range(self.learned.shape[0]):
            data[f"learned_x_{i + 1}"] = self.learned[i]
        for i in range(self.true.shape[0]):
            data[f"true_x_{i + 1}"] = self.true[i]
        data["divergence"] = self.divergence
        return pd.DataFrame(data)


def simulate_comparison(
    omega: CoefficientMatrix,
    xi: CoefficientMatrix,
    model: ModelSpec,
    dictionary: Dictionary,
    x0: np.ndarray,
    t_max: float,
    dt_out: float,
    v0: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
) -> TrajectoryComparison:
    """Integrate the learned dynamic Omega^T psi and the true model from the same start.

    Second-order models integrate x'' = Omega^T psi(x) from (x0, v0). The
    reference trajectory comes from the model itself, which equals
    integrating Xi^T psi.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape != np.shape(xi):
        raise InputError(f"Coefficient shapes differ: {omega.shape} vs {np.shape(xi)}")
    if not (t_max > 0 and dt_out > 0):
        raise InputError("t_max and dt_out must be positive")
    d = model.dimension
    t = np.arange(0.0, t_max + 0.5 * dt_out, dt_out)
    x0 = np.asarray(x0, dtype=float)

    def learned_rate(x):
        return omega.T @ dictionary.evaluate(x[:, None])[:, 0]

    if model.order == 1:
        fun, start = learned_rate, x0
    else:
        v = np.zeros(d) if v0 is None else np.asarray(v0, dtype=float)
        start = np.concatenate([x0, v])

        def fun(y):
            return np.concatenate([y[d:], learned_rate(y[:d])])

    blowup_time = None
    try:
        learned = integrate_rhs(fun, start, t, tol)[:d]
    except IntegrationError as e:
        logger.warning("Learned dynamic diverged at t=%.6g", e.time)
        blowup_time = e.time
        learned = np.asarray(e.states)[:d] if e.states is not None else np.zeros((d, 0))
    true = integrate(model, x0, t, v0=v0, tol=tol).x
    steps = learned.shape[1]
    divergence = np.linalg.norm(learned - true[:, :steps], axis=0)
    return TrajectoryComparison(t[:steps], learned, true[:, :steps], divergence, blowup_time)
