"""
Experiment generation, noise contamination and dataset persistence.

A dataset holds c experiments simulated from random initial states, each
sampled at T/c equally spaced times on [0, t_max]. Noise is added with
y = x + eta * N(0, Sigma), where Sigma is the diagonal of per-component
sample variances (divisor T) of the pooled clean states.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import InputError
from dynamics.integrator import DEFAULT_TOL, integrate
from dynamics.models import ModelKind, ModelSpec, rhs

logger = logging.getLogger(__name__)

# Stream ids for numpy.random.default_rng([seed, experiment, stream]).
INIT_STREAM = 0
NOISE_STREAM = 1
VELOCITY_NOISE_STREAM = 2

InitSampler = Callable[[np.random.Generator, ModelSpec], Tuple[np.ndarray, Optional[np.ndarray]]]

# An integer seed, or an integer tuple such as (seed, eta index, repetition).
SeedKey = Union[int, Tuple[int, ...]]


def seed_key(seed: SeedKey) -> Tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


@dataclass(frozen=True)
class Experiment:
    """One simulated trajectory and its noisy observation.

    Args:
        t: Time grid, strictly increasing.
        x: d x m clean states.
        x_dot: d x m clean first derivatives.
        y: d x m noisy states.
        x_ddot: d x m clean second derivatives (second-order models).
        w: d x m noisy velocities (second-order models).
    """

    t: np.ndarray
    x: np.ndarray
    x_dot: np.ndarray
    y: np.ndarray
    x_ddot: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None

    @property
    def v(self) -> np.ndarray:
        return self.x_dot

    @property
    def m(self) -> int:
        return self.t.size


@dataclass(frozen=True)
class Dataset:
    model: ModelSpec
    experiments: Tuple[Experiment, ...]
    eta: float = 0.0
    sigma_diag: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seed: SeedKey = 0
    velocity_sigma_diag: Optional[np.ndarray] = None

    @property
    def n_experiments(self) -> int:
        return len(self.experiments)

    @property
    def points_per_experiment(self) -> int:
        return self.experiments[0].m if self.experiments else 0

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return replace(self, experiments=tuple(self.experiments[i] for i in indices))

    def truncated(self, points: int) -> "Dataset":
        """Keep the first `points` samples of every experiment."""
        if points < 2 or points > self.points_per_experiment:
            raise InputError(f"Cannot keep {points} of {self.points_per_experiment} points per experiment")
        cut = []
        for e in self.experiments:
            sl = slice(0, points)
            cut.append(
                Experiment(
                    e.t[sl],
                    e.x[:, sl],
                    e.x_dot[:, sl],
                    e.y[:, sl],
                    None if e.x_ddot is None else e.x_ddot[:, sl],
                    None if e.w is None else e.w[:, sl],
                )
            )
        return replace(self, experiments=tuple(cut))


@dataclass(frozen=True)
class ExperimentProtocol:
    """Default data-generation settings for a benchmark."""

    n_experiments: int
    total_points: int
    t_max: float
    sampler: str


def default_protocol(model: ModelSpec) -> ExperimentProtocol:
    if model.kind == ModelKind.KURAMOTO:
        return ExperimentProtocol(40, 6000, 10.0, "uniform_angle")
    if model.kind == ModelKind.FPUT:
        return ExperimentProtocol(150, 900 * model.dimension, 1.0, "uniform_symmetric")
    if model.kind == ModelKind.MICHAELIS_MENTEN:
        return ExperimentProtocol(150, 6000, 0.01, "uniform_unit")
    return ExperimentProtocol(20, 2000, 10.0, "uniform_symmetric")


def _uniform(low: float, high: float) -> InitSampler:
    def sampler(rng: np.random.Generator, model: ModelSpec):
        x0 = rng.uniform(low, high, model.dimension)
        return x0, (np.zeros(model.dimension) if model.order == 2 else None)

    return sampler


INIT_SAMPLERS: Dict[str, InitSampler] = {
    "uniform_angle": _uniform(0.0, 2.0 * np.pi),
    "uniform_unit": _uniform(0.0, 1.0),
    "uniform_symmetric": _uniform(-1.0, 1.0),
}


def get_sampler(name: str) -> InitSampler:
    normalized_name = name.lower().replace(" ", "_").replace("-", "_")
    if normalized_name not in INIT_SAMPLERS:
        raise InputError(f"Unknown initial-state sampler '{name}'. Available: {list(INIT_SAMPLERS)}")
    return INIT_SAMPLERS[normalized_name]


def sinusoid_initial_state(d: int) -> np.ndarray:
    """Unit-amplitude half sine over a chain with pinned ends."""
    return np.sin(np.pi * np.arange(1, d + 1) / (d + 1))


def _clean_experiment(model: ModelSpec, t: np.ndarray, x0, v0, tol: float) -> Experiment:
    traj = integrate(model, x0, t, v0=v0, tol=tol)
    if model.order == 1:
        return Experiment(t, traj.x, rhs(model, traj.x), traj.x.copy())
    x_ddot = rhs(model, traj.x, traj.v)
    return Experiment(t, traj.x, traj.v, traj.x.copy(), x_ddot, traj.v.copy())


def generate_experiments(
    model: ModelSpec,
    c: int,
    T: int,
    t_max: float,
    init_sampler="uniform_angle",
    seed: SeedKey = 0,
    tol: float = DEFAULT_TOL,
) -> Dataset:
    """Simulate c experiments with T/c equally spaced samples each on [0, t_max].

    Clean first (and, for second-order models, second) derivatives are stored
    alongside the states for oracle checks.

    Raises:
        InputError: If c does not divide T, or t_max is not positive.
    """
    if c < 1 or T < c or T % c:
        raise InputError(f"Experiment count {c} must divide the total number of points {T}")
    if not t_max > 0:
        raise InputError(f"t_max must be positive, got {t_max}")
    sampler = get_sampler(init_sampler) if isinstance(init_sampler, str) else init_sampler
    t = np.linspace(0.0, t_max, T // c)
    experiments = []
    for j in range(c):
        rng = np.random.default_rng([*seed_key(seed), j, INIT_STREAM])
        x0, v0 = sampler(rng, model)
        experiments.append(_clean_experiment(model, t, x0, v0, tol))
    logger.debug("Generated %d %s experiments of %d points", c, model.kind.value, T // c)
    return Dataset(
        model,
        tuple(experiments),
        eta=0.0,
        sigma_diag=np.zeros(model.dimension),
        seed=seed,
        velocity_sigma_diag=np.zeros(model.dimension) if model.order == 2 else None,
    )


def pooled_variance(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Per-row variance (divisor = total sample count) of column-concatenated blocks."""
    pooled = np.concatenate(blocks, axis=1)
    mu = pooled.mean(axis=1, keepdims=True)
    return np.mean((pooled - mu) ** 2, axis=1)


def contaminate(dataset: Dataset, eta: float, seed: SeedKey) -> Dataset:
    """Return a copy of the dataset with Gaussian measurement noise of level eta.

    Clean arrays are shared, never modified. Second-order models get their
    stored velocities contaminated the same way, with their own variances.
    """
    if not eta >= 0:
        raise InputError(f"Noise level must be nonnegative, got {eta}")
    sigma = pooled_variance([e.x for e in dataset.experiments])
    has_velocity = dataset.model.order == 2
    sigma_v = pooled_variance([e.x_dot for e in dataset.experiments]) if has_velocity else None

    noisy = []
    for j, e in enumerate(dataset.experiments):
        rng = np.random.default_rng([*seed_key(seed), j, NOISE_STREAM])
        y = e.x + eta * np.sqrt(sigma)[:, None] * rng.standard_normal(e.x.shape)
        w = None
        if has_velocity:
            rng_v = np.random.default_rng([*seed_key(seed), j, VELOCITY_NOISE_STREAM])
            w = e.x_dot + eta * np.sqrt(sigma_v)[:, None] * rng_v.standard_normal(e.x.shape)
        noisy.append(replace(e, y=y, w=w))
    return replace(
        dataset,
        experiments=tuple(noisy),
        eta=float(eta),
        sigma_diag=sigma,
        seed=seed,
        velocity_sigma_diag=sigma_v,
    )


def _columns(prefix: str, d: int):
    return [f"{prefix}_{i + 1}" for i in range(d)]


def save_dataset(dataset: Dataset, directory: str) -> str:
    """Write manifest.json plus one CSV per experiment; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    d = dataset.model.dimension
    second_order = dataset.model.order == 2
    files = []
    for j, e in enumerate(dataset.experiments):
        frame = {"t": e.t}
        blocks = [("x", e.x)] + ([("v", e.x_dot)] if second_order else [])
        blocks += [("y", e.y)] + ([("w", e.w)] if second_order else [])
        for prefix, values in blocks:
            for name, row in zip(_columns(prefix, d), values):
                frame[name] = row
        name = f"experiment_{j:04d}.csv"
        pd.DataFrame(frame).to_csv(os.path.join(directory, name), index=False)
        files.append(name)

    t = dataset.experiments[0].t if dataset.experiments else np.zeros(0)
    manifest = {
        "model": dataset.model.to_dict(),
        "eta": dataset.eta,
        "seed": list(seed_key(dataset.seed)),
        "sigma_diag": [float(s) for s in dataset.sigma_diag],
        "velocity_sigma_diag": None
        if dataset.velocity_sigma_diag is None
        else [float(s) for s in dataset.velocity_sigma_diag],
        "grid": {"points": int(t.size), "t_start": float(t[0]) if t.size else 0.0, "t_max": float(t[-1]) if t.size else 0.0},
        "experiments": files,
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def load_dataset(directory: str) -> Dataset:
    with open(os.path.join(directory, "manifest.json")) as f:
        manifest = json.load(f)
    model = ModelSpec.from_dict(manifest["model"])
    d = model.dimension
    experiments = []
    for name in manifest["experiments"]:
        frame = pd.read_csv(os.path.join(directory, name), float_precision="round_trip")
        t = frame["t"].to_numpy()
        x = frame[_columns("x", d)].to_numpy().T
        y = frame[_columns("y", d)].to_numpy().T
        if model.order == 1:
            experiments.append(Experiment(t, x, rhs(model, x), y))
        else:
            v = frame[_columns("v", d)].to_numpy().T
            w = frame[_columns("w", d)].to_numpy().T
            experiments.append(Experiment(t, x, v, y, rhs(model, x, v), w))
    velocity_sigma = manifest.get("velocity_sigma_diag")
    return Dataset(
        model,
        tuple(experiments),
        eta=float(manifest["eta"]),
        sigma_diag=np.asarray(manifest["sigma_diag"], dtype=float),
        seed=tuple(manifest["seed"]) if len(manifest["seed"]) > 1 else manifest["seed"][0],
        velocity_sigma_diag=None if velocity_sigma is None else np.asarray(velocity_sigma, dtype=float),
    )
