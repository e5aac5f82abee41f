"""
Experiment configuration.

Settings come from three layers, later ones winning:

1. environment variables (a .env file is read with python-dotenv),
2. a TOML sweep file validated into ExperimentConfig,
3. command-line flags.

Environment variables:
    SPARSEDYN_OUTPUT_DIR      output directory (default "results")
    SPARSEDYN_LOG_LEVEL       logging level (default "INFO")
    SPARSEDYN_WORKERS         sweep work-pool size (default 1)
    SPARSEDYN_RECORD_TIMINGS  write wall-clock seconds to results (default 0)
"""

import os
import sys
from typing import Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.errors import ConfigError, InputError
from dynamics.experiments import ExperimentProtocol, default_protocol
from dynamics.models import ModelSpec, default_dictionary, get_model
from estimation.derivatives import DerivativeMethod, EstimatorSpec, Quadrature, VelocitySource
from library.dictionary import Dictionary, monomial_dictionary, trig_pairwise_dictionary
from problem.regression import Formulation
from solvers.registry import FISTA_GRID, SOLVER_MAP, STLSQ_GRID, normalize_solver_name

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Load environment variables
load_dotenv()


def env_output_dir() -> str:
    return os.getenv("SPARSEDYN_OUTPUT_DIR", "results")


def env_log_level() -> str:
    return os.getenv("SPARSEDYN_LOG_LEVEL", "INFO").upper()


def env_workers() -> int:
    try:
        return max(int(os.getenv("SPARSEDYN_WORKERS", "1")), 1)
    except ValueError:
        raise ConfigError("SPARSEDYN_WORKERS must be an integer")


def env_record_timings() -> bool:
    return os.getenv("SPARSEDYN_RECORD_TIMINGS", "0").strip().lower() in ("1", "true", "yes", "on")


class EstimatorSettings(BaseModel):
    """Derivative and quadrature settings (see EstimatorSpec)."""

    model_config = ConfigDict(extra="forbid")

    method: DerivativeMethod = DerivativeMethod.LOCAL_POLY
    degree: int = Field(8, ge=1, description="Local polynomial degree")
    window: Optional[int] = Field(None, description="Odd window length, 2*degree+1 when omitted")
    quadrature: Quadrature = Quadrature.LOCAL_POLY_INTEGRAL
    velocity: VelocitySource = VelocitySource.ESTIMATED

    def to_spec(self) -> EstimatorSpec:
        return EstimatorSpec(self.method, self.degree, self.window, 1, self.quadrature, self.velocity)


class ExperimentConfig(BaseModel):
    """One noise sweep: benchmark, data protocol, solvers and output."""

    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    model: str = Field("kuramoto", description="Benchmark name")
    dimension: Optional[int] = Field(None, ge=1, description="State dimension for Kuramoto and FPUT")
    model_params: Dict[str, float] = Field(default_factory=dict, description="Overrides of preset parameters")
    model_seed: int = Field(0, description="Seed for randomly drawn model parameters")

    dictionary: Literal["auto", "monomial", "trig_pairwise"] = "auto"
    max_degree: int = Field(3, ge=0, description="Degree of a monomial dictionary")

    formulation: Formulation = Formulation.INTEGRAL
    estimator: EstimatorSettings = Field(default_factory=EstimatorSettings)
    constraints: bool = Field(False, description="Impose structural constraints on every conditional gradient solver")
    conservation_band_eps: Optional[float] = Field(None, gt=0, description="Half-width of an approximate conservation band")
    conservation_band_weights: Optional[List[float]] = Field(None, description="Weights a of the conserved rate sum_j a_j x_j'")
    conservation_band_target: float = Field(0.0, description="Value c the weighted rate is held near")

    solvers: List[str] = Field(default_factory=lambda: ["bcg", "bcg_c", "stlsq", "fista"])
    etas: List[float] = Field(default_factory=lambda: [1e-8, 1e-6, 1e-4, 1e-2])
    repetitions: int = Field(20, ge=1)
    split: Tuple[float, float, float] = (0.7, 0.2, 0.1)
    stlsq_grid: List[float] = Field(default_factory=lambda: list(STLSQ_GRID))
    fista_grid: List[float] = Field(default_factory=lambda: list(FISTA_GRID))
    sample_grid: List[int] = Field(default_factory=list, description="Points per experiment for sample-efficiency sweeps")

    n_experiments: Optional[int] = Field(None, ge=1)
    total_points: Optional[int] = Field(None, ge=2)
    t_max: Optional[float] = Field(None, gt=0)
    init_sampler: Optional[str] = None

    alpha: Optional[float] = Field(None, gt=0, description="l1 radius; twice the least-squares l1 norm when omitted")
    gap_tol: float = Field(1e-6, gt=0)
    max_iters: int = Field(5000, ge=1)
    zero_tol: Optional[float] = Field(None, ge=0, description="Support tolerance; solver-dependent default when omitted")
    seed: int = 0

    output_dir: str = Field(default_factory=env_output_dir)
    workers: int = Field(default_factory=env_workers, ge=1)
    record_timings: bool = Field(default_factory=env_record_timings)

    @field_validator("solvers")
    @classmethod
    def _known_solvers(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one solver is required")
        try:
            names = [normalize_solver_name(name) for name in value]
        except InputError as e:
            raise ValueError(str(e))
        return list(dict.fromkeys(names))

    @field_validator("etas")
    @classmethod
    def _nonnegative_etas(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("the noise grid is empty")
        if any(not eta >= 0 for eta in value):
            raise ValueError("noise levels must be nonnegative")
        return value

    @field_validator("split")
    @classmethod
    def _fractions(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(f < 0 for f in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be nonnegative and sum to 1, got {value}")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if "stlsq" in self.solvers and not self.stlsq_grid:
            raise ValueError("stlsq_grid is empty")
        if "fista" in self.solvers and not self.fista_grid:
            raise ValueError("fista_grid is empty")
        if self.conservation_band_eps is not None and self.conservation_band_weights is None:
            raise ValueError("conservation_band_weights are required with conservation_band_eps")
        protocol = self.protocol()
        if protocol.total_points % protocol.n_experiments:
            raise ValueError(
                f"n_experiments={protocol.n_experiments} does not divide total_points={protocol.total_points}"
            )
        points = protocol.total_points // protocol.n_experiments
        if any(s < 2 or s > points for s in self.sample_grid):
            raise ValueError(f"sample_grid values must lie in [2, {points}]")
        estimator = self.estimator
        if estimator.method == DerivativeMethod.LOCAL_POLY or estimator.quadrature == Quadrature.LOCAL_POLY_INTEGRAL:
            window = estimator.window or 2 * estimator.degree + 1
            if min([points, *self.sample_grid]) < window:
                raise ValueError(f"sample_grid and points per experiment must reach the local polynomial window {window}")
        return self

    def build_model(self) -> ModelSpec:
        return get_model(self.model, self.dimension, seed=self.model_seed, **self.model_params)

    def build_dictionary(self, model: Optional[ModelSpec] = None) -> Dictionary:
        model = model or self.build_model()
        if self.dictionary == "monomial":
            return monomial_dictionary(model.dimension, self.max_degree)
        if self.dictionary == "trig_pairwise":
            return trig_pairwise_dictionary(model.dimension)
        return default_dictionary(model)

    def protocol(self) -> ExperimentProtocol:
        base = default_protocol(self.build_model())
        return ExperimentProtocol(
            self.n_experiments or base.n_experiments,
            self.total_points or base.total_points,
            self.t_max or base.t_max,
            self.init_sampler or base.sampler,
        )

    def estimator_spec(self) -> EstimatorSpec:
        return self.estimator.to_spec()

    def solver_grid(self, solver: str) -> Tuple[float, ...]:
        if solver == "stlsq":
            return tuple(self.stlsq_grid)
        if solver == "fista":
            return tuple(self.fista_grid)
        return ()

    def constrained(self, solver: str) -> bool:
        entry = SOLVER_MAP[solver]
        return entry.constrained or (self.constraints and not entry.tuned)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def make_config(**values) -> ExperimentConfig:
    """Validate a mapping of settings.

    Raises:
        ConfigError: Naming every offending field.
    """
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {_describe(e)}")
    except InputError as e:
        raise ConfigError(f"Invalid configuration: {e}")


def load_config(path: str, **overrides) -> ExperimentConfig:
    """Read a TOML sweep file; keyword overrides that are not None replace file values."""
    try:
        with open(path, "rb") as f:
            values = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid TOML: {e}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return make_config(**values)
