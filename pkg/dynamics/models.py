"""
Benchmark dynamical systems.

Each model is described by a ModelSpec. rhs() evaluates the governing
equations (vectorized over columns), true_coefficients() expresses them as
an n x d coefficient matrix over a dictionary.

    Kuramoto           x_i' = w_i + K/d sum_j sin(x_j - x_i) + h sin(x_i)
    FPUT               x_i'' = (x_{i+1} - 2x_i + x_{i-1})
                               + beta [(x_{i+1} - x_i)^3 - (x_i - x_{i-1})^3],  x_0 = x_{d+1} = 0
    Michaelis-Menten   E' = -kf E S + (kr + kcat) ES,  S' = -kf E S + kr ES,
                       ES' = kf E S - (kr + kcat) ES,  P' = kcat ES
    Spring-mass        m x_1'' = -k1 x_1 + k2 (x_2 - x_1),  m x_2'' = -k2 (x_2 - x_1) - k3 x_2
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from core.errors import InputError, UnrepresentableModelError
from library.dictionary import MONOMIAL, TRIG, CoefficientMatrix, Dictionary, monomial_dictionary, trig_pairwise_dictionary


class ModelKind(str, Enum):
    KURAMOTO = "kuramoto"
    FPUT = "fput"
    MICHAELIS_MENTEN = "michaelis_menten"
    SPRING_MASS = "spring_mass"


SECOND_ORDER = {ModelKind.FPUT, ModelKind.SPRING_MASS}

REQUIRED_PARAMS = {
    ModelKind.KURAMOTO: ("K", "h"),
    ModelKind.FPUT: ("beta",),
    ModelKind.MICHAELIS_MENTEN: ("k_f", "k_r", "k_cat"),
    ModelKind.SPRING_MASS: ("m", "k_1", "k_2", "k_3"),
}

# Species order of the Michaelis-Menten state vector.
MM_SPECIES = ("E", "S", "ES", "P")


@dataclass(frozen=True)
class ModelSpec:
    """A benchmark ODE and its parameters.

    Args:
        kind: Which system.
        dimension: Number of state variables d.
        params: Named real parameters (see REQUIRED_PARAMS).
        frequencies: Kuramoto natural frequencies w_1..w_d.
    """

    kind: ModelKind
    dimension: int
    params: Dict[str, float] = field(default_factory=dict)
    frequencies: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.dimension < 1:
            raise InputError(f"Model dimension must be >= 1, got {self.dimension}")
        missing = [p for p in REQUIRED_PARAMS[self.kind] if p not in self.params]
        if missing:
            raise InputError(f"{self.kind.value} model is missing parameters {missing}")
        if self.kind == ModelKind.MICHAELIS_MENTEN and self.dimension != 4:
            raise InputError("The Michaelis-Menten model has exactly 4 species")
        if self.kind == ModelKind.SPRING_MASS and self.dimension != 2:
            raise InputError("The spring-mass model has exactly 2 bodies")
        if self.kind == ModelKind.KURAMOTO and len(self.frequencies) != self.dimension:
            raise InputError(f"Kuramoto model needs {self.dimension} natural frequencies, got {len(self.frequencies)}")

    @property
    def order(self) -> int:
        return 2 if self.kind in SECOND_ORDER else 1

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "dimension": self.dimension,
            "params": dict(self.params),
            "frequencies": list(self.frequencies),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(
            ModelKind(data["kind"]),
            int(data["dimension"]),
            {k: float(v) for k, v in data["params"].items()},
            tuple(float(w) for w in data.get("frequencies", ())),
        )


def kuramoto(d: int, K: float = 2.0, h: float = 0.2, seed: int = 0) -> ModelSpec:
    """Kuramoto oscillators with natural frequencies drawn from U[0, 1]."""
    frequencies = np.random.default_rng([seed, 0]).uniform(0.0, 1.0, d)
    return ModelSpec(ModelKind.KURAMOTO, d, {"K": K, "h": h}, tuple(float(w) for w in frequencies))


def fput(d: int, beta: float = 0.7) -> ModelSpec:
    return ModelSpec(ModelKind.FPUT, d, {"beta": beta})


def michaelis_menten(k_f: float = 0.01, k_r: float = 1.0, k_cat: float = 1.0) -> ModelSpec:
    return ModelSpec(ModelKind.MICHAELIS_MENTEN, 4, {"k_f": k_f, "k_r": k_r, "k_cat": k_cat})


def spring_mass(m: float = 1.0, k_1: float = 1.0, k_2: float = 0.5, k_3: float = 1.0) -> ModelSpec:
    return ModelSpec(ModelKind.SPRING_MASS, 2, {"m": m, "k_1": k_1, "k_2": k_2, "k_3": k_3})


MODEL_PRESETS = {
    "kuramoto": kuramoto,
    "fput": fput,
    "michaelis_menten": michaelis_menten,
    "spring_mass": spring_mass,
}


def get_model(name: str, dimension: Optional[int] = None, seed: int = 0, **params) -> ModelSpec:
    """Build a preset model by name ("Kuramoto", "fput", "michaelis-menten", ...)."""
    normalized_name = name.lower().replace(" ", "_").replace("-", "_")
    if normalized_name in ("mm", "michaelismenten"):
        normalized_name = "michaelis_menten"
    if normalized_name not in MODEL_PRESETS:
        raise InputError(f"Unknown model '{name}'. Available models: {list(MODEL_PRESETS)}")
    if normalized_name == "kuramoto":
        return kuramoto(dimension or 5, seed=seed, **params)
    if normalized_name == "fput":
        return fput(dimension or 5, **params)
    if dimension not in (None, 4 if normalized_name == "michaelis_menten" else 2):
        raise InputError(f"Model '{normalized_name}' has a fixed dimension")
    return MODEL_PRESETS[normalized_name](**params)


def rhs(model: ModelSpec, state: np.ndarray, velocity: Optional[np.ndarray] = None) -> np.ndarray:
    """Right-hand side of the model.

    Returns x' for first-order models and x'' for second-order ones. state may
    be a d-vector or a d x m matrix of column states.
    """
    x = np.asarray(state, dtype=float)
    if x.shape[0] != model.dimension:
        raise InputError(f"State has {x.shape[0]} components, model dimension is {model.dimension}")
    if (velocity is not None) != (model.order == 2):
        raise InputError(f"velocity must be supplied exactly for second-order models ({model.kind.value})")
    if velocity is not None and np.shape(velocity) != x.shape:
        raise InputError(f"velocity shape {np.shape(velocity)} does not match state shape {x.shape}")

    p = model.params
    if model.kind == ModelKind.KURAMOTO:
        d = model.dimension
        s, c = np.sin(x), np.cos(x)
        omega = np.asarray(model.frequencies).reshape((d,) + (1,) * (x.ndim - 1))
        coupling = c * s.sum(axis=0) - s * c.sum(axis=0)
        return omega + p["K"] / d * coupling + p["h"] * s

    if model.kind == ModelKind.FPUT:
        zeros = np.zeros((1,) + x.shape[1:])
        padded = np.concatenate([zeros, x, zeros], axis=0)
        right = padded[2:] - padded[1:-1]
        left = padded[1:-1] - padded[:-2]
        return (right - left) + p["beta"] * (right ** 3 - left ** 3)

    if model.kind == ModelKind.MICHAELIS_MENTEN:
        e, s, es, _ = x
        binding = p["k_f"] * e * s
        return np.stack(
            [
                -binding + (p["k_r"] + p["k_cat"]) * es,
                -binding + p["k_r"] * es,
                binding - (p["k_r"] + p["k_cat"]) * es,
                p["k_cat"] * es,
            ]
        )

    x1, x2 = x
    return np.stack(
        [
            (-p["k_1"] * x1 + p["k_2"] * (x2 - x1)) / p["m"],
            (-p["k_2"] * (x2 - x1) - p["k_3"] * x2) / p["m"],
        ]
    )


def _monomial(d: int, **powers: int) -> Tuple[int, ...]:
    exps = [0] * d
    for name, power in powers.items():
        exps[int(name[1:])] += power
    return tuple(exps)


def _cube_of_difference(d: int, a: Optional[int], b: Optional[int]) -> Iterator[Tuple[Tuple[int, ...], float]]:
    """Monomial expansion of (x_a - x_b)^3 where None stands for a pinned zero."""
    for k, coef in enumerate((1.0, -3.0, 3.0, -1.0)):
        pa, pb = 3 - k, k
        if (a is None and pa) or (b is None and pb):
            continue
        exps = [0] * d
        if a is not None:
            exps[a] += pa
        if b is not None:
            exps[b] += pb
        yield tuple(exps), coef


def _rhs_terms(model: ModelSpec) -> Dict[Tuple[int, tuple], float]:
    """Symbolic right-hand side as {(column, basis tags): coefficient}."""
    d = model.dimension
    p = model.params
    terms: Dict[Tuple[int, tuple], float] = {}

    def add(column: int, tags: tuple, coef: float):
        key = (column, tags)
        terms[key] = terms.get(key, 0.0) + coef

    def mono(exps: Tuple[int, ...]) -> tuple:
        return (MONOMIAL, exps, ())

    zero = (0,) * d
    if model.kind == ModelKind.KURAMOTO:
        unit = [tuple(int(k == i) for k in range(d)) for i in range(d)]
        for i in range(d):
            add(i, (TRIG, zero, zero), model.frequencies[i])
            add(i, (TRIG, unit[i], zero), p["h"])
            for j in range(d):
                if j == i:
                    continue
                add(i, (TRIG, unit[j], unit[i]), p["K"] / d)
                add(i, (TRIG, unit[i], unit[j]), -p["K"] / d)
    elif model.kind == ModelKind.FPUT:
        beta = p["beta"]
        for i in range(d):
            right = i + 1 if i + 1 < d else None
            left = i - 1 if i > 0 else None
            add(i, mono(_monomial(d, **{f"x{i}": 1})), -2.0)
            for nb in (right, left):
                if nb is not None:
                    add(i, mono(_monomial(d, **{f"x{nb}": 1})), 1.0)
            for exps, coef in _cube_of_difference(d, right, i):
                add(i, mono(exps), beta * coef)
            for exps, coef in _cube_of_difference(d, i, left):
                add(i, mono(exps), -beta * coef)
    elif model.kind == ModelKind.MICHAELIS_MENTEN:
        es_bind = mono(_monomial(4, x0=1, x1=1))
        es = mono(_monomial(4, x2=1))
        add(0, es_bind, -p["k_f"])
        add(0, es, p["k_r"] + p["k_cat"])
        add(1, es_bind, -p["k_f"])
        add(1, es, p["k_r"])
        add(2, es_bind, p["k_f"])
        add(2, es, -(p["k_r"] + p["k_cat"]))
        add(3, es, p["k_cat"])
    else:
        m = p["m"]
        add(0, mono(_monomial(2, x0=1)), (-p["k_1"] - p["k_2"]) / m)
        add(0, mono(_monomial(2, x1=1)), p["k_2"] / m)
        add(1, mono(_monomial(2, x0=1)), p["k_2"] / m)
        add(1, mono(_monomial(2, x1=1)), (-p["k_2"] - p["k_3"]) / m)
    return terms


def true_coefficients(model: ModelSpec, dictionary: Dictionary) -> CoefficientMatrix:
    """Ground-truth Xi with rhs(x) = Xi^T psi(x) for every state x.

    Raises:
        UnrepresentableModelError: If a nonzero term of the model is not in the dictionary.
    """
    if dictionary.dimension != model.dimension:
        raise UnrepresentableModelError(
            f"Dictionary is over {dictionary.dimension} variables, model has {model.dimension}"
        )
    xi = np.zeros((dictionary.n, model.dimension))
    for (column, tags), coef in _rhs_terms(model).items():
        if coef == 0.0:
            continue
        if not dictionary.contains(tags):
            raise UnrepresentableModelError(
                f"{model.kind.value} term with tags {tags} is missing from dictionary {dictionary.name}"
            )
        xi[dictionary.index_of(tags), column] = coef
    return xi


def default_dictionary(model: ModelSpec) -> Dictionary:
    """The dictionary a benchmark is recovered over.

    Kuramoto uses the pairwise trigonometric library, FPUT and the spring-mass
    system monomials up to degree 3, Michaelis-Menten monomials up to degree 2.
    """
    if model.kind == ModelKind.KURAMOTO:
        return trig_pairwise_dictionary(model.dimension)
    if model.kind == ModelKind.MICHAELIS_MENTEN:
        return monomial_dictionary(model.dimension, 2)
    return monomial_dictionary(model.dimension, 3)
