"""
Basis-function dictionaries.

A dictionary is an ordered list of named basis functions psi_i. Evaluating it
on a d x m matrix of states gives the n x m feature matrix Psi(X) that the
regression problems are assembled from. The order is deterministic and every
other module (ground-truth coefficients, symmetry ties, reports) indexes
coefficient rows by it:

* monomials: graded-lexicographic, constant first
  (1, x_1, ..., x_d, x_1^2, x_1*x_2, ..., x_d^3)
* trig pairs: 1, sin(x_i) for all i, cos(x_i) for all i, then
  sin(x_i)*sin(x_j) (i<j), sin(x_i)*cos(x_j) (all i, j), cos(x_i)*cos(x_j) (i<j)
"""

import itertools
import json
import logging
import re
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from core.errors import InputError

logger = logging.getLogger(__name__)

MONOMIAL = "monomial"
TRIG = "trig"

# n x d coefficient matrices are plain arrays whose rows follow dictionary order.
CoefficientMatrix = np.ndarray

Tags = Tuple[str, Tuple[int, ...], Tuple[int, ...]]


@dataclass(frozen=True)
class BasisFunction:
    """One ansatz function psi_i.

    Args:
        id: Position of the function in its dictionary.
        label: Canonical human-readable name, e.g. "sin(x_1)*cos(x_3)".
        family: MONOMIAL or TRIG.
        powers: Per-variable monomial powers (MONOMIAL) or sine powers (TRIG).
        cos_powers: Per-variable cosine powers (TRIG only).
    """

    id: int
    label: str
    family: str
    powers: Tuple[int, ...]
    cos_powers: Tuple[int, ...] = ()

    @property
    def tags(self) -> Tags:
        return (self.family, self.powers, self.cos_powers)

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on every column of a d x m state matrix."""
        out = np.ones(X.shape[1])
        if self.family == MONOMIAL:
            for i, p in enumerate(self.powers):
                if p:
                    out = out * X[i] ** p
        else:
            for i, (a, b) in enumerate(zip(self.powers, self.cos_powers)):
                if a:
                    out = out * np.sin(X[i]) ** a
                if b:
                    out = out * np.cos(X[i]) ** b
        return out

    def __call__(self, x: Sequence[float]) -> float:
        return float(self.evaluate(np.asarray(x, dtype=float).reshape(-1, 1))[0])


@dataclass(frozen=True)
class Dictionary:
    """Ordered collection of basis functions over d state variables."""

    functions: Tuple[BasisFunction, ...]
    dimension: int
    name: str = ""

    def __post_init__(self):
        if not self.functions:
            raise InputError("A dictionary needs at least one basis function")
        labels = set()
        for position, fn in enumerate(self.functions):
            if fn.id != position:
                raise InputError(f"Basis function '{fn.label}' has id {fn.id}, expected {position}")
            if fn.label in labels:
                raise InputError(f"Duplicate basis label '{fn.label}'")
            labels.add(fn.label)

    @property
    def n(self) -> int:
        return len(self.functions)

    @property
    def labels(self) -> List[str]:
        return [fn.label for fn in self.functions]

    @cached_property
    def _by_tags(self) -> Dict[Tags, int]:
        return {fn.tags: fn.id for fn in self.functions}

    @cached_property
    def _by_label(self) -> Dict[str, int]:
        return {fn.label: fn.id for fn in self.functions}

    def index_of(self, tags: Tags) -> int:
        """Row index of the function with the given tags; KeyError if absent."""
        return self._by_tags[tags]

    def index_of_label(self, label: str) -> int:
        return self._by_label[label]

    def contains(self, tags: Tags) -> bool:
        return tags in self._by_tags

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        return evaluate(self, X)

    def to_json(self) -> str:
        entries = [
            {
                "id": fn.id,
                "label": fn.label,
                "tags": {
                    "family": fn.family,
                    "powers": list(fn.powers),
                    "cos_powers": list(fn.cos_powers),
                },
            }
            for fn in self.functions
        ]
        return json.dumps(entries, indent=2, sort_keys=True)


@dataclass(frozen=True)
class RowScales:
    """Per-feature-row divisors applied by row_normalize."""

    scales: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.scales) > 0)):
            raise InputError("Row scales must be strictly positive")

    def __len__(self) -> int:
        return len(self.scales)

    @classmethod
    def ones(cls, n: int) -> "RowScales":
        return cls(np.ones(n))


def _variable(i: int) -> str:
    return f"x_{i + 1}"


def _power_label(factor: str, p: int) -> str:
    return factor if p == 1 else f"{factor}^{p}"


def monomial_dictionary(d: int, max_degree: int) -> Dictionary:
    """All monomials in d variables with total degree <= max_degree.

    The cardinality is binom(d + max_degree, max_degree), e.g. 56 for d=5 and
    degree 3.
    """
    if d < 1 or max_degree < 0:
        raise InputError(f"Invalid monomial dictionary request: d={d}, max_degree={max_degree}")
    functions = []
    for degree in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), degree):
            powers = [0] * d
            for i in combo:
                powers[i] += 1
            label = "*".join(_power_label(_variable(i), p) for i, p in enumerate(powers) if p) or "1"
            functions.append(BasisFunction(len(functions), label, MONOMIAL, tuple(powers)))
    return Dictionary(tuple(functions), d, name=f"monomial(d={d},degree={max_degree})")


def trig_pairwise_dictionary(d: int, include_squares: bool = False) -> Dictionary:
    """Products of at most two sines/cosines of distinct-power factors, cardinality 1+d+2d^2.

    With include_squares the rank-deficient variant is built: sin(x_i)^2 and
    cos(x_i)^2 are appended, which makes Psi(X) lose full rank against the
    constant. It exists for tests of that failure mode.
    """
    if d < 1:
        raise InputError(f"Invalid trig dictionary dimension d={d}")
    entries: List[Tuple[Tuple[int, ...], Tuple[int, ...]]] = []

    def unit(i: int) -> List[int]:
        v = [0] * d
        v[i] = 1
        return v

    zero = [0] * d
    entries.append((tuple(zero), tuple(zero)))
    entries.extend((tuple(unit(i)), tuple(zero)) for i in range(d))
    entries.extend((tuple(zero), tuple(unit(i))) for i in range(d))
    for i, j in itertools.combinations(range(d), 2):
        sines = unit(i)
        sines[j] = 1
        entries.append((tuple(sines), tuple(zero)))
    for i in range(d):
        for j in range(d):
            entries.append((tuple(unit(i)), tuple(unit(j))))
    for i, j in itertools.combinations(range(d), 2):
        cosines = unit(i)
        cosines[j] = 1
        entries.append((tuple(zero), tuple(cosines)))
    if include_squares:
        for i in range(d):
            sq = [0] * d
            sq[i] = 2
            entries.append((tuple(sq), tuple(zero)))
            entries.append((tuple(zero), tuple(sq)))

    functions = []
    for sines, cosines in entries:
        factors = [_power_label(f"sin({_variable(i)})", a) for i, a in enumerate(sines) if a]
        factors += [_power_label(f"cos({_variable(i)})", b) for i, b in enumerate(cosines) if b]
        label = "*".join(factors) or "1"
        functions.append(BasisFunction(len(functions), label, TRIG, sines, cosines))
    suffix = ",squares" if include_squares else ""
    return Dictionary(tuple(functions), d, name=f"trig_pairwise(d={d}{suffix})")


def evaluate(dictionary: Dictionary, X: np.ndarray) -> np.ndarray:
    """Feature matrix Psi(X): entry (i, j) is psi_i evaluated at column j of X.

    Non-finite inputs propagate into the output; a RuntimeWarning is issued
    so callers can notice.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != dictionary.dimension:
        raise InputError(f"Expected a {dictionary.dimension} x m state matrix, got shape {X.shape}")
    if X.shape[1] < 1:
        raise InputError("Cannot evaluate a dictionary on zero samples")
    features = np.vstack([fn.evaluate(X) for fn in dictionary.functions])
    if not np.all(np.isfinite(features)):
        logger.warning("Non-finite values in feature matrix of %s", dictionary.name)
        warnings.warn("non-finite values in dictionary evaluation", RuntimeWarning, stacklevel=2)
    return features


def row_normalize(M: np.ndarray) -> Tuple[np.ndarray, RowScales]:
    """Scale every row of M to unit sample standard deviation.

    Rows with zero variance (the constant feature) keep scale 1.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] < 2:
        raise InputError(f"Row normalization needs at least two columns, got shape {M.shape}")
    std = M.std(axis=1, ddof=1)
    magnitude = np.max(np.abs(M), axis=1)
    flat = std <= 1e-12 * np.maximum(magnitude, 1.0)
    scales = np.where(flat, 1.0, std)
    return M / scales[:, None], RowScales(scales)


def unscale_coefficients(omega_scaled: np.ndarray, scales: Union[RowScales, np.ndarray]) -> CoefficientMatrix:
    """Map coefficients fitted on normalized features back to raw features."""
    s = scales.scales if isinstance(scales, RowScales) else np.asarray(scales, dtype=float)
    omega_scaled = np.asarray(omega_scaled, dtype=float)
    if omega_scaled.shape[0] != len(s):
        raise InputError(f"Coefficient rows ({omega_scaled.shape[0]}) do not match scales ({len(s)})")
    return omega_scaled / s[:, None]


def coefficient_report(omega: np.ndarray, dictionary: Dictionary, zero_tol: float = 0.0) -> Dict[str, List[dict]]:
    """Labelled nonzero coefficients for each state column ("x_1", "x_2", ...)."""
    report = {}
    for j in range(omega.shape[1]):
        rows = np.flatnonzero(np.abs(omega[:, j]) > zero_tol)
        report[_variable(j)] = [
            {"id": int(i), "label": dictionary.functions[i].label, "value": float(omega[i, j])} for i in rows
        ]
    return report


_NAME_PATTERN = re.compile(r"^(monomial|trig_pairwise)\(d=(\d+)(?:,degree=(\d+))?(,squares)?\)$")


def dictionary_from_name(name: str) -> Dictionary:
    """Rebuild a dictionary from its name, e.g. "monomial(d=5,degree=3)" or "trig_pairwise(d=5)"."""
    match = _NAME_PATTERN.match(name.strip())
    if match is None:
        raise InputError(f"Unrecognized dictionary name '{name}'")
    family, d, degree, squares = match.groups()
    if family == "monomial":
        if degree is None:
            raise InputError(f"Monomial dictionary name '{name}' lacks a degree")
        return monomial_dictionary(int(d), int(degree))
    return trig_pairwise_dictionary(int(d), include_squares=squares is not None)
