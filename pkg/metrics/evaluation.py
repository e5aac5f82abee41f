"""
Recovery, inference and support metrics against the true dynamic.

All metrics compare unscaled coefficient matrices. The inference errors use
raw (unnormalized) features of the test experiments:

    E_R = ||Omega - Xi||_F
    E_D = ||(Omega - Xi)^T Psi(Y_test)||_F
    E_T = ||(Omega - Xi)^T Gamma(Y_test)||_F
"""

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from core.errors import InputError
from dynamics.experiments import Dataset
from estimation.derivatives import EstimatorSpec
from estimation.quadrature import build_gamma
from library.dictionary import CoefficientMatrix, Dictionary, evaluate

logger = logging.getLogger(__name__)

# Relative zero tolerance for solvers that leave tiny dense entries.
BASELINE_ZERO_RTOL = 1e-8


@dataclass(frozen=True)
class MetricReport:
    E_R: float
    E_D: float
    E_T: float
    S_E: int
    S_M: int
    eta: float = 0.0

    def _ratio(self, value: float) -> float:
        return value / self.eta if self.eta > 0 else float("nan")

    @property
    def E_R_ratio(self) -> float:
        return self._ratio(self.E_R)

    @property
    def E_D_ratio(self) -> float:
        return self._ratio(self.E_D)

    @property
    def E_T_ratio(self) -> float:
        return self._ratio(self.E_T)

    def to_dict(self) -> dict:
        row = asdict(self)
        row.update(E_R_ratio=self.E_R_ratio, E_D_ratio=self.E_D_ratio, E_T_ratio=self.E_T_ratio)
        return row


def _difference(omega: CoefficientMatrix, xi: CoefficientMatrix) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if omega.shape != xi.shape:
        raise InputError(f"Coefficient shapes differ: {omega.shape} vs {xi.shape}")
    return omega - xi


def recovery_error(omega: CoefficientMatrix, xi: CoefficientMatrix) -> float:
    return float(np.linalg.norm(_difference(omega, xi)))


def derivative_error(omega: CoefficientMatrix, xi: CoefficientMatrix, test: Dataset, dictionary: Dictionary) -> float:
    """Frobenius norm of the derivative mismatch on the raw test features."""
    delta = _difference(omega, xi)
    total = 0.0
    for experiment in test.experiments:
        mismatch = delta.T @ evaluate(dictionary, experiment.y)
        total += float(np.sum(mismatch * mismatch))
    return float(np.sqrt(total))


def trajectory_error(
    omega: CoefficientMatrix,
    xi: CoefficientMatrix,
    test: Dataset,
    dictionary: Dictionary,
    spec: Optional[EstimatorSpec] = None,
) -> float:
    """Like derivative_error, with the integrated features Gamma of every test experiment."""
    delta = _difference(omega, xi)
    total = 0.0
    for experiment in test.experiments:
        gamma = build_gamma(evaluate(dictionary, experiment.y), experiment.t, spec)
        mismatch = delta.T @ gamma
        total += float(np.sum(mismatch * mismatch))
    return float(np.sqrt(total))


def support_errors(omega: CoefficientMatrix, xi: CoefficientMatrix, zero_tol: float = 0.0) -> Tuple[int, int]:
    """(extraneous, missing) term counts.

    An entry of omega counts as nonzero when |value| > zero_tol; xi is read
    exactly.
    """
    if zero_tol < 0:
        raise InputError(f"Zero tolerance must be nonnegative, got {zero_tol}")
    _difference(omega, xi)
    found = np.abs(np.asarray(omega, dtype=float)) > zero_tol
    true = np.asarray(xi) != 0
    return int(np.sum(found & ~true)), int(np.sum(~found & true))


def default_zero_tol(solver: str, omega: CoefficientMatrix) -> float:
    """0 for the conditional gradient family, a tolerance relative to max |Omega| for the baselines."""
    if solver in ("stlsq", "fista"):
        peak = float(np.max(np.abs(omega))) if np.size(omega) else 0.0
        return BASELINE_ZERO_RTOL * peak
    return 0.0


def compute_metrics(
    omega: CoefficientMatrix,
    xi: CoefficientMatrix,
    test: Dataset,
    dictionary: Dictionary,
    spec: Optional[EstimatorSpec] = None,
    zero_tol: float = 0.0,
) -> MetricReport:
    """Every metric for one unscaled solution against the truth on a test split."""
    s_e, s_m = support_errors(omega, xi, zero_tol)
    report = MetricReport(
        E_R=recovery_error(omega, xi),
        E_D=derivative_error(omega, xi, test, dictionary),
        E_T=trajectory_error(omega, xi, test, dictionary, spec),
        S_E=s_e,
        S_M=s_m,
        eta=float(test.eta),
    )
    logger.debug("Metrics: E_R=%.3e E_D=%.3e E_T=%.3e S_E=%d S_M=%d", report.E_R, report.E_D, report.E_T, s_e, s_m)
    return report
