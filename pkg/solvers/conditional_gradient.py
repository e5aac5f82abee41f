"""
Conditional gradient (Frank-Wolfe) solvers for the constrained LASSO problem.

* cg_solve: vanilla conditional gradients with exact line search.
* fccg_solve: fully-corrective variant, reoptimizing over the convex hull of
  every vertex collected so far after each oracle call.
* bcg_solve: blended conditional gradients. Cheap approximate corrections
  over the active set are interleaved with oracle steps, and the accuracy
  Phi is halved whenever the Frank-Wolfe gap drops below it.

All iterates are convex combinations of polytope vertices (and, for CG and
FCCG, the starting point), so they stay feasible, and a coefficient that no
vertex touches stays exactly zero.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from constraints.polytope import Polytope
from core.errors import InputError, SolverError
from problem.regression import RegressionProblem, exact_linesearch, gradient, objective
from solvers.oracles import lmo
from solvers.subproblem import SimplexQuadratic, apgd_simplex

logger = logging.getLogger(__name__)

DEFAULT_GAP_TOL = 1e-6
DEFAULT_MAX_ITERS = 5000


class ActiveSet:
    """Vertices S with barycentric weights lambda; the iterate is sum_i lambda_i V_i.

    Keeps H V_i for every vertex so the simplex subproblem matrices
    Q_ij = <V_i, H V_j> and c_i = <V_i, C> grow incrementally.
    """

    def __init__(self, problem: RegressionProblem):
        self.problem = problem
        self.vertices: List[np.ndarray] = []
        self.keys: List[bytes] = []
        self.lam = np.zeros(0)
        self._HV: List[np.ndarray] = []
        self._Q = np.zeros((0, 0))
        self._c = np.zeros(0)

    def __len__(self) -> int:
        return len(self.vertices)

    def index_of(self, vertex: np.ndarray) -> Optional[int]:
        key = np.ascontiguousarray(vertex).tobytes()
        return self.keys.index(key) if key in self.keys else None

    def add(self, vertex: np.ndarray) -> int:
        """Insert a vertex with weight 0 (no-op if already present); returns its index."""
        existing = self.index_of(vertex)
        if existing is not None:
            return existing
        vertex = np.array(vertex, dtype=float)
        hv = self.problem.H @ vertex
        row = np.array([np.sum(v * hv) for v in self.vertices])
        k = len(self.vertices)
        Q = np.zeros((k + 1, k + 1))
        Q[:k, :k] = self._Q
        Q[k, :k] = row
        Q[:k, k] = row
        Q[k, k] = np.sum(vertex * hv)
        self._Q = Q
        self._c = np.append(self._c, np.sum(vertex * self.problem.C))
        self.vertices.append(vertex)
        self.keys.append(vertex.tobytes())
        self._HV.append(hv)
        self.lam = np.append(self.lam, 0.0)
        return k

    def iterate(self) -> np.ndarray:
        out = np.zeros((self.problem.n, self.problem.d))
        for weight, v in zip(self.lam, self.vertices):
            if weight:
                out += weight * v
        return out

    def quadratic(self) -> SimplexQuadratic:
        return SimplexQuadratic(self._Q, self._c, self.problem.b_norm_sq)

    def step_towards(self, index: int, gamma: float):
        """lambda <- (1 - gamma) lambda + gamma e_index."""
        self.lam *= 1.0 - gamma
        self.lam[index] += gamma

    def purge(self):
        """Drop vertices whose weight is exactly zero."""
        keep = np.flatnonzero(self.lam > 0.0)
        if keep.size == len(self.vertices):
            return
        self.vertices = [self.vertices[i] for i in keep]
        self.keys = [self.keys[i] for i in keep]
        self._HV = [self._HV[i] for i in keep]
        self._Q = self._Q[np.ix_(keep, keep)]
        self._c = self._c[keep]
        self.lam = self.lam[keep] / np.sum(self.lam[keep])


@dataclass
class SolveReport:
    """Outcome of one solve; omega is in the problem's (normalized) coefficient space."""

    solver: str
    omega: np.ndarray
    iterations: int = 0
    fw_gap: float = float("nan")
    converged: bool = False
    objective_trace: List[float] = field(default_factory=list)
    gap_trace: List[float] = field(default_factory=list)
    vertex_trace: List[int] = field(default_factory=list)
    monitor_trace: List[float] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    seconds: float = 0.0
    hyperparameter: Optional[float] = None

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")

    @property
    def vertex_count(self) -> int:
        return self.vertex_trace[-1] if self.vertex_trace else 0

    def flag(self, name: str, warn: bool = True):
        if name not in self.flags:
            self.flags.append(name)
            if warn:
                logger.warning("%s: %s", self.solver, name.replace("_", " "))

    def to_dict(self, include_timing: bool = False) -> dict:
        return {
            "solver": self.solver,
            "iterations": self.iterations,
            "fw_gap": self.fw_gap,
            "converged": self.converged,
            "objective_trace": self.objective_trace,
            "gap_trace": self.gap_trace,
            "vertex_trace": self.vertex_trace,
            "monitor_trace": self.monitor_trace,
            "flags": self.flags,
            "hyperparameter": self.hyperparameter,
            "seconds": self.seconds if include_timing else 0.0,
        }

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)


class _Recorder:
    """Appends per-iteration traces to a report and checks for divergence."""

    def __init__(self, report: SolveReport, problem: RegressionProblem, monitor: Optional[RegressionProblem]):
        self.report = report
        self.problem = problem
        self.monitor = monitor

    def __call__(self, omega: np.ndarray, gap: float, vertices: int):
        value = objective(self.problem, omega)
        if not np.isfinite(value):
            raise SolverError(f"{self.report.solver}: objective became non-finite at iteration {self.report.iterations}")
        self.report.objective_trace.append(value)
        self.report.gap_trace.append(float(gap))
        self.report.vertex_trace.append(vertices)
        if self.monitor is not None:
            self.report.monitor_trace.append(objective(self.monitor, omega))
        self.report.fw_gap = float(gap)
        logger.debug("%s it=%d f=%.6e gap=%.3e |S|=%d", self.report.solver, self.report.iterations, value, gap, vertices)


def _check_inputs(problem: RegressionProblem, polytope: Polytope, omega0: Optional[np.ndarray]) -> np.ndarray:
    if (polytope.n, polytope.d) != (problem.n, problem.d):
        raise InputError(f"Polytope is over {polytope.n} x {polytope.d} matrices, problem needs {problem.n} x {problem.d}")
    if omega0 is None:
        zero = np.zeros((problem.n, problem.d))
        if polytope.contains(zero, tol=1e-9):
            return zero
        # e.g. a conservation band excluding 0: start from any feasible vertex
        return lmo(zero, polytope).vertex
    omega0 = problem.check_shape(omega0).copy()
    if not polytope.contains(omega0, tol=1e-9):
        raise InputError("Starting point is not feasible")
    return omega0


def _oracle(G: np.ndarray, polytope: Polytope, report: SolveReport):
    result = lmo(G, polytope)
    if result.zero_gradient:
        report.flag("zero_gradient")
    return result.vertex


def _fw_gap(omega: np.ndarray, vertex: np.ndarray, G: np.ndarray) -> float:
    # clipped at 0: the gap is nonnegative in exact arithmetic
    return max(float(np.sum((omega - vertex) * G)), 0.0)


def _finish(report: SolveReport, problem: RegressionProblem, polytope: Polytope, omega: np.ndarray, start: float) -> SolveReport:
    """Store the returned iterate; without convergence its gap is evaluated afresh."""
    if not report.converged:
        G = gradient(problem, omega)
        report.fw_gap = _fw_gap(omega, lmo(G, polytope).vertex, G)
    report.omega = omega
    report.seconds = time.perf_counter() - start
    return report


def cg_solve(
    problem: RegressionProblem,
    polytope: Polytope,
    omega1: Optional[np.ndarray] = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    gap_tol: float = DEFAULT_GAP_TOL,
    monitor: Optional[RegressionProblem] = None,
) -> SolveReport:
    """Vanilla conditional gradients with exact line search.

    Stops when the Frank-Wolfe gap is <= gap_tol or after max_iters oracle calls.
    """
    start = time.perf_counter()
    omega = _check_inputs(problem, polytope, omega1)
    report = SolveReport("cg", omega)
    record = _Recorder(report, problem, monitor)
    active = ActiveSet(problem)
    active.lam[active.add(omega)] = 1.0

    for k in range(1, max_iters + 1):
        report.iterations = k
        G = gradient(problem, omega)
        vertex = _oracle(G, polytope, report)
        gap = _fw_gap(omega, vertex, G)
        record(omega, gap, len(active))
        if gap <= gap_tol:
            report.converged = True
            break
        direction = vertex - omega
        step = exact_linesearch(problem, omega, direction, G)
        if step.null_direction:
            report.flag("null_direction")
            break
        if step.clipped and k > 1:
            report.flag("step_clipped", warn=False)
        index = active.add(vertex)
        active.step_towards(index, step.gamma)
        active.purge()
        omega = omega + step.gamma * direction

    return _finish(report, problem, polytope, omega, start)


def _correct(active: ActiveSet, gap_target: float, max_iters: int, report: SolveReport):
    """Reoptimize the weights of the active set to simplex gap <= gap_target.

    The correction is rejected if it would raise the objective, so traces stay
    monotone even when the accelerated method overshoots.
    """
    quad = active.quadratic()
    before = quad.value(active.lam)
    result = apgd_simplex(quad, active.lam, gap_target, max_iters)
    if not result.converged:
        report.flag("subproblem_iteration_cap")
    if quad.value(result.lam) <= before:
        active.lam = result.lam
    active.purge()


def fccg_solve(
    problem: RegressionProblem,
    polytope: Polytope,
    omega1: Optional[np.ndarray] = None,
    max_iters: int = 1000,
    gap_tol: float = DEFAULT_GAP_TOL,
    sub_tol: float = 1e-10,
    sub_max_iters: int = 10000,
    monitor: Optional[RegressionProblem] = None,
) -> SolveReport:
    """Fully-corrective conditional gradients.

    The starting point (zero by default) seeds the active set, so the first
    correction is the best fit along the first oracle vertex.
    """
    start = time.perf_counter()
    omega = _check_inputs(problem, polytope, omega1)
    report = SolveReport("fccg", omega)
    record = _Recorder(report, problem, monitor)
    active = ActiveSet(problem)
    active.lam[active.add(omega)] = 1.0

    for k in range(1, max_iters + 1):
        report.iterations = k
        G = gradient(problem, omega)
        vertex = _oracle(G, polytope, report)
        gap = _fw_gap(omega, vertex, G)
        record(omega, gap, len(active))
        if gap <= gap_tol:
            report.converged = True
            break
        active.add(vertex)
        _correct(active, sub_tol, sub_max_iters, report)
        omega = active.iterate()

    return _finish(report, problem, polytope, omega, start)


def bcg_solve(
    problem: RegressionProblem,
    polytope: Polytope,
    omega0: Optional[np.ndarray] = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    gap_tol: float = DEFAULT_GAP_TOL,
    sub_max_iters: int = 10000,
    monitor: Optional[RegressionProblem] = None,
) -> SolveReport:
    """Blended conditional gradients.

    Starting from Omega_1 = LMO(grad f(Omega_0)) with accuracy
    Phi = <Omega_0 - Omega_1, grad f(Omega_0)> / 2, every iteration first
    corrects over the active set until its simplex gap is <= Phi, then calls
    the oracle. If the Frank-Wolfe gap is <= Phi, Phi is set to half the gap;
    otherwise the new vertex joins the active set and an exact line-search
    step is taken from the corrected iterate. Terminates when the gap is
    <= gap_tol.
    """
    start = time.perf_counter()
    omega = _check_inputs(problem, polytope, omega0)
    report = SolveReport("bcg", omega)
    record = _Recorder(report, problem, monitor)

    G = gradient(problem, omega)
    vertex = _oracle(G, polytope, report)
    gap = _fw_gap(omega, vertex, G)
    if gap <= gap_tol:
        record(omega, gap, 0)
        report.converged = True
        report.seconds = time.perf_counter() - start
        return report
    phi = gap / 2.0
    active = ActiveSet(problem)
    active.lam[active.add(vertex)] = 1.0
    omega = vertex.copy()

    for k in range(1, max_iters + 1):
        report.iterations = k
        _correct(active, phi, sub_max_iters, report)
        omega = active.iterate()
        G = gradient(problem, omega)
        vertex = _oracle(G, polytope, report)
        gap = _fw_gap(omega, vertex, G)
        record(omega, gap, len(active))
        if gap <= gap_tol:
            report.converged = True
            break
        if gap <= phi:
            phi = gap / 2.0
            continue
        direction = vertex - omega
        step = exact_linesearch(problem, omega, direction, G)
        if step.null_direction:
            report.flag("null_direction")
            break
        active.step_towards(active.add(vertex), step.gamma)
        active.purge()

    return _finish(report, problem, polytope, active.iterate() if len(active) else omega, start)
