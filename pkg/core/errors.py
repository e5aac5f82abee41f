"""Exception types shared by every package in the project."""

from typing import Optional


class SparseDynError(Exception):
    """Base class for all errors raised by this project."""


class InputError(SparseDynError, ValueError):
    """Bad shapes, grids, counts or parameters supplied by the caller."""


class ConfigError(SparseDynError, ValueError):
    """An experiment configuration failed validation."""


class UnrepresentableModelError(SparseDynError, ValueError):
    """A model right-hand side uses a term the dictionary does not contain."""


class IntegrationError(SparseDynError, RuntimeError):
    """The ODE integrator could not reach the end of the time grid.

    Args:
        message: Description of the failure.
        time: Simulation time at which integration stopped.
        t: Grid times reached before the failure.
        states: States at those times (one column per time).
    """

    def __init__(self, message: str, time: Optional[float] = None, t=None, states=None):
        super().__init__(message)
        self.time = time
        self.t = t
        self.states = states


class DegenerateProblemError(SparseDynError, ValueError):
    """The regression problem carries no information (e.g. all-zero features)."""


class ConstraintError(SparseDynError, ValueError):
    """Structural constraints could not be built or are contradictory."""


class InfeasibleConstraintsError(SparseDynError, RuntimeError):
    """The feasible region defined by the constraints is empty."""


class SolverError(SparseDynError, RuntimeError):
    """An optimization routine failed (non-finite objective, oracle failure)."""
