class HFELError(Exception):
    """Base class for all errors raised by the package."""


class ConstraintViolation(HFELError, ValueError):
    """A decision variable is outside its feasible range."""


class DegenerateInput(HFELError, ValueError):
    """Input makes a formula undefined (division by zero, empty weights)."""


class StructuralError(HFELError, ValueError):
    """A grouping is not a valid partition, or a group is empty where it may not be."""


class AvailabilityError(HFELError, ValueError):
    """A device was placed with a server that cannot reach it."""


class ScenarioError(HFELError, ValueError):
    """Scenario parameters cannot produce a valid world."""


class SolverError(HFELError, RuntimeError):
    """The allocation solver did not converge.

    ``best`` carries the last iterate so callers can inspect or fall back.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class StepSizeError(HFELError, FloatingPointError):
    """Gradient iterations diverged."""
