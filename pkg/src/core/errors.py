"""
Exception hierarchy shared by the GrwSim core and the scenario runner.
"""


class GrwError(Exception):
    """Base class for all GrwSim errors."""


class ContractViolation(GrwError, ValueError):
    """An argument broke an operation's precondition."""


class DomainError(GrwError, ValueError):
    """A constitutive law was evaluated outside its domain."""


class TimeStepError(GrwError):
    """Jump probabilities violate their caps, or no admissible time step exists."""


class ConvergenceError(GrwError):
    """Raised by callers that require a converged solution."""

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


class ConfigError(GrwError):
    """Unknown scenario, unknown configuration key or invalid value."""


class EstimationError(GrwError, ValueError):
    """Post-processing input too short or degenerate."""
