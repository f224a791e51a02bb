# exceptions.py
from typing import Any, Optional

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class SheMfcError(Exception):
    """Base exception for shemfc errors."""
    exit_code: int = EXIT_VALIDATION


# --- Validation failures (exit code 2) ---

class InvalidSpec(SheMfcError):
    """A kernel spec or noise model violates its invariants."""
    pass

class DomainError(SheMfcError):
    """An argument lies outside the domain of a special function."""
    pass

class SingularPoint(SheMfcError):
    """A kernel or weight was evaluated at one of its singular points."""
    pass

class NoClosedForm(SheMfcError):
    """A closed-form method was requested where none exists."""
    pass

class Unsupported(SheMfcError):
    """The operation is not defined for this combination of inputs."""
    pass

class ConditionViolated(SheMfcError):
    """A hypothesis required for a bound or critical time does not hold."""
    pass

class GridMismatch(SheMfcError):
    """Paths and weights do not share a compatible time grid."""
    pass

class InvalidEpsList(SheMfcError):
    """The list of regularisation parameters is not strictly decreasing."""
    pass

class ProposalUnavailable(SheMfcError):
    """No importance-sampling proposal exists for the kernel family."""
    pass

class ConfigurationError(SheMfcError):
    """Error related to loading or validating configuration."""
    pass


# --- Numerical failures (exit code 3) ---

class NumericalFailure(SheMfcError):
    """Base class for failures that carry a partial result."""
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.message = message
        self.partial = partial

class QuadratureFailure(NumericalFailure):
    """Adaptive integration did not reach the requested tolerance."""
    pass

class NoConvergence(NumericalFailure):
    """A series tail bound could not be brought under tolerance."""
    pass

class EvaluatorError(NumericalFailure):
    """A Monte Carlo evaluator failed on a chunk of samples."""
    def __init__(self, message: str, start: int, stop: int, cause: Optional[BaseException] = None):
        super().__init__(f"{message} (samples [{start}, {stop}))")
        self.start = start
        self.stop = stop
        self.cause = cause


# --- Warnings ---

class RegimeWarning(UserWarning):
    """A computation runs outside the proven existence regime."""
    pass

class VarianceWarning(UserWarning):
    """A Monte Carlo estimator is likely to have very large variance."""
    pass
