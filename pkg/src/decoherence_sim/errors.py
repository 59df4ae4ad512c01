"""Exception hierarchy shared across the package."""


class DecoherenceSimError(Exception):
    """Base class for all errors raised by decoherence_sim."""


class ValidationError(DecoherenceSimError, ValueError):
    """An input violated a documented precondition or invariant."""


class OutOfRangeError(ValidationError):
    """A tabulated quantity was evaluated outside its support."""


class QuadratureError(DecoherenceSimError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class IntegrationError(DecoherenceSimError, RuntimeError):
    """A time integrator violated a conserved quantity."""


class LogSingularityError(ValidationError):
    """A decoherence function crossed zero, so its logarithm is undefined."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"decoherence function vanishes at index {index}")
