"""Exception hierarchy shared across the package."""


class SMSEError(Exception):
    """Base class for all errors raised by smse."""


class GeometryError(SMSEError):
    """Projection/distance iteration failed or the level set is degenerate."""


class ResolutionError(SMSEError):
    """The grid is too coarse to carry any unknowns."""


class ParameterError(SMSEError, ValueError):
    """Physical parameters outside the supported range (e.g. alpha >= 0)."""


class IntegrationError(SMSEError):
    """Radial ODE integration failed (step underflow, bad termination)."""


class InfeasibleError(SMSEError):
    """Radial Dirichlet fit could not bracket the scale factor."""


class DomainError(SMSEError, ValueError):
    """A field took a non-positive value where 1/u is evaluated."""


class LinearSolveError(SMSEError):
    """Sparse solve broke down or could not reach the residual target."""


class NonConvergenceError(SMSEError):
    """Newton iteration did not converge.

    The best iterate seen and the residual history are attached so callers
    can diagnose or restart.
    """

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = list(history or [])


class ContinuationError(SMSEError):
    """Continuation step size underflowed; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BarrierConstructionError(SMSEError):
    """The (b, epsilon) ladder was exhausted without a negative majorant."""


class ExpressionError(SMSEError, ValueError):
    """Malformed arithmetic expression."""
