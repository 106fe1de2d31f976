"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes; library callers can catch the
base classes.
"""


class ErgharvestError(Exception):
    """Base class for all package-specific errors."""


class InputDomainError(ErgharvestError, ValueError):
    """A state or parameter lies outside the working domain."""


class ConfigError(ErgharvestError, ValueError):
    """Run configuration is malformed or contains unknown keys."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class AssumptionViolationError(ErgharvestError, RuntimeError):
    """A structural model assumption fails where the solver requires it."""


class NumericsError(ErgharvestError, RuntimeError):
    """Base class for numerical failures (integration, quadrature, roots)."""


class QuadratureError(NumericsError):
    """Adaptive quadrature did not converge; carries diagnostics."""

    def __init__(self, message, estimate=None, error_estimate=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_estimate = error_estimate


class SingularIntegrationError(NumericsError):
    """Step size underflowed near a singular point.

    ``last_x``/``last_y`` hold the final reliable state of the integration.
    """

    def __init__(self, message, last_x=None, last_y=None):
        super().__init__(message)
        self.last_x = last_x
        self.last_y = last_y


class TransformBreakdownError(NumericsError):
    """The Cole-Hopf base function crossed zero before the target point.

    ``derivative_sign`` is the sign of the derivative at the crossing, which
    disambiguates a dip to -inf (positive) from a blow-up to +inf (negative).
    """

    def __init__(self, message, crossing_x=None, derivative_sign=None):
        super().__init__(message)
        self.crossing_x = crossing_x
        self.derivative_sign = derivative_sign


class MonotonicityViolationError(NumericsError):
    """The bisection trace is inconsistent (a member below a non-member)."""


class MissingInputError(ErgharvestError, FileNotFoundError):
    """A required input artifact (e.g. persisted solution) is absent."""


class SimulationAbortError(NumericsError):
    """Too many Monte Carlo paths aborted to trust the aggregate."""
