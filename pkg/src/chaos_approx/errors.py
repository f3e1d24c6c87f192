"""Exception classes. Each carries the CLI exit code for its class."""


class ChaosApproxError(Exception):
    exit_code = 2


class ParameterError(ChaosApproxError, ValueError):
    """Invalid numeric parameter (epsilon, horizon, counts, ...)."""


class DomainError(ChaosApproxError, ValueError):
    """Evaluation point or time outside the domain."""


class PreconditionError(ChaosApproxError, ValueError):
    """Input violates a documented precondition."""


class ConfigError(ChaosApproxError, ValueError):
    """Inconsistent quadrature or experiment configuration."""


class ValidationError(ChaosApproxError, ValueError):
    """Malformed experiment plan. ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class CapabilityError(ChaosApproxError):
    """No reference law or integrator support for the requested input."""

    exit_code = 3


class ResourceError(ChaosApproxError):
    """Cell budget exceeded."""

    exit_code = 4
