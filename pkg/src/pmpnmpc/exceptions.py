"""Exception hierarchy."""


class NMPCError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(NMPCError, ValueError):
    """Invalid parameter or configuration value."""


class DimensionError(NMPCError, ValueError):
    """Array dimensions do not match the model."""


class IntegrationBlowupError(NMPCError, FloatingPointError):
    """A non-finite value appeared during integration.

    ``node`` is the index of the first grid node whose value is non-finite.
    ``context`` optionally carries the data that produced it (for shooting,
    the initial co-state guess).
    """

    def __init__(self, node, message=None, context=None):
        self.node = node
        self.context = context
        super().__init__(message or f"non-finite value at grid node {node}")


class SingularJacobianError(NMPCError, ArithmeticError):
    """The shooting Newton Jacobian is numerically singular."""

    def __init__(self, condition):
        self.condition = condition
        super().__init__(f"shooting Jacobian is singular (condition estimate {condition:.3e})")


class DiagnosticsUnavailableError(NMPCError, LookupError):
    """Predicted trajectories needed for a diagnostic were not stored."""
