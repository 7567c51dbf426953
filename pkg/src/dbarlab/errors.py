"""Exception types shared across the package.

Each error carries an ``exit_code`` so the command line front end can map
failures onto process exit statuses without a lookup table.
"""


class DbarlabError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ConfigError(DbarlabError, ValueError):
    """Malformed configuration or invalid parameters."""

    exit_code = 1


class UsageError(DbarlabError, ValueError):
    """Incompatible arguments, e.g. a field bound to a different grid."""

    exit_code = 1


class DomainError(DbarlabError, ValueError):
    """A query point lies outside the region where a quantity is defined."""

    exit_code = 1


class SingularityError(DomainError):
    """Derivative requested at a point where the weight is not smooth."""


class SubharmonicityError(DbarlabError, ValueError):
    """A tabulated weight has a negative Laplacian beyond tolerance."""

    exit_code = 1


class ResolutionError(DbarlabError, ValueError):
    """A quadrature or grid resolution is too coarse for the request."""

    exit_code = 1


class EmptyRegionError(DbarlabError, ValueError):
    """A subgrid contains too few points to be meaningful."""

    exit_code = 1


class DomainTooLargeError(DbarlabError):
    """The weight grows so fast that exp(phi) overflows on the grid."""

    exit_code = 1

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class ConvergenceError(DbarlabError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    exit_code = 2

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConsistencyError(DbarlabError):
    """Diagnostic criteria produced contradictory verdicts."""

    exit_code = 2

    def __init__(self, message, evidence=None):
        super().__init__(message)
        self.evidence = evidence or {}
