"""Exception types shared across the package."""


class DotArrayError(Exception):
    """Base class for all package-specific errors."""


class ModelError(DotArrayError):
    """Invalid physical model: singular capacitance matrix, degenerate
    geometry, inconsistent parameter shapes."""


class SectorError(DotArrayError):
    """Invalid or incompatible symmetry sector."""


class ConvergenceError(DotArrayError):
    """Iterative solver failed to converge.

    Carries the best residuals seen so far in ``residuals``.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ConfigError(DotArrayError):
    """Malformed device file or run configuration."""
