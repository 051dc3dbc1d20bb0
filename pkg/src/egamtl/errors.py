"""Exception types shared across the package."""


class EGAError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EGAError, ValueError):
    """Shapes, lengths or values that violate an operation's preconditions."""


class InvalidConfigError(EGAError, ValueError):
    """A configuration value outside its validated range."""


class NumericalFailureError(EGAError, ArithmeticError):
    """An iterative routine did not converge.

    ``residual`` holds the last measured convergence residual.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class DegenerateGradientError(EGAError, ArithmeticError):
    """Every direction of the gradient matrix is numerically zero."""


class DegenerateHistoryError(EGAError, ValueError):
    """Loss history cannot produce a learning-rate ratio (zero warmup loss)."""


class UndefinedMetricError(EGAError, ArithmeticError):
    """The metric is mathematically undefined for the given inputs."""
