"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration or argument combination."""


class StatisticsError(ArithmeticError):
    """Channel statistics unusable (e.g. a covariance that is not PSD)."""


class AcquisitionError(ArithmeticError):
    """Preamble measurement matrices are rank deficient."""


class FilterError(ArithmeticError):
    """A Kalman or IMM recursion hit a singular or non-PD matrix."""
