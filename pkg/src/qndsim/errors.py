"""Exception hierarchy shared across the package."""


class QndError(Exception):
    """Base class for all package errors."""


class ConfigError(QndError, ValueError):
    """Invalid or inconsistent parameters."""


class InfiniteReadoutNoiseError(QndError, ArithmeticError):
    """Readout noise is undefined because the signal-to-noise ratio is zero."""


class InsufficientDataError(QndError, ValueError):
    """Too few trials to form the requested statistic."""


class DegenerateDenominatorError(QndError, ArithmeticError):
    """A ratio estimator hit a (numerically) vanishing denominator."""


class UnstableEstimateError(QndError, RuntimeError):
    """Too many bootstrap resamples failed for one or more metrics."""

    def __init__(self, failing, n_resamples):
        self.failing = dict(failing)
        self.n_resamples = n_resamples
        detail = ", ".join(f"{k} ({v}/{n_resamples})" for k, v in sorted(self.failing.items()))
        super().__init__(f"bootstrap unstable for: {detail}")


class DataError(QndError, ValueError):
    """Malformed or invalid campaign/report data."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    """File does not follow the expected schema (header, version, columns)."""
