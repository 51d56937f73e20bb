"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An experiment or CLI configuration is inconsistent or incomplete."""


class EstimationError(RuntimeError):
    """Covariance/amplitude estimation failed (rank deficiency, K < N, ...)."""


class CalibrationError(RuntimeError):
    """A detection threshold could not be calibrated as requested."""
