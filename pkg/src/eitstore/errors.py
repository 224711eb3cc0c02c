"""Exception hierarchy. Exit codes match the CLI contract."""


class EitstoreError(Exception):
    """Base class; `exit_code` is what the CLI returns for this failure."""

    exit_code = 1


class ConfigurationError(EitstoreError):
    """Invalid configuration or inconsistent run setup."""

    exit_code = 2


class StepSizeError(EitstoreError):
    """Numerical stability guard violated (time step too large)."""

    exit_code = 3


class AnalysisError(EitstoreError):
    """An estimator could not produce a result (no feature, empty window)."""

    exit_code = 4


class SequenceValidationError(ConfigurationError):
    """A sequence failed validation against its geometry."""


class CalibrationError(EitstoreError):
    """Noise calibration could not meet its targets inside the search box."""

    exit_code = 4
