"""Exception hierarchy shared across the package."""


class ContextReconError(Exception):
    """Base class for all errors raised by contextrecon."""


class InvalidInputError(ContextReconError, ValueError):
    """Input array contains non-finite values or is otherwise unusable."""


class ShapeError(ContextReconError, ValueError):
    """Array shapes or coil counts do not agree."""


class ConfigError(ContextReconError, ValueError):
    """A configuration value is out of its admissible range."""


class DegenerateScaleError(ContextReconError, ValueError):
    """Normalization scale is zero (all-zero image)."""


class InfeasibleDensityError(ConfigError):
    """Requested mask acceleration cannot be reached on this grid."""


class CalibrationError(ContextReconError):
    """ESPIRiT calibration could not be carried out."""


class NumericalError(ContextReconError, ArithmeticError):
    """A linear-algebra routine failed to converge."""


class PromptParseError(ContextReconError, ValueError):
    """Prompt string is not in canonical format."""

    def __init__(self, message, token=None):
        super().__init__(message if token is None else f"{message}: {token!r}")
        self.token = token


class UnknownVocabularyError(ContextReconError, KeyError):
    """Pathology label outside the fixed vocabulary."""


class ScheduleError(ContextReconError):
    """Diffusion schedule is internally inconsistent."""


class TrainingDivergenceError(ContextReconError, FloatingPointError):
    """Loss became NaN or infinite during training."""

    def __init__(self, message, last_good_state=None):
        super().__init__(message)
        self.last_good_state = last_good_state
