# exceptions.py
"""Error hierarchy shared by every photonic_vqe module."""


class PhotonicVQEError(Exception):
    """Base class for all library errors."""


class ConfigError(PhotonicVQEError, ValueError):
    """Invalid or incomplete experiment configuration."""


class DenseLimitError(PhotonicVQEError, ValueError):
    """Dense limit exceeded."""


class DimensionMismatchError(PhotonicVQEError, ValueError):
    pass


class NonHermitianError(PhotonicVQEError, ValueError):
    pass


class NonUnitaryError(PhotonicVQEError, ValueError):
    """Raised with the measured unitarity residual ``max|U†U - I|``."""

    def __init__(self, residual, message=None):
        self.residual = float(residual)
        super().__init__(message or f"matrix is not unitary (residual {self.residual:.3e})")


class NormalizationError(PhotonicVQEError, ValueError):
    pass


class ParameterCountError(PhotonicVQEError, ValueError):
    pass


class ModeIndexError(PhotonicVQEError, ValueError):
    pass


class UnsupportedModelError(PhotonicVQEError, ValueError):
    pass


class CoefficientFileError(PhotonicVQEError, ValueError):
    """Base class for coefficient-table parse errors; carries the line number."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class NoRowsError(CoefficientFileError):
    pass


class MalformedRowError(CoefficientFileError):
    pass


class WeightArityError(CoefficientFileError):
    pass


class NonMonotoneBondLengthError(CoefficientFileError):
    pass


class PhotonCountError(PhotonicVQEError, ValueError):
    pass


class PostSelectionError(PhotonicVQEError):
    pass


class NonCommutingError(PhotonicVQEError, ValueError):
    pass


class UncoveredTermError(PhotonicVQEError, ValueError):
    pass


class NoiseStrengthError(PhotonicVQEError, ValueError):
    pass


class SingularConfusionError(PhotonicVQEError):
    pass


class ExtrapolationError(PhotonicVQEError, ValueError):
    pass


class SingularMetricError(PhotonicVQEError):
    pass


class OptimizerAbortedError(PhotonicVQEError):
    """The objective returned a non-finite value; ``trace`` holds the records so far."""

    def __init__(self, message, trace):
        self.trace = trace
        super().__init__(message)
