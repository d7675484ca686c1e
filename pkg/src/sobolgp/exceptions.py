"""Exception hierarchy.

Every error raised by the package derives from :class:`SobolGPError`.  The
three families below map onto the CLI exit codes (validation, numerical,
I/O); anything else is a bug.
"""


class SobolGPError(Exception):
    exit_code = 1


class ValidationError(SobolGPError, ValueError):
    """Inputs violate a documented contract."""

    exit_code = 3


class NumericalError(SobolGPError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""

    exit_code = 4


class ArtifactError(SobolGPError, OSError):
    """Reading, writing or verifying an on-disk artifact failed."""

    exit_code = 5


class InvalidDesignError(ValidationError):
    pass


class FrameMismatchError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class IngestionError(ValidationError):
    pass


class GeometryError(ValidationError):
    """The requested geometry has non-positive wall thickness."""


class UnsupportedDimensionError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ModelEvaluationError(ValidationError):
    """A model raised or returned a non-finite value for one design row."""

    def __init__(self, message, row=None, point=None):
        super().__init__(message)
        self.row = row
        self.point = point


class DegenerateResponseError(NumericalError):
    """Responses have zero variance (constant model output)."""


class IllConditionedKernelError(NumericalError):
    pass


class FitFailureError(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class IntegrityError(ArtifactError):
    pass


class StaleArtifactError(ArtifactError):
    pass
