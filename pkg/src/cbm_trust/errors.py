"""Exception hierarchy for cbm-trust."""

from pathlib import Path


class CBMTrustError(Exception):
    """Base class for all errors raised by cbm-trust."""


class ConfigError(CBMTrustError, ValueError):
    """Invalid configuration value or config file."""


class GenerationError(CBMTrustError, ValueError):
    """The synthetic generator cannot satisfy its placement constraints."""


class IngestionError(CBMTrustError, ValueError):
    """A CUB-format annotation file is missing or malformed."""

    def __init__(self, message: str, path: Path | str | None = None, line: int | None = None):
        self.path = Path(path) if path is not None else None
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class ShapeError(CBMTrustError, ValueError):
    """Tensor or grid shapes do not satisfy an operation's precondition."""


class SchemaMismatchError(CBMTrustError, ValueError):
    """A checkpoint or dataset was built against a different concept schema."""


class GridTransformError(CBMTrustError, ValueError):
    """An augmentation does not permute feature-map cells exactly."""


class NonFiniteError(CBMTrustError, ArithmeticError):
    """A loss component or gradient is NaN or infinite."""

    def __init__(self, component: str, message: str | None = None):
        self.component = component
        super().__init__(message or f"non-finite value in '{component}'")


class TrainingDivergedError(CBMTrustError, ArithmeticError):
    """Training produced a non-finite loss; the last good checkpoint is kept."""

    def __init__(self, message: str, checkpoint_path: Path | None):
        self.checkpoint_path = checkpoint_path
        super().__init__(f"{message} (last good checkpoint: {checkpoint_path})")


class LocalizationError(CBMTrustError, RuntimeError):
    """A localizer failed for a given image and concept."""


class EmptyDatasetError(CBMTrustError, ValueError):
    """An operation that needs samples received an empty dataset or split."""


class MissingAnnotationError(CBMTrustError, ValueError):
    """An experiment needs part annotations the dataset does not have."""
