"""Exception hierarchy used across the package."""


class HarmlError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(HarmlError, ValueError):
    """Vector or matrix shapes do not line up."""


class ConfigurationError(HarmlError, ValueError):
    """An invalid hyperparameter, option or format tag."""


class AcquisitionError(HarmlError, FileNotFoundError):
    """A dataset file is missing or could not be fetched."""


class IntegrityError(HarmlError):
    """Dataset files disagree with each other (e.g. row counts)."""


class DatasetValidationError(HarmlError, ValueError):
    """A dataset value is malformed or out of range."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class CoverageError(HarmlError, ValueError):
    """A required class is absent from the training data."""


class DegenerateProblemError(HarmlError, ValueError):
    """A binary problem with only one label present."""


class EmptyEvaluationError(HarmlError, ValueError):
    """Nothing to evaluate."""


class CorruptModelError(HarmlError, ValueError):
    """Model parameters contain non-finite values."""


class TrainingDivergedError(HarmlError, FloatingPointError):
    """The training loss became NaN or infinite."""

    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch}: loss={loss}")
