"""Exception types shared across the package."""


class InputError(ValueError):
    """Caller supplied arguments that violate a documented precondition."""


class CorpusFormatError(InputError):
    """A data file does not conform to its documented line format."""


class ConfigError(InputError):
    """A configuration object is internally inconsistent or incomplete."""


class CheckpointError(InputError):
    """A checkpoint file is missing, unversioned, or incompatible."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss; carries a diagnostic batch dump."""

    def __init__(self, message: str, batch_dump: dict | None = None):
        super().__init__(message)
        self.batch_dump = batch_dump or {}
