"""Custom exception types for hmof-vad.

Each family maps to one CLI exit code (see ``hmof_vad.cli``).
"""


class HmofError(Exception):
    """Base class for all pipeline errors."""

    pass


class ConfigError(HmofError):
    """Raised when configuration loading or validation fails."""

    pass


class DataError(HmofError):
    """Raised when input frames, ground truth or result files are unusable."""

    pass


class DimensionMismatchError(DataError):
    """Raised when two grids that must share a shape do not."""

    pass


class ModelError(HmofError):
    """Raised when a model file is missing, corrupt or incompatible."""

    pass


class StageError(HmofError):
    """Raised when a pipeline stage fails; carries the stage name.

    Args:
        stage: Name of the failing stage (e.g. "train", "ingest").
        cause: The underlying pipeline error.
    """

    def __init__(self, stage: str, cause: HmofError) -> None:
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
