"""Exception hierarchy shared across the package."""


class WtaError(Exception):
    """Base class for all wtanet errors."""


class ConfigurationError(WtaError):
    """Invalid parameters, wiring, or run configuration."""


class DataFormatError(WtaError):
    """A file did not match its documented format."""


class IdxFormatError(DataFormatError):
    """IDX container with a bad magic number or header."""


class IdxCountMismatchError(DataFormatError):
    """Image and label IDX files disagree on item count."""


class IdxTruncatedError(DataFormatError):
    """IDX payload shorter than the header promises."""


class CheckpointFormatError(DataFormatError):
    """Checkpoint file is corrupt or has an unknown version."""


class CheckpointMismatchError(WtaError):
    """Checkpoint config hash does not match the requested run."""
