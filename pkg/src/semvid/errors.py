"""Exception hierarchy shared across the package."""


class SemvidError(Exception):
    """Base class for all package-specific errors."""


class FrameError(SemvidError):
    """Bad frame data: missing files, shape/range violations, format errors."""


class ConfigError(SemvidError):
    """Invalid or unknown configuration keys/values."""


class ChannelError(SemvidError):
    """Invalid channel configuration or input."""


class OutageError(ChannelError):
    """Channel gain is zero; equalization impossible."""


class SensingError(SemvidError):
    """Sensing pipeline misuse (no detector/segmenter, shape mismatch)."""


class CheckpointError(SemvidError):
    """Checkpoint archive missing, malformed, or config hash mismatch."""


class TrainingDiverged(SemvidError):
    """Training loss became non-finite; a diagnostic checkpoint was written."""
