"""semvid: desk-scale semantic communication simulator for edge video.

Sensing-driven compression-ratio switching, mentor/student semantic codecs
trained with knowledge distillation, a differentiable noisy channel, and
full per-frame quality/bits/delay accounting.
"""

__version__ = "0.1.0"

from .errors import (ChannelError, CheckpointError, ConfigError, FrameError,
                     OutageError, SemvidError, SensingError, TrainingDiverged)

__all__ = [
    "__version__",
    "SemvidError", "FrameError", "ConfigError", "ChannelError", "OutageError",
    "SensingError", "CheckpointError", "TrainingDiverged",
]
