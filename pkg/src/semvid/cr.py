"""Compression-ratio classes: short encodings for static frames, long for dynamic."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .records import CR_DYNAMIC, CR_STATIC


@dataclass(frozen=True)
class CrClass:
    """One compression setting: its tag, encoding length, and objective flag."""

    tag: str
    encoding_length: int

    def __post_init__(self):
        if self.tag not in (CR_STATIC, CR_DYNAMIC):
            raise ConfigError(f"unknown CR tag {self.tag!r}")
        if self.encoding_length < 1:
            raise ConfigError("encoding_length must be >= 1")

    @property
    def r_flag(self) -> int:
        """1 for static (compressed) frames, 0 for dynamic."""
        return 1 if self.tag == CR_STATIC else 0


DEFAULT_STATIC = CrClass(CR_STATIC, 16)
DEFAULT_DYNAMIC = CrClass(CR_DYNAMIC, 256)


def cr_pair(static_len: int = 16, dynamic_len: int = 256) -> tuple[CrClass, CrClass]:
    if not static_len < dynamic_len:
        raise ConfigError("static encoding must be shorter than dynamic")
    return CrClass(CR_STATIC, static_len), CrClass(CR_DYNAMIC, dynamic_len)
