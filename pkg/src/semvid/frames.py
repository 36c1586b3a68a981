"""Video frame loading, normalization, sampling, and persistence.

Frames are float32 arrays of shape (H, W, C) with values in [0, 1].
Two on-disk formats are supported:

* a directory of lossless 8-bit images named ``frame_%06d.ext`` (plus
  animated GIF as the one supported container), and
* a raw tensor dump: header of H, W, C, V as little-endian uint32,
  followed by frame-major float32 pixel data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageSequence

from .errors import FrameError

RAW_SUFFIXES = (".bin", ".raw")
STATIC, DYNAMIC = "static", "dynamic"


@dataclass
class Frame:
    """One video frame: (H, W, C) float32 pixels in [0, 1], 1-based index."""

    pixels: np.ndarray
    index: int

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3:
            raise FrameError(f"frame {self.index}: expected (H, W, C), got {self.pixels.shape}")
        if self.pixels.dtype != np.float32:
            self.pixels = self.pixels.astype(np.float32)
        lo, hi = float(self.pixels.min(initial=0.0)), float(self.pixels.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise FrameError(f"frame {self.index}: pixel range [{lo}, {hi}] outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape  # type: ignore[return-value]

    @property
    def source_bandwidth(self) -> int:
        """Total pixel count H*W*C."""
        h, w, c = self.shape
        return h * w * c


@dataclass
class VideoSequence:
    """Ordered frames sharing one shape; optional static/dynamic ground truth."""

    frames: list[Frame]
    fps_source: float | None = None
    labels: list[str] | None = None

    def __post_init__(self):
        if self.frames:
            shape = self.frames[0].shape
            for f in self.frames:
                if f.shape != shape:
                    raise FrameError(f"frame {f.index} shape {f.shape} != {shape}")
            for i, f in enumerate(self.frames, start=1):
                if f.index != i:
                    raise FrameError(f"frame indices not contiguous from 1 (got {f.index} at {i})")
        if self.labels is not None and len(self.labels) != len(self.frames):
            raise FrameError("labels length must match frame count")

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    @property
    def shape(self) -> tuple[int, int, int]:
        if not self.frames:
            raise FrameError("empty video has no shape")
        return self.frames[0].shape

    def pixel_array(self) -> np.ndarray:
        """Stack frames to (V, H, W, C) float32."""
        return np.stack([f.pixels for f in self.frames], axis=0)


def from_array(stack: np.ndarray, fps_source: float | None = None,
               labels: list[str] | None = None) -> VideoSequence:
    """Wrap a (V, H, W, C) array into a VideoSequence."""
    frames = [Frame(stack[i], i + 1) for i in range(stack.shape[0])]
    return VideoSequence(frames, fps_source=fps_source, labels=labels)


def _resize_area(pixels: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Area-averaging resize; exact block mean when sizes divide evenly."""
    h, w, c = pixels.shape
    th, tw = target_hw
    if (h, w) == (th, tw):
        return pixels
    if h % th == 0 and w % tw == 0:
        bh, bw = h // th, w // tw
        out = pixels.reshape(th, bh, tw, bw, c).mean(axis=(1, 3), dtype=np.float64)
        return out.astype(np.float32)
    chans = []
    for k in range(c):
        img = Image.fromarray(pixels[:, :, k].astype(np.float32), mode="F")
        chans.append(np.asarray(img.resize((tw, th), Image.BOX), dtype=np.float32))
    return np.clip(np.stack(chans, axis=-1), 0.0, 1.0)


def _decode_image(img: Image.Image) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.dtype != np.uint8:
        raise FrameError(f"expected 8-bit image data, got {arr.dtype}")
    return arr.astype(np.float32) / 255.0


def load_raw_dump(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < 16:
        raise FrameError(f"{path}: truncated raw dump header")
    h, w, c, v = struct.unpack("<4I", data[:16])
    expected = 16 + 4 * h * w * c * v
    if len(data) != expected:
        raise FrameError(f"{path}: expected {expected} bytes, got {len(data)}")
    flat = np.frombuffer(data, dtype="<f4", offset=16)
    return flat.reshape(v, h, w, c).copy()


def save_raw_dump(stack: np.ndarray, path: Path) -> None:
    v, h, w, c = stack.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4I", h, w, c, v))
        fh.write(np.ascontiguousarray(stack, dtype="<f4").tobytes())


def load_frames(path: str | Path,
                target_size: int | tuple[int, int] | None = None,
                fps_source: float | None = None) -> VideoSequence:
    """Load a video from an image directory, GIF, or raw tensor dump.

    Frames are decoded, optionally resized (area averaging), scaled to
    [0, 1], and ordered by filename / frame position. An int target_size
    means a square (size, size).
    """
    path = Path(path)
    if isinstance(target_size, int):
        target_size = (target_size, target_size)
    if not path.exists():
        raise FrameError(f"no such path: {path}")

    arrays: list[np.ndarray] = []
    if path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.is_file() and p.suffix.lower() in (".png", ".bmp", ".gif", ".tif", ".tiff"))
        if not files:
            raise FrameError(f"no image files in {path}")
        for p in files:
            try:
                with Image.open(p) as img:
                    arrays.append(_decode_image(img))
            except (OSError, ValueError) as exc:
                raise FrameError(f"unreadable image {p}: {exc}") from exc
    elif path.suffix.lower() in RAW_SUFFIXES:
        arrays = list(load_raw_dump(path))
    elif path.suffix.lower() == ".gif":
        with Image.open(path) as img:
            for page in ImageSequence.Iterator(img):
                arrays.append(_decode_image(page.convert("RGB")))
    else:
        raise FrameError(f"unsupported input {path}: expected directory, .gif, or raw dump")

    channels = {a.shape[2] for a in arrays}
    if len(channels) != 1:
        raise FrameError(f"inconsistent channel counts across frames: {sorted(channels)}")
    if target_size is not None:
        arrays = [_resize_area(a, target_size) for a in arrays]
    frames = [Frame(a, i + 1) for i, a in enumerate(arrays)]
    return VideoSequence(frames, fps_source=fps_source)


def save_frames(video: VideoSequence, path: str | Path) -> None:
    """Write a video as 8-bit PNGs (directory path) or a raw dump (.bin/.raw)."""
    path = Path(path)
    if path.suffix.lower() in RAW_SUFFIXES:
        save_raw_dump(video.pixel_array(), path)
        return
    path.mkdir(parents=True, exist_ok=True)
    for frame in video:
        data = np.round(frame.pixels * 255.0).astype(np.uint8)
        if data.shape[2] == 1:
            data = data[:, :, 0]
        Image.fromarray(data).save(path / f"frame_{frame.index:06d}.png")


def sample_one_fps(video: VideoSequence) -> VideoSequence:
    """Keep one frame per source second: every floor(fps)-th frame, renumbered."""
    if video.fps_source is None:
        raise FrameError("fps_source unknown; cannot subsample to 1 fps")
    if video.fps_source < 1:
        raise FrameError(f"fps_source must be >= 1, got {video.fps_source}")
    step = int(video.fps_source)
    kept = [f.pixels for f in video.frames[::step]]
    labels = video.labels[::step] if video.labels is not None else None
    return from_array(np.stack(kept), fps_source=1.0, labels=labels)


def validate_geometry(video: VideoSequence, patch: int, regions_per_side: int) -> None:
    """Check frame sides divide evenly into patches and routing regions."""
    h, w, _ = video.shape
    group = patch * regions_per_side
    for name, side in (("height", h), ("width", w)):
        if side % patch != 0:
            raise FrameError(f"{name} {side} not divisible by patch {patch}")
        if side % group != 0:
            raise FrameError(f"{name} {side} not divisible by patch*regions {group}")
