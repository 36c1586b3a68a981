"""Synthetic video generators used by the test benches and demo scripts.

The main generator renders a single square moving around a ring of well
separated positions in front of a flat background. The motion schedule is
chosen so a rolling-median background model never absorbs the square: the
square revisits a pixel only after the median window has flushed it out.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import FrameError
from .frames import DYNAMIC, STATIC, VideoSequence, from_array

BACKGROUND_SHADE = 0.15
SQUARE_COLOR = (0.85, 0.55, 0.25)
RING_SLOTS = 8


def make_schedule(n_frames: int = 100, static_fraction: float = 0.6,
                  warmup: int = 15) -> str:
    """Build a D/S label string with an exact static fraction.

    Layout: one leading dynamic frame, then a static warmup run long enough
    to settle a median background, then dynamic frames separated by short
    static pauses. The pauses are spread as evenly as integer arithmetic
    allows so no single pause lets the background model swallow the square.
    """
    if n_frames < 1:
        raise FrameError("schedule needs at least one frame")
    n_static = round(n_frames * static_fraction)
    n_dynamic = n_frames - n_static
    if n_dynamic < 1:
        raise FrameError("schedule needs at least one dynamic frame (the first)")
    head_static = min(warmup, n_static)
    rem_d = n_dynamic - 1
    rem_s = n_static - head_static
    parts = ["D", "S" * head_static]
    if rem_d == 0:
        parts.append("S" * rem_s)
    else:
        base, extra = divmod(rem_s, rem_d)
        for i in range(rem_d):
            pause = base + (1 if i < extra else 0)
            parts.append("D" + "S" * pause)
    schedule = "".join(parts)
    assert len(schedule) == n_frames
    assert schedule.count("D") == n_dynamic
    return schedule


def _ring_positions(frame_size: int, square_size: int) -> list[tuple[int, int]]:
    """Top-left corners of the eight ring slots, clipped inside the frame."""
    c = frame_size / 2.0
    radius = frame_size * 0.3
    out = []
    for j in range(RING_SLOTS):
        ang = 2.0 * math.pi * j / RING_SLOTS
        x = int(round(c + radius * math.cos(ang) - square_size / 2.0))
        y = int(round(c + radius * math.sin(ang) - square_size / 2.0))
        x = min(max(x, 0), frame_size - square_size)
        y = min(max(y, 0), frame_size - square_size)
        out.append((x, y))
    return out


def _paint(frame_size: int, channels: int, corner: tuple[int, int] | None,
           square_size: int, background: float) -> np.ndarray:
    px = np.full((frame_size, frame_size, channels), background, dtype=np.float32)
    if corner is not None:
        x, y = corner
        color = np.asarray(SQUARE_COLOR[:channels], dtype=np.float32)
        px[y:y + square_size, x:x + square_size, :] = color
    return px


def moving_square_video(schedule: str, frame_size: int = 64, square_size: int = 10,
                        background: float = BACKGROUND_SHADE, channels: int = 3,
                        fps_source: float = 30.0) -> VideoSequence:
    """Render a schedule into frames plus ground-truth CR labels.

    Frame 1 must be dynamic (it always is for a receiver with no history) and
    shows only the background. Each later ``D`` advances the square one ring
    slot; each ``S`` repeats the previous frame exactly.
    """
    if not schedule or any(c not in "DS" for c in schedule):
        raise FrameError("schedule must be a non-empty string over {D, S}")
    if schedule[0] != "D":
        raise FrameError("first frame of a schedule must be dynamic")
    ring = _ring_positions(frame_size, square_size)
    stack = np.empty((len(schedule), frame_size, frame_size, channels), dtype=np.float32)
    labels: list[str] = []
    slot = -1
    prev: np.ndarray | None = None
    for i, tag in enumerate(schedule):
        if tag == "D":
            if i == 0:
                px = _paint(frame_size, channels, None, square_size, background)
            else:
                slot = (slot + 1) % RING_SLOTS
                px = _paint(frame_size, channels, ring[slot], square_size, background)
            labels.append(DYNAMIC)
        else:
            if prev is None:
                raise FrameError("schedule cannot start with a static frame")
            px = prev.copy()
            labels.append(STATIC)
        stack[i] = px
        prev = px
    return from_array(stack, fps_source=fps_source, labels=labels)


def sensing_eval_video(n_frames: int = 100, frame_size: int = 64,
                       static_fraction: float = 0.6) -> VideoSequence:
    """Canonical moving-square benchmark video with ground-truth labels."""
    return moving_square_video(make_schedule(n_frames, static_fraction),
                               frame_size=frame_size)


def random_square_frames(n: int, frame_size: int = 16, square_size: int = 6,
                         channels: int = 3, seed: int = 0) -> np.ndarray:
    """Independent frames, each a random bright square on a random dark field.

    Returns a float32 stack of shape (n, frame_size, frame_size, channels).
    Used as a toy reconstruction dataset; frames carry no temporal order.
    """
    rng = np.random.default_rng(seed)
    stack = np.empty((n, frame_size, frame_size, channels), dtype=np.float32)
    hi = frame_size - square_size
    for i in range(n):
        bg = rng.uniform(0.05, 0.35)
        color = rng.uniform(0.55, 0.95, size=channels)
        x = int(rng.integers(0, hi + 1))
        y = int(rng.integers(0, hi + 1))
        px = np.full((frame_size, frame_size, channels), bg, dtype=np.float32)
        px[y:y + square_size, x:x + square_size, :] = color.astype(np.float32)
        stack[i] = px
    return stack


def constant_video(n_frames: int, frame_size: int = 64, channels: int = 3,
                   seed: int = 0, fps_source: float = 30.0) -> VideoSequence:
    """One random-square frame repeated: dynamic first frame, static rest."""
    if n_frames < 1:
        raise FrameError("need at least one frame")
    base = random_square_frames(1, frame_size=frame_size,
                                square_size=max(2, frame_size // 6),
                                channels=channels, seed=seed)[0]
    stack = np.repeat(base[None, ...], n_frames, axis=0)
    labels = [DYNAMIC] + [STATIC] * (n_frames - 1)
    return from_array(stack, fps_source=fps_source, labels=labels)
