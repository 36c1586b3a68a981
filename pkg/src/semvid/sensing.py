"""Object sensing and static/dynamic frame classification.

The sensing stage runs a detector over each frame, segments the detected
targets into a binary mask, and compares the mask with the previous frame's
mask. A mask change below a small threshold marks the frame static, which
makes it eligible for the short (high compression ratio) encoding.

The baseline detector and segmenter are classical: a rolling-median
background model with threshold differencing and connected components.
Both slots accept any object following the small protocols below, so a
pretrained CV model can be dropped in without touching the pipeline.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy import ndimage

from .config import SensingConfig
from .cr import DEFAULT_DYNAMIC, DEFAULT_STATIC, CrClass
from .errors import SensingError
from .frames import Frame

MOVABLE = "movable"


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def decode_boxes(offsets: np.ndarray, anchors: np.ndarray,
                 grid: np.ndarray) -> np.ndarray:
    """Map predicted offsets to boxes relative to grid cells and anchors.

    offsets : (N, 4) raw predictions (t_x, t_y, t_w, t_h)
    anchors : (N, 2) or (2,) anchor sizes (w_a, h_a)
    grid    : (N, 2) or (2,) grid-cell corners (x_g, y_g)

    Returns (N, 4) boxes (x, y, w, h): the centre offsets pass through a
    sigmoid and are added to the cell corner, sizes scale the anchor by the
    exponential of the prediction.
    """
    off = np.asarray(offsets, dtype=np.float64)
    if off.ndim != 2 or off.shape[1] != 4:
        raise SensingError(f"offsets must be (N, 4), got {off.shape}")
    if not np.all(np.isfinite(off)):
        raise SensingError("offsets contain non-finite values")
    anc = np.broadcast_to(np.asarray(anchors, dtype=np.float64), (off.shape[0], 2))
    if np.any(anc <= 0):
        raise SensingError("anchor sizes must be positive")
    g = np.broadcast_to(np.asarray(grid, dtype=np.float64), (off.shape[0], 2))
    out = np.empty_like(off)
    out[:, 0] = _sigmoid(off[:, 0]) + g[:, 0]
    out[:, 1] = _sigmoid(off[:, 1]) + g[:, 1]
    out[:, 2] = anc[:, 0] * np.exp(off[:, 2])
    out[:, 3] = anc[:, 1] * np.exp(off[:, 3])
    return out


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, top-left corner convention, pixel units."""

    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0
    label: str = MOVABLE

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise SensingError("box sides must be non-negative")
        if not 0.0 <= self.confidence <= 1.0:
            raise SensingError("confidence must lie in [0, 1]")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_xyxy(self) -> tuple[float, float, float, float]:
        return self.x, self.y, self.x + self.w, self.y + self.h


@dataclass(frozen=True)
class DetectionSet:
    frame_index: int
    boxes: tuple[Box, ...]

    @property
    def count(self) -> int:
        return len(self.boxes)


@dataclass(frozen=True)
class SensingMask:
    """Binary target mask plus per-object bookkeeping."""

    frame_index: int
    mask: np.ndarray
    iou_scores: tuple[float, ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mask.ndim != 2:
            raise SensingError("mask must be two-dimensional")
        m = self.mask
        if m.dtype != np.uint8 or not np.isin(m, (0, 1)).all():
            raise SensingError("mask must be uint8 with values in {0, 1}")


@dataclass(frozen=True)
class SensingVerdict:
    frame_index: int
    eta: float
    threshold: float
    cr: CrClass
    is_first: bool = False


class Detector(Protocol):
    def detect(self, frame: Frame) -> DetectionSet: ...


class Segmenter(Protocol):
    def segment(self, frame: Frame, boxes: DetectionSet) -> SensingMask: ...


class BackgroundModel:
    """Per-pixel rolling median over the most recent grayscale frames."""

    def __init__(self, window: int):
        if window < 1:
            raise SensingError("background window must be >= 1")
        self._hist: deque[np.ndarray] = deque(maxlen=window)

    def observe(self, gray: np.ndarray) -> None:
        self._hist.append(np.asarray(gray, dtype=np.float32))

    @property
    def n_observed(self) -> int:
        return len(self._hist)

    def background(self) -> np.ndarray:
        if not self._hist:
            raise SensingError("background model has seen no frames")
        return np.median(np.stack(self._hist), axis=0)


def _gray(frame: Frame) -> np.ndarray:
    return frame.pixels.mean(axis=2)


class ChangeSensor:
    """Baseline detector and segmenter built on background subtraction.

    One instance fills both pipeline slots; detect() must be called once per
    frame, in frame order, because it feeds the background model. segment()
    reuses the foreground map computed by the matching detect() call.
    """

    def __init__(self, cfg: SensingConfig | None = None):
        self.cfg = cfg or SensingConfig()
        self.cfg.validate()
        self._bg = BackgroundModel(self.cfg.background_window)
        self._fg_cache: tuple[int, np.ndarray] | None = None

    def _foreground(self, frame: Frame) -> np.ndarray:
        if self._fg_cache is not None and self._fg_cache[0] == frame.index:
            return self._fg_cache[1]
        gray = _gray(frame)
        self._bg.observe(gray)
        fg = np.abs(gray - self._bg.background()) > self.cfg.diff_threshold
        self._fg_cache = (frame.index, fg)
        return fg

    def detect(self, frame: Frame) -> DetectionSet:
        fg = self._foreground(frame)
        h, w = fg.shape
        comp, n = ndimage.label(fg)
        boxes = []
        for sl in ndimage.find_objects(comp):
            if sl is None:
                continue
            ys, xs = sl
            area = int(np.count_nonzero(comp[sl]))
            if area < self.cfg.min_area_px:
                continue
            boxes.append(Box(x=float(xs.start), y=float(ys.start),
                             w=float(xs.stop - xs.start),
                             h=float(ys.stop - ys.start),
                             confidence=min(1.0, area / float(h * w)),
                             label=MOVABLE))
        return DetectionSet(frame_index=frame.index, boxes=tuple(boxes))

    def segment(self, frame: Frame, boxes: DetectionSet) -> SensingMask:
        fg = self._foreground(frame)
        h, w = fg.shape
        mask = np.zeros((h, w), dtype=np.uint8)
        scores = []
        labels = []
        for box in boxes.boxes:
            x0 = max(0, int(np.floor(box.x)))
            y0 = max(0, int(np.floor(box.y)))
            x1 = min(w, int(np.ceil(box.x + box.w)))
            y1 = min(h, int(np.ceil(box.y + box.h)))
            sub = fg[y0:y1, x0:x1]
            mask[y0:y1, x0:x1] |= sub.astype(np.uint8)
            area = max(1, (y1 - y0) * (x1 - x0))
            scores.append(float(np.count_nonzero(sub)) / area)
            labels.append(box.label)
        return SensingMask(frame_index=frame.index, mask=mask,
                           iou_scores=tuple(scores), labels=tuple(labels))


def detect_objects(frame: Frame, detector: Detector) -> DetectionSet:
    if detector is None:
        raise SensingError("no detector configured")
    det = detector.detect(frame)
    if det.frame_index != frame.index:
        raise SensingError("detector returned results for a different frame")
    return det


def segment_targets(frame: Frame, boxes: DetectionSet,
                    segmenter: Segmenter) -> SensingMask:
    if segmenter is None:
        raise SensingError("no segmenter configured")
    seg = segmenter.segment(frame, boxes)
    if seg.frame_index != frame.index:
        raise SensingError("segmenter returned results for a different frame")
    return seg


def mask_difference(prev: SensingMask | np.ndarray,
                    cur: SensingMask | np.ndarray) -> float:
    """Mean absolute pixel difference between two binary masks."""
    a = prev.mask if isinstance(prev, SensingMask) else np.asarray(prev)
    b = cur.mask if isinstance(cur, SensingMask) else np.asarray(cur)
    if a.shape != b.shape:
        raise SensingError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def classify_frame(eta: float, threshold: float, *, is_first: bool = False,
                   static_cr: CrClass = DEFAULT_STATIC,
                   dynamic_cr: CrClass = DEFAULT_DYNAMIC) -> CrClass:
    """Pick a CR class from the mask-change score.

    The first frame of a stream is always dynamic: with no previous mask
    there is nothing the short encoding could lean on.
    """
    if not np.isfinite(eta) or eta < 0:
        raise SensingError(f"invalid mask-change score {eta!r}")
    if is_first:
        return dynamic_cr
    return static_cr if eta < threshold else dynamic_cr


class OsmsPipeline:
    """Stateful per-frame sensing: detect, segment, compare, classify.

    Frames must arrive strictly in index order starting at 1; the mask of
    frame i-1 is the reference for frame i.
    """

    def __init__(self, cfg: SensingConfig | None = None,
                 detector: Detector | None = None,
                 segmenter: Segmenter | None = None,
                 static_cr: CrClass = DEFAULT_STATIC,
                 dynamic_cr: CrClass = DEFAULT_DYNAMIC):
        self.cfg = cfg or SensingConfig()
        self.cfg.validate()
        if (detector is None) != (segmenter is None):
            raise SensingError("provide both detector and segmenter, or neither")
        if detector is None:
            sensor = ChangeSensor(self.cfg)
            detector, segmenter = sensor, sensor
        self.detector = detector
        self.segmenter = segmenter
        self.static_cr = static_cr
        self.dynamic_cr = dynamic_cr
        self._prev_mask: SensingMask | None = None
        self._next_index = 1

    def process(self, frame: Frame) -> tuple[SensingVerdict, SensingMask, DetectionSet]:
        if frame.index != self._next_index:
            raise SensingError(
                f"frames must be sensed in order: expected {self._next_index}, "
                f"got {frame.index}")
        det = detect_objects(frame, self.detector)
        mask = segment_targets(frame, det, self.segmenter)
        first = self._prev_mask is None
        if first:
            eta = float(np.mean(mask.mask))
        else:
            eta = mask_difference(self._prev_mask, mask)
        cr = classify_frame(eta, self.cfg.eta_threshold, is_first=first,
                            static_cr=self.static_cr, dynamic_cr=self.dynamic_cr)
        verdict = SensingVerdict(frame_index=frame.index, eta=eta,
                                 threshold=self.cfg.eta_threshold, cr=cr,
                                 is_first=first)
        self._prev_mask = mask
        self._next_index += 1
        return verdict, mask, det
