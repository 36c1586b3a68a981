"""Quality metrics, rate/delay accounting, and the transmission objective.

Everything here is pure: no hidden state, safe to call from anywhere. Pixel
arrays are (H, W, C) or (H, W) floats; all statistics run in float64.

PSNR of identical images is reported as the ``IDENTICAL`` sentinel (+inf).
MS-SSIM follows the product form prod_j SSIM^alpha_j with full SSIM evaluated
at every scale; images too small for the requested pyramid reduce the scale
count with a warning and renormalized weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

IDENTICAL = float("inf")

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


def _pixels(x) -> np.ndarray:
    px = getattr(x, "pixels", x)
    return np.asarray(px, dtype=np.float64)


def _check_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")


def mse(x, x_hat) -> float:
    a, b = _pixels(x), _pixels(x_hat)
    _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(x, x_hat, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; IDENTICAL (+inf) when MSE is zero."""
    if max_val <= 0:
        raise ValueError("max_val must be positive")
    err = mse(x, x_hat)
    if err == 0.0:
        return IDENTICAL
    return 10.0 * math.log10(max_val * max_val / err)


def _gauss_kernel(size: int, sigma: float) -> np.ndarray:
    t = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return w / w.sum()


def _local_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, win, axis=0, mode="reflect")
    return ndimage.correlate1d(out, win, axis=1, mode="reflect")


def ssim(x, x_hat, data_range: float = 1.0, win_size: int = _SSIM_WIN,
         sigma: float = _SSIM_SIGMA, k1: float = _K1, k2: float = _K2) -> float:
    """Mean structural similarity with Gaussian-window local statistics.

    Channels are scored independently and averaged. For constant images the
    score collapses to (2*m1*m2 + c1) / (m1^2 + m2^2 + c1).
    """
    a, b = _pixels(x), _pixels(x_hat)
    _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim != 3:
        raise ValueError("images must be (H, W) or (H, W, C)")
    win = _gauss_kernel(win_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    scores = []
    for c in range(a.shape[2]):
        ac, bc = a[..., c], b[..., c]
        mu_a = _local_mean(ac, win)
        mu_b = _local_mean(bc, win)
        var_a = _local_mean(ac * ac, win) - mu_a * mu_a
        var_b = _local_mean(bc * bc, win) - mu_b * mu_b
        cov = _local_mean(ac * bc, win) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def _halve(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    x = img[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(x, x_hat, data_range: float = 1.0,
            weights: Sequence[float] = MS_SSIM_WEIGHTS,
            win_size: int = _SSIM_WIN) -> float:
    """Multi-scale SSIM: product over scales of SSIM^weight.

    Each scale halves the resolution by 2x2 mean pooling. If the image
    cannot support all requested scales at the given window size, the scale
    count drops (with a warning) and the surviving weights are renormalized.
    Negative per-scale SSIM values are floored at zero so the result stays
    in [0, 1].
    """
    a, b = _pixels(x), _pixels(x_hat)
    _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    side = min(a.shape[0], a.shape[1])
    j_max = 1
    while j_max < len(weights) and side // (2 ** j_max) >= win_size:
        j_max += 1
    w = np.asarray(weights[:j_max], dtype=np.float64)
    if j_max < len(weights):
        warnings.warn(
            f"image of side {side} supports {j_max} of {len(weights)} "
            "MS-SSIM scales; renormalizing weights", stacklevel=2)
        w = w / w.sum()
    score = 1.0
    for j in range(j_max):
        s = max(0.0, ssim(a, b, data_range=data_range, win_size=win_size))
        score *= s ** w[j]
        if j + 1 < j_max:
            a, b = _halve(a), _halve(b)
    return float(score)


class RandomConvExtractor:
    """Frozen random convolutional stack used as the default perception net.

    Three 3x3 convolutions with stride 2 (zero padding 1) and channel widths
    in_channels -> 16 -> 32 -> 64, ReLU between layers, linear output. All
    weights are drawn once from a fixed-seed generator and never trained.
    """

    widths = (16, 32, 64)

    def __init__(self, in_channels: int = 3, seed: int = 1234):
        rng = np.random.default_rng(seed)
        self.kernels: list[np.ndarray] = []
        c_in = in_channels
        for c_out in self.widths:
            std = math.sqrt(2.0 / (c_in * 9))
            self.kernels.append(rng.normal(0.0, std, size=(c_out, c_in, 3, 3)))
            c_in = c_out

    @staticmethod
    def _conv_s2(x: np.ndarray, k: np.ndarray) -> np.ndarray:
        # x: (C_in, H, W), k: (C_out, C_in, 3, 3) -> (C_out, H//2, W//2)
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::2, ::2]
        return np.einsum("chwij,ocij->ohw", win, k, optimize=True)

    def features(self, img) -> np.ndarray:
        px = _pixels(img)
        if px.ndim == 2:
            px = px[..., None]
        x = np.moveaxis(px, -1, 0)
        for i, k in enumerate(self.kernels):
            x = self._conv_s2(x, k)
            if i + 1 < len(self.kernels):
                x = np.maximum(x, 0.0)
        return x


@lru_cache(maxsize=4)
def default_extractor(in_channels: int = 3) -> RandomConvExtractor:
    return RandomConvExtractor(in_channels=in_channels)


def perceptual_loss(x, x_hat, extractor=None) -> float:
    """MSE between feature maps of a perception network (default: frozen
    random conv stack; anything with a features(img) method plugs in)."""
    a, b = _pixels(x), _pixels(x_hat)
    _check_pair(a, b)
    if extractor is None:
        channels = a.shape[2] if a.ndim == 3 else 1
        extractor = default_extractor(channels)
    if not hasattr(extractor, "features"):
        raise ValueError("perceptual extractor must provide features(img)")
    fa = np.asarray(extractor.features(a), dtype=np.float64)
    fb = np.asarray(extractor.features(b), dtype=np.float64)
    return float(np.mean((fa - fb) ** 2))


def box_iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax0, ay0, ax1, ay1 = a.as_xyxy()
    bx0, by0, bx1, by1 = b.as_xyxy()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    overlap = iw * ih
    union = a.area + b.area - overlap
    if union <= 0.0:
        return 0.0
    return overlap / union


def _boxes(obj) -> list:
    inner = getattr(obj, "boxes", obj)
    return list(inner)


def iou_loss(boxes_a, boxes_b) -> float:
    """One minus the mean IoU of greedily matched boxes.

    Pairs are matched in order of descending IoU (ties resolved by lower
    index in A, then in B); unmatched boxes count as IoU zero via the
    max(|A|, |B|) denominator. Two empty sets score 0 by convention.
    """
    la, lb = _boxes(boxes_a), _boxes(boxes_b)
    if not la and not lb:
        return 0.0
    if not la or not lb:
        return 1.0
    work = np.array([[box_iou(a, b) for b in lb] for a in la], dtype=np.float64)
    total = 0.0
    for _ in range(min(len(la), len(lb))):
        flat = int(np.argmax(work))
        i, j = divmod(flat, work.shape[1])
        total += work[i, j]
        work[i, :] = -1.0
        work[:, j] = -1.0
    return 1.0 - total / max(len(la), len(lb))


def transmission_rate(bandwidth_hz: float, snr_db: float) -> float:
    """Shannon rate v = B * log2(1 + 10^(snr_db/10)) in bits/second."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    if math.isinf(snr_db):
        return math.inf if snr_db > 0 else 0.0
    return bandwidth_hz * math.log2(1.0 + 10.0 ** (snr_db / 10.0))


def frame_delay(bits: float, rate_bps: float) -> float:
    if rate_bps <= 0:
        raise ValueError("rate must be positive")
    if bits < 0:
        raise ValueError("bits must be non-negative")
    return bits / rate_bps


def total_delay(delays: Iterable[float]) -> float:
    out = 0.0
    for t in delays:
        if t < 0:
            raise ValueError("delays must be non-negative")
        out += t
    return out


def objective_score(frames: Sequence, recons: Sequence,
                    r_flags: Sequence[int], total_delay_s: float,
                    zeta: float = 0.01) -> float:
    """Distortion-delay objective: mean over frames of MSE*(1 - r) plus
    zeta times the total transmission delay. r = 1 marks a static frame,
    whose distortion the objective forgives."""
    if not (len(frames) == len(recons) == len(r_flags)):
        raise ValueError("frames, recons, and r_flags must have equal length")
    if zeta < 0:
        raise ValueError("zeta must be non-negative")
    if len(frames) == 0:
        raise ValueError("need at least one frame")
    acc = 0.0
    for x, xh, r in zip(frames, recons, r_flags):
        if r not in (0, 1):
            raise ValueError("r flags must be 0 or 1")
        acc += mse(x, xh) * (1 - r)
    return acc / len(frames) + zeta * total_delay_s


@dataclass(frozen=True)
class QualityReport:
    """Per-frame quality scores plus the aggregates used in summaries."""

    psnr_db: tuple[float, ...]
    ms_ssim: tuple[float, ...]
    perceptual: tuple[float, ...]

    def __post_init__(self):
        n = len(self.psnr_db)
        if not (len(self.ms_ssim) == len(self.perceptual) == n):
            raise ValueError("per-frame metric lists must have equal length")
        for v in self.ms_ssim:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"ms_ssim {v} outside [0, 1]")
        for v in self.perceptual:
            if v < 0.0:
                raise ValueError("perceptual loss must be non-negative")

    @property
    def n_frames(self) -> int:
        return len(self.psnr_db)

    @property
    def n_identical(self) -> int:
        return sum(1 for v in self.psnr_db if math.isinf(v))

    @property
    def mean_psnr_db(self) -> float:
        finite = [v for v in self.psnr_db if math.isfinite(v)]
        return float(np.mean(finite)) if finite else IDENTICAL

    @property
    def mean_ms_ssim(self) -> float:
        return float(np.mean(self.ms_ssim))

    @property
    def mean_perceptual(self) -> float:
        return float(np.mean(self.perceptual))


def quality_report(frames: Sequence, recons: Sequence, max_val: float = 1.0,
                   extractor=None) -> QualityReport:
    if len(frames) != len(recons):
        raise ValueError("frame count mismatch")
    ps, ms, pc = [], [], []
    for x, xh in zip(frames, recons):
        ps.append(psnr(x, xh, max_val=max_val))
        ms.append(ms_ssim(x, xh, data_range=max_val))
        pc.append(perceptual_loss(x, xh, extractor=extractor))
    return QualityReport(tuple(ps), tuple(ms), tuple(pc))


@dataclass(frozen=True)
class DelayLedger:
    """Per-frame bits, rates, and delays; total must close exactly."""

    bits: tuple[float, ...]
    rates_bps: tuple[float, ...]
    delays_s: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.bits) == len(self.rates_bps) == len(self.delays_s)):
            raise ValueError("ledger columns must have equal length")
        for z, v, t in zip(self.bits, self.rates_bps, self.delays_s):
            if z < 0 or v <= 0 or t < 0:
                raise ValueError("ledger entries must be non-negative (rate positive)")
            if not math.isclose(t, z / v, rel_tol=1e-12, abs_tol=0.0):
                raise ValueError("delay entry inconsistent with bits/rate")

    @property
    def total_s(self) -> float:
        return total_delay(self.delays_s)


def build_ledger(bits: Sequence[float], rates_bps: Sequence[float]) -> DelayLedger:
    if len(bits) != len(rates_bps):
        raise ValueError("bits and rates must have equal length")
    delays = tuple(frame_delay(z, v) for z, v in zip(bits, rates_bps))
    return DelayLedger(tuple(float(z) for z in bits),
                       tuple(float(v) for v in rates_bps), delays)
