"""Per-frame transmission records and their on-disk form.

Records go to ``records.jsonl`` (one JSON object per frame, append-friendly)
with totals and metric means in a sibling ``summary.csv``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import FrameError

CR_STATIC = "static_high_cr"
CR_DYNAMIC = "dynamic_low_cr"


@dataclass
class TransmissionRecord:
    """Accounting for one transmitted frame."""

    frame_index: int
    cr_tag: str               # CR_STATIC or CR_DYNAMIC
    r_flag: int               # 1 = static/compressed, 0 = dynamic
    encoding_length: int      # real-valued symbols transmitted
    eta: float                # mask difference vs. previous frame
    bits: int                 # encoding_length * bits_per_symbol
    delay_s: float
    mse: float
    psnr_db: float            # +inf when reconstruction identical
    ms_ssim: float
    perceptual: float
    snr_db: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "TransmissionRecord":
        return cls(**json.loads(line))


def summarize_records(records: list[TransmissionRecord]) -> dict:
    """Totals and per-frame means; PSNR averages over finite entries only."""
    n = len(records)
    finite_psnr = [r.psnr_db for r in records if math.isfinite(r.psnr_db)]
    return {
        "n_frames": n,
        "n_static": sum(r.r_flag for r in records),
        "n_dynamic": sum(1 - r.r_flag for r in records),
        "total_symbols": sum(r.encoding_length for r in records),
        "total_bits": sum(r.bits for r in records),
        "total_delay_s": sum(r.delay_s for r in records),
        "mean_mse": sum(r.mse for r in records) / n,
        "mean_psnr_db": (sum(finite_psnr) / len(finite_psnr)) if finite_psnr else math.inf,
        "n_psnr_identical": n - len(finite_psnr),
        "mean_ms_ssim": sum(r.ms_ssim for r in records) / n,
        "mean_perceptual": sum(r.perceptual for r in records) / n,
    }


def _paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix == ".jsonl":
        return path, path.with_name("summary.csv")
    return path / "records.jsonl", path / "summary.csv"


def save_records(records: list[TransmissionRecord], path: str | Path,
                 extra_summary: dict | None = None) -> None:
    """Write records.jsonl plus a one-row summary.csv.

    `path` may be an output directory or an explicit ``*.jsonl`` file.
    """
    if not records:
        raise FrameError("refusing to write an empty record set")
    jsonl_path, summary_path = _paths(path)
    jsonl_path.parent.mkdir(parents=True, exist_ok=True)
    with open(jsonl_path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    summary = summarize_records(records)
    if extra_summary:
        summary.update(extra_summary)
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summary.keys()))
        writer.writeheader()
        writer.writerow(summary)


def load_records(path: str | Path) -> list[TransmissionRecord]:
    jsonl_path, _ = _paths(path)
    if not jsonl_path.is_file():
        raise FrameError(f"no records file at {jsonl_path}")
    with open(jsonl_path) as fh:
        return [TransmissionRecord.from_json(line) for line in fh if line.strip()]
