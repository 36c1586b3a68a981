#!/usr/bin/env python3
"""Generate a labeled moving-square benchmark video plus a ready run config.

Writes the frames as PNGs, a ground-truth label file, and a YAML run config
pointing at them, so a full train/sense/transmit cycle is one command away:

    python scripts/make_demo_video.py --out demo
    semvid train --config demo/run.yaml
    semvid transmit --config demo/run.yaml
"""

import argparse
import sys
from pathlib import Path

import yaml

from semvid.config import ModelConfig
from semvid.errors import ConfigError
from semvid.frames import save_frames
from semvid.synthetic import make_schedule, moving_square_video


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo", help="output directory")
    ap.add_argument("--frames", type=int, default=100)
    ap.add_argument("--frame-size", type=int, default=64)
    ap.add_argument("--static-fraction", type=float, default=0.6)
    ap.add_argument("--snr-db", type=float, default=10.0)
    args = ap.parse_args()

    # scale the model geometry with the frame size and fail before writing
    # anything if the result is inconsistent
    patch = max(4, args.frame_size // 8)
    grid = args.frame_size // patch
    model_keys = {"frame_size": args.frame_size, "patch": patch,
                  "regions_per_side": 4 if grid % 4 == 0 else 2}
    try:
        ModelConfig(**model_keys).validate()
    except ConfigError as exc:
        print(f"frame size {args.frame_size} gives no valid geometry: {exc}",
              file=sys.stderr)
        return 2

    out = Path(args.out)
    frames_dir = out / "frames"
    schedule = make_schedule(args.frames, args.static_fraction)
    video = moving_square_video(schedule, frame_size=args.frame_size)
    save_frames(video, frames_dir)
    (out / "labels.txt").write_text("\n".join(video.labels) + "\n")

    cfg = {
        "video_path": str(frames_dir),
        "checkpoint_path": str(out / "pair.npz"),
        "no_kd_checkpoint_path": str(out / "pair_nokd.npz"),
        "out_dir": str(out / "runs"),
        "model": model_keys,
        "channel": {"snr_db": args.snr_db, "fading": "awgn", "seed": 0},
        "train": {"epochs": 10, "batch_size": 8},
        "schemes": ["full", "no_osms"],
    }
    cfg_path = out / "run.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg, sort_keys=False))

    n_static = video.labels.count("static")
    print(f"wrote {len(video)} frames ({n_static} static, "
          f"{len(video) - n_static} dynamic) under {frames_dir}")
    print(f"run config at {cfg_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
