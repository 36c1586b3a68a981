"""Command-line entry points.

Subcommands: train, sense, transmit, evaluate, experiment, report. Every
subcommand takes --config (YAML run config) and --seed (overrides every
seed in the config for quick sweeps). Exit codes: 0 success, 2 config
error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import frames as frames_io
from . import metrics
from .checkpoint import load_pair_checkpoint, save_pair_checkpoint
from .config import RunConfig, load_run_config
from .errors import ConfigError, SemvidError
from .pipeline import (emit_plots, read_summary_csv, run_experiment,
                       run_transmission)
from .records import load_records
from .sensing import OsmsPipeline
from .training import build_model_pair, train


def _load_cfg(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.channel.seed = args.seed
        cfg.train.seed = args.seed
    return cfg


def _load_video(cfg: RunConfig):
    if not cfg.video_path:
        raise ConfigError("config has no video_path")
    return frames_io.load_frames(cfg.video_path,
                                 target_size=cfg.model.frame_size)


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    video = _load_video(cfg)
    pair = build_model_pair(cfg.model, seed=cfg.train.seed,
                            share_extractor=cfg.train.share_extractor)
    result = train(video, pair, cfg.train, channel_cfg=cfg.channel,
                   diagnostics_path=os.path.join(cfg.out_dir, "diverged.npz"))
    os.makedirs(cfg.out_dir, exist_ok=True)
    hist_path = os.path.join(cfg.out_dir, "loss_history.csv")
    with open(hist_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        keys = list(result.history)
        writer.writerow(["epoch", *keys])
        for i in range(result.epochs_run):
            writer.writerow([i + 1, *(result.history[k][i] for k in keys)])
    save_pair_checkpoint(cfg.checkpoint_path, pair, seed=cfg.train.seed)
    print(f"trained {result.epochs_run} epochs; "
          f"final mentor {result.history['mentor_task'][-1]:.6f} / "
          f"student {result.history['student_task'][-1]:.6f}; "
          f"checkpoint {cfg.checkpoint_path}; history {hist_path}")
    if cfg.no_kd_checkpoint_path:
        nokd_cfg = type(cfg.train)(**{**cfg.train.__dict__, "kd_enabled": False})
        pair2 = build_model_pair(cfg.model, seed=cfg.train.seed,
                                 share_extractor=cfg.train.share_extractor)
        train(video, pair2, nokd_cfg, channel_cfg=cfg.channel)
        save_pair_checkpoint(cfg.no_kd_checkpoint_path, pair2,
                             seed=cfg.train.seed, note="trained without KD")
        print(f"no-KD checkpoint {cfg.no_kd_checkpoint_path}")
    return 0


def cmd_sense(args) -> int:
    cfg = _load_cfg(args)
    video = _load_video(cfg)
    osms = OsmsPipeline(cfg.sensing)
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    mask_dir = os.path.join(cfg.out_dir, "masks")
    for frame in video:
        verdict, mask, det = osms.process(frame)
        rows.append([frame.index, f"{verdict.eta:.8f}", verdict.cr.tag,
                     det.count])
        if cfg.dump_masks:
            os.makedirs(mask_dir, exist_ok=True)
            from PIL import Image
            Image.fromarray(mask.mask * 255).save(
                os.path.join(mask_dir, f"mask_{frame.index:06d}.png"))
    out_csv = os.path.join(cfg.out_dir, "sensing.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "eta", "cr_tag", "n_boxes"])
        writer.writerows(rows)
    n_static = sum(1 for r in rows if r[2].startswith("static"))
    print(f"sensed {len(rows)} frames: {n_static} static, "
          f"{len(rows) - n_static} dynamic; wrote {out_csv}")
    return 0


def cmd_transmit(args) -> int:
    cfg = _load_cfg(args)
    video = _load_video(cfg)
    pair = load_pair_checkpoint(cfg.checkpoint_path, cfg.model)
    result = run_transmission(video, pair, cfg.channel, cfg.sensing,
                              zeta=cfg.zeta, out_dir=cfg.out_dir)
    if cfg.save_frames:
        frames_io.save_frames(result.reconstructed,
                              os.path.join(cfg.out_dir, "recon"))
    s = result.summary
    print(f"transmitted {s['n_frames']} frames "
          f"({s['n_static']} static / {s['n_dynamic']} dynamic); "
          f"total {s['total_bits']} bits, delay {s['total_delay_s']:.4f} s, "
          f"objective {s['objective']:.6f}, reduction {s['reduction_pct']:.2f}%")
    return 0


def cmd_evaluate(args) -> int:
    if not args.original or not args.reconstructed:
        raise ConfigError("evaluate needs --original and --reconstructed")
    orig = frames_io.load_frames(args.original)
    recon = frames_io.load_frames(args.reconstructed)
    if len(orig) != len(recon):
        raise ConfigError("original and reconstructed frame counts differ")
    records = {r.frame_index: r for r in load_records(args.records)} \
        if args.records else {}
    report = metrics.quality_report(orig.pixel_array(), recon.pixel_array())
    out_csv = args.out or "evaluation.csv"
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "psnr_db", "ms_ssim", "perceptual",
                         "bits", "delay_s"])
        for i, frame in enumerate(orig):
            rec = records.get(frame.index)
            writer.writerow([frame.index, report.psnr_db[i], report.ms_ssim[i],
                             report.perceptual[i],
                             rec.bits if rec else "", rec.delay_s if rec else ""])
    print(f"evaluated {report.n_frames} frames: mean PSNR "
          f"{report.mean_psnr_db:.3f} dB ({report.n_identical} identical), "
          f"mean MS-SSIM {report.mean_ms_ssim:.5f}, "
          f"mean perceptual {report.mean_perceptual:.6f}; wrote {out_csv}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_cfg(args)
    video = _load_video(cfg)
    pair = load_pair_checkpoint(cfg.checkpoint_path, cfg.model)
    out = run_experiment(cfg, video, pair)
    print(f"experiment wrote {out['summary_csv']} and "
          f"{len(out['plots'])} plots ({len(out['rows'])} rows)")
    return 0


def cmd_report(args) -> int:
    cfg = _load_cfg(args)
    csv_path = os.path.join(cfg.out_dir, "experiment_summary.csv")
    if not os.path.exists(csv_path):
        raise ConfigError(f"no experiment summary at {csv_path}; "
                          "run the experiment subcommand first")
    rows = read_summary_csv(csv_path)
    paths = emit_plots(rows, os.path.join(cfg.out_dir, "plots"))
    cols = ["scheme", "snr_db", "mean_psnr_db", "mean_ms_ssim",
            "total_bits", "total_delay_s", "reduction_pct"]
    print("  ".join(f"{c:>14s}" for c in cols))
    for r in rows:
        print("  ".join(f"{str(r.get(c, '')):>14s}" for c in cols))
    print(f"plots refreshed under {os.path.dirname(paths[0])}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semvid",
        description="Semantic video transmission simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "train": (cmd_train, "train the mentor/student codec pair"),
        "sense": (cmd_sense, "run sensing and CR classification only"),
        "transmit": (cmd_transmit, "full per-frame transmission run"),
        "evaluate": (cmd_evaluate, "score reconstructed frames against originals"),
        "experiment": (cmd_experiment, "SNR sweep over configured schemes"),
        "report": (cmd_report, "reprint and re-plot an experiment summary"),
    }
    for name, (fn, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the YAML run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override every seed in the config")
        if name == "evaluate":
            p.add_argument("--original", help="directory of source frames")
            p.add_argument("--reconstructed", help="directory of output frames")
            p.add_argument("--records", help="records.jsonl to merge", default="")
            p.add_argument("--out", help="output CSV path", default="")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SemvidError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
