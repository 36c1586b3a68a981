#!/usr/bin/env python3
"""Train mentor/student pairs with and without distillation and compare.

Reproduces the distillation ordering study on the toy frame set: for each
seed the script trains a pair with the KD term and a control pair without
it, then reports final noise-off validation MSE for the mentor, the KD
student, and the control student. The expected picture is mentor best,
KD student second, control student worst on most seeds.
"""

import argparse
import csv
import sys
import time

from semvid.config import ModelConfig, TrainConfig
from semvid.synthetic import random_square_frames
from semvid.training import kd_ordering_counts, run_kd_comparison


def toy_model() -> ModelConfig:
    return ModelConfig(frame_size=16, patch=4, regions_per_side=2,
                       token_dim=16, routing_topk=2, num_heads=1,
                       lce_kernel=3, decoder_depth=2, decoder_mlp_ratio=2,
                       static_len=4, dynamic_len=64)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-frames", type=int, default=200)
    ap.add_argument("--val-frames", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--lr", type=float, default=0.02)
    ap.add_argument("--tau", type=float, default=4.0,
                    help="KL temperature of the distillation term")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="", help="optional CSV for the results")
    args = ap.parse_args()

    train_v = random_square_frames(args.train_frames, frame_size=16,
                                   square_size=6, seed=0)
    val_v = random_square_frames(args.val_frames, frame_size=16,
                                 square_size=6, seed=999)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, kl_temperature=args.tau)

    t0 = time.time()
    results = run_kd_comparison(train_v, val_v, toy_model(), cfg,
                                seeds=tuple(args.seeds))
    took = time.time() - t0

    print(f"{'seed':>4}  {'mentor':>10}  {'student+KD':>10}  {'student-KD':>10}")
    for seed, row in results.items():
        print(f"{seed:>4}  {row['mentor']:>10.5f}  {row['student_kd']:>10.5f}"
              f"  {row['student_nokd']:>10.5f}")
    counts = kd_ordering_counts(results)
    n = counts["n_seeds"]
    print(f"mentor <= student+KD in {counts['mentor_le_student_kd']}/{n} seeds")
    print(f"student+KD <= student-KD in {counts['student_kd_le_nokd']}/{n} seeds")
    print(f"({took:.0f}s for {2 * n} training runs)")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "mentor_mse", "student_kd_mse",
                        "student_nokd_mse"])
            for seed, row in results.items():
                w.writerow([seed, row["mentor"], row["student_kd"],
                            row["student_nokd"]])
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
