#!/usr/bin/env python3
"""Train architecture variants on the toy corpus and print the comparison
table (timbre-cosine proxy plus pitch statistic differences).

Usage: python3 scripts/ablation_toy.py [--variants baseline cnn_predictor]
       [--steps 1500] [--seed 7] [--out ablation_report.txt]
"""
from __future__ import annotations

import argparse
import time

import torch

from scenetts.ablation import format_report, run_ablation, save_report
from scenetts.config import RunConfig, TrainingConfig
from scenetts.model.config import ModelConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--variants", nargs="+", default=["baseline", "cnn_predictor"],
        help="at least two of: baseline cnn_predictor atten_predictor "
             "parallel_spk addall_spk ns2_prompting",
    )
    parser.add_argument("--steps", type=int, default=1500)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="ablation_report.txt")
    args = parser.parse_args()

    torch.set_num_threads(1)
    config = RunConfig(
        model=ModelConfig.tiny(),
        training=TrainingConfig(
            seed=args.seed, steps=args.steps, batch_size=8,
            warmup_steps=200, mask_jitter=0.3,
        ),
    )
    t0 = time.time()
    report = run_ablation(args.variants, config)
    print(f"ablation finished in {time.time() - t0:.0f}s")
    print(format_report(report), end="")
    save_report(report, args.out)
    print(f"report written to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
