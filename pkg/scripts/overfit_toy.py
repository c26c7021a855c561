#!/usr/bin/env python3
"""Overfit the tiny model on the 20-utterance toy corpus and check that
own-prosody prompting reproduces each utterance's pitch contour.

Usage: python3 scripts/overfit_toy.py [--steps 2000] [--seed 7] [--out runs/toy]
"""
from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np
import torch

from scenetts.config import TrainingConfig, seed_for
from scenetts.inference import SynthesisRequest, synthesize
from scenetts.model import AcousticModel
from scenetts.model.config import ModelConfig
from scenetts.synthetic import make_toy_corpus, toy_vocabulary
from scenetts.training import prepare_examples, pretrain


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="runs/toy")
    args = parser.parse_args()

    torch.set_num_threads(1)
    utterances = make_toy_corpus()
    vocab = toy_vocabulary(utterances)
    examples = prepare_examples(utterances, vocab, mask_ratio=0.6)
    config = TrainingConfig(
        seed=args.seed, steps=args.steps, batch_size=8,
        warmup_steps=200, mask_jitter=0.3,
    )

    torch.manual_seed(seed_for(args.seed, "init"))
    model = AcousticModel(ModelConfig.tiny(vocab_size=len(vocab)))

    t0 = time.time()
    state, history = pretrain(model, examples, config, run_dir=args.out, vocab=vocab)
    print(f"trained {state.step} steps in {time.time() - t0:.0f}s")
    step50 = history[49]["total"]
    final = history[-1]["total"]
    print(f"total loss: step 50 = {step50:.4f}, final = {final:.4f} "
          f"(ratio {final / step50:.3f}, want < 0.5)")

    model.eval()
    deltas = []
    for utt in [u for u in utterances if u.is_short]:
        result = synthesize(
            SynthesisRequest(
                text=utt.text,
                seed=seed_for(args.seed, f"synth:{utt.utt_id}"),
                timbre_ref=utt.waveform,
                prosody_ref=utt.waveform,
                prosody_ref_phonemes=utt.units,
                prosody_ref_durations=utt.durations,
            ),
            model, vocab,
        )
        n = min(result.pitch_hz.size, utt.pitch_hz.size)
        voiced = utt.voiced[:n]
        delta = float(np.mean(np.abs(result.pitch_hz[:n][voiced] - utt.pitch_hz[:n][voiced])))
        deltas.append(delta)
        print(f"  {utt.utt_id}: frames {utt.frames} -> {result.mel.shape[0]}, "
              f"mean |pitch delta| {delta:.2f} Hz")
    print(f"mean over utterances: {np.mean(deltas):.2f} Hz (want < 10)")
    summary = {
        "steps": args.steps, "seed": args.seed, "step50": step50, "final": final,
        "ratio": final / step50, "pitch_deltas": deltas,
    }
    Path(args.out, "overfit_summary.json").write_text(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
