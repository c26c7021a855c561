#!/usr/bin/env python3
"""Materialize the synthetic toy corpus to disk: wav files, a manifest,
alignment TSVs, and cached features. Gives the CLI pipeline something real
to chew on without downloading any data.

Usage: python3 scripts/make_toy_corpus.py --out toy_corpus
"""
from __future__ import annotations

import argparse
from pathlib import Path

from scenetts.corpus import AlignedToken, ManifestEntry, Scene, save_alignment, save_manifest
from scenetts.features import FRAME_RATE, FeatureCache, write_wav
from scenetts.synthetic import make_toy_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="toy_corpus")
    args = parser.parse_args()

    root = Path(args.out)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    (root / "align").mkdir(exist_ok=True)
    cache = FeatureCache(root / "features")

    entries = []
    for utt in make_toy_corpus():
        wav_path = root / "audio" / f"{utt.utt_id}.wav"
        write_wav(wav_path, utt.waveform)

        tokens = []
        t = 0.0
        for unit, frames in zip(utt.units, utt.durations):
            dur = float(frames) / FRAME_RATE
            tokens.append(AlignedToken.make(unit, t, t + dur))
            t += dur
        align_path = root / "align" / f"{utt.utt_id}.tsv"
        save_alignment(tokens, align_path)

        entries.append(
            ManifestEntry(
                id=utt.utt_id,
                audio_path=str(wav_path),
                text=utt.text,
                speaker_id=utt.speaker_id,
                scene=Scene.CHAT if utt.style == "calm" else Scene.STORYTELLING,
                duration_s=round(utt.waveform.duration_s, 4),
                phonemes=utt.units,
                alignment_path=str(align_path),
            )
        )
        cache.put(
            utt.utt_id,
            {
                "mel": utt.mel,
                "pitch_hz": utt.pitch_hz,
                "voiced": utt.voiced,
                "energy": utt.energy,
                "durations": utt.durations,
            },
            {"id": utt.utt_id, "speaker": utt.speaker_id, "units": utt.units},
        )

    save_manifest(entries, root / "manifest.jsonl")
    print(f"wrote {len(entries)} utterances under {root}")
    print(f"manifest: {root / 'manifest.jsonl'}")
    print(f"features: {root / 'features'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
