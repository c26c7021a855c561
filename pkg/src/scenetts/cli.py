"""Command-line entry point.

Subcommands: corpus {segment,filter,stats,split}, features extract,
train {pretrain,finetune}, synth, eval {prosody,speaker}. Flags override
config-file values; results go to stdout, diagnostics to stderr; exit
code 0 means the command completed.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import corpus as corpus_mod
from .config import (
    CACHE_ENV_VAR,
    ConfigError,
    RunConfig,
    dump_run_config,
    load_run_config,
    seed_for,
)
from .evaluation import prosody_distance, speaker_similarity, track_statistics, voiced_values
from .features import (
    FeatureCache,
    FeatureError,
    SAMPLE_RATE,
    durations_from_alignment,
    extract_energy,
    extract_pitch,
    load_feature_file,
    mel_spectrogram,
    read_wav,
    resample,
    save_feature_file,
    write_wav,
)
from .g2p import Vocabulary, g2p
from .inference import SynthesisError, SynthesisRequest, result_mel, synthesize
from .model import AcousticModel, CheckpointError, load_checkpoint
from .training import UtteranceRecord, finetune, prepare_examples, pretrain
from .vocoder import griffin_lim


class CliError(RuntimeError):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenetts",
        description="Prompt-based expressive TTS: corpus prep, training, synthesis, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="corpus construction pipeline")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True)

    seg = corpus_sub.add_parser("segment", help="cut an aligned utterance into clips")
    seg.add_argument("--alignment", required=True, help="token alignment TSV")
    seg.add_argument("--out", required=True, help="output segment JSONL")
    seg.add_argument("--window-min", type=float, default=5.0)
    seg.add_argument("--window-max", type=float, default=10.0)

    filt = corpus_sub.add_parser("filter", help="drop clips whose transcript disagrees with ASR")
    filt.add_argument("--manifest", required=True)
    filt.add_argument("--out", required=True)
    filt.add_argument("--threshold", type=float, default=corpus_mod.DEFAULT_SIMILARITY_THRESHOLD)
    filt.add_argument("--rejects", help="optional JSONL of rejected ids")

    stats = corpus_sub.add_parser("stats", help="per-scene hours, clips, speaking speed")
    stats.add_argument("--manifest", required=True)
    stats.add_argument("--json", action="store_true")

    split = corpus_sub.add_parser("split", help="train/test split, one test speaker per scene")
    split.add_argument("--manifest", required=True)
    split.add_argument("--seed", type=int, required=True)
    split.add_argument("--out", required=True)

    features = sub.add_parser("features", help="acoustic feature extraction")
    features_sub = features.add_subparsers(dest="subcommand", required=True)
    extract = features_sub.add_parser("extract", help="extract mel/pitch/energy into the cache")
    extract.add_argument("--manifest", required=True)
    extract.add_argument("--cache", help=f"cache directory (or ${CACHE_ENV_VAR})")

    train = sub.add_parser("train", help="masked prosody prediction training")
    train_sub = train.add_subparsers(dest="subcommand", required=True)
    for name in ("pretrain", "finetune"):
        tp = train_sub.add_parser(name)
        tp.add_argument("--config", required=True, help="dotted-key config file")
        tp.add_argument("--seed", type=int, help="override training.seed")
        tp.add_argument("--steps", type=int, help="override training.steps")
        tp.add_argument("--run-dir", help="override data.run_dir")
        tp.add_argument("--toy", action="store_true", help="train on the builtin synthetic corpus")
        if name == "finetune":
            tp.add_argument("--init", required=True, help="checkpoint to start from")

    synth = sub.add_parser("synth", help="synthesize mel (or wav) from text and references")
    synth.add_argument("--ckpt", required=True)
    synth.add_argument("--text", required=True)
    synth.add_argument("--timbre-ref", required=True, help="wav carrying the target voice")
    synth.add_argument("--prosody-ref", required=True, help="wav carrying the prosody prompt")
    synth.add_argument("--prosody-ref-text", help="reference transcript for duration prompting")
    synth.add_argument("--vocab", help="vocabulary file; default: vocab.txt next to the checkpoint")
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--out", required=True, help=".wav for audio, anything else for a mel container")

    ev = sub.add_parser("eval", help="objective prosody / speaker metrics")
    ev_sub = ev.add_subparsers(dest="subcommand", required=True)
    prosody = ev_sub.add_parser("prosody", help="statistic differences over paired feature dirs")
    prosody.add_argument("--gen", required=True)
    prosody.add_argument("--ref", required=True)
    prosody.add_argument("--out", required=True)
    prosody.add_argument("--json", action="store_true")
    speaker = ev_sub.add_parser("speaker", help="timbre cosine between two wavs")
    speaker.add_argument("--a", required=True)
    speaker.add_argument("--b", required=True)
    speaker.add_argument("--ckpt", required=True)
    speaker.add_argument("--json", action="store_true")

    return parser


def _load_audio(path: str):
    w = read_wav(path)
    return resample(w, SAMPLE_RATE) if w.sample_rate != SAMPLE_RATE else w


def _cmd_corpus_segment(args) -> int:
    tokens = corpus_mod.load_alignment(args.alignment)
    segments = corpus_mod.segment_utterance(tokens, (args.window_min, args.window_max))
    stem = Path(args.alignment).stem
    with open(args.out, "w", encoding="utf-8") as out:
        for i, seg in enumerate(segments):
            record = {
                "id": f"{stem}_{i:04d}",
                "start_s": round(seg.start_s, 4),
                "end_s": round(seg.end_s, 4),
                "duration_s": round(seg.duration_s, 4),
                "text": seg.text,
                "flags": list(seg.flags),
            }
            out.write(json.dumps(record, ensure_ascii=False) + "\n")
    flagged = sum(1 for s in segments if s.flags)
    print(f"wrote {len(segments)} segments ({flagged} flagged) to {args.out}")
    return 0


def _cmd_corpus_filter(args) -> int:
    entries = corpus_mod.load_manifest(args.manifest)
    result = corpus_mod.asr_filter(entries, threshold=args.threshold)
    corpus_mod.save_manifest(result.kept, args.out)
    if args.rejects:
        with open(args.rejects, "w", encoding="utf-8") as out:
            for rej in result.rejected:
                out.write(json.dumps(asdict(rej), ensure_ascii=False) + "\n")
    print(f"kept {len(result.kept)}, rejected {len(result.rejected)} (threshold {args.threshold})")
    return 0


def _cmd_corpus_stats(args) -> int:
    entries = corpus_mod.load_manifest(args.manifest)
    stats = corpus_mod.scene_statistics(entries)
    if args.json:
        print(json.dumps([
            {
                "scene": s.scene.value,
                "hours": round(s.hours, 2),
                "clips": s.clip_count,
                "speed_cpm": round(s.speed_cpm, 1),
            }
            for s in stats
        ]))
        return 0
    print(f"{'scene':<14}{'hours':>8}{'clips':>8}{'speed':>8}")
    for s in stats:
        print(f"{s.scene.value:<14}{s.hours:>8.2f}{s.clip_count:>8d}{s.speed_cpm:>8.1f}")
    return 0


def _cmd_corpus_split(args) -> int:
    entries = corpus_mod.load_manifest(args.manifest)
    split_entries = corpus_mod.split_train_test(entries, seed=args.seed)
    corpus_mod.save_manifest(split_entries, args.out)
    test_speakers = sorted(
        {(e.scene.value, e.speaker_id) for e in split_entries if e.split == corpus_mod.Split.TEST}
    )
    for scene, speaker in test_speakers:
        print(f"test speaker for {scene}: {speaker}")
    return 0


def _cmd_features_extract(args) -> int:
    import os

    entries = corpus_mod.load_manifest(args.manifest)
    cache_dir = args.cache or os.environ.get(CACHE_ENV_VAR) or "features_cache"
    cache = FeatureCache(cache_dir)
    for entry in entries:
        w = _load_audio(entry.audio_path)
        mel = mel_spectrogram(w)
        pitch, voiced = extract_pitch(w)
        energy = extract_energy(w)
        arrays = {
            "mel": mel.values,
            "pitch_hz": pitch,
            "voiced": voiced,
            "energy": energy,
        }
        meta = {
            "id": entry.id,
            "speaker": entry.speaker_id,
            "scene": entry.scene.value,
            "sample_rate": SAMPLE_RATE,
            "text": entry.text,
        }
        if entry.alignment_path:
            tokens = corpus_mod.load_alignment(entry.alignment_path)
            spans = [(t.start_s, t.end_s) for t in tokens]
            arrays["durations"] = durations_from_alignment(
                [t.token for t in tokens], spans, mel.frames
            )
            meta["units"] = [t.token for t in tokens]
        cache.put(entry.id, arrays, meta)
    print(f"extracted features for {len(entries)} utterances into {cache_dir}")
    return 0


def _toy_records():
    from .synthetic import make_toy_corpus, toy_vocabulary

    utterances = make_toy_corpus()
    return utterances, toy_vocabulary(utterances)


def _manifest_records(config: RunConfig):
    if not config.data.manifest:
        raise CliError("data.manifest is not set; pass --toy to use the synthetic corpus")
    entries = corpus_mod.load_manifest(config.data.manifest)
    cache = FeatureCache(config.cache_dir())
    records = []
    for entry in entries:
        blob = cache.get(entry.id)
        if blob is None:
            raise CliError(f"no cached features for {entry.id!r}; run features extract first")
        arrays, meta = blob
        if "durations" not in arrays:
            raise CliError(f"{entry.id!r} has no durations; extract with an alignment")
        units = meta.get("units") or entry.phonemes or g2p(entry.text)
        records.append(
            UtteranceRecord(
                utt_id=entry.id,
                speaker_id=entry.speaker_id,
                units=list(units),
                durations=arrays["durations"],
                pitch_hz=arrays["pitch_hz"],
                energy=arrays["energy"],
                mel=arrays["mel"],
            )
        )
    vocab = Vocabulary.build(r.units for r in records)
    return records, vocab


def _train_overrides(args) -> dict[str, str]:
    overrides = {}
    if args.seed is not None:
        overrides["training.seed"] = str(args.seed)
    if args.steps is not None:
        overrides["training.steps"] = str(args.steps)
    if args.run_dir is not None:
        overrides["data.run_dir"] = args.run_dir
    return overrides


def _cmd_train(args) -> int:
    config = load_run_config(args.config, _train_overrides(args))
    records, vocab = _toy_records() if args.toy else _manifest_records(config)
    examples = prepare_examples(records, vocab, config.training.mask_ratio, config.training.mask_mode)
    run_dir = Path(config.data.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(dump_run_config(config), encoding="utf-8")

    if args.subcommand == "pretrain":
        from dataclasses import replace

        model_config = replace(config.model, vocab_size=len(vocab))
        torch.manual_seed(seed_for(config.training.seed, "init"))
        model = AcousticModel(model_config)
        state, history = pretrain(model, examples, config.training, run_dir, vocab)
    else:
        model, _meta = load_checkpoint(args.init)
        steps = args.steps if args.steps is not None else config.training.steps
        state, history = finetune(model, examples, config.training, steps, run_dir, vocab)
    print(
        f"trained {state.step} steps; final total loss {history[-1]['total']:.6f}; "
        f"run dir {run_dir}"
    )
    return 0


def _load_vocab_for(ckpt_path: str, vocab_arg: str | None) -> Vocabulary:
    path = Path(vocab_arg) if vocab_arg else Path(ckpt_path).parent / "vocab.txt"
    if not path.exists():
        raise CliError(f"vocabulary file not found: {path} (pass --vocab)")
    symbols = [line for line in path.read_text(encoding="utf-8").splitlines() if line]
    return Vocabulary.from_symbols(symbols)


def _cmd_synth(args) -> int:
    model, _meta = load_checkpoint(args.ckpt)
    vocab = _load_vocab_for(args.ckpt, args.vocab)
    request = SynthesisRequest(
        text=args.text,
        seed=args.seed,
        timbre_ref=args.timbre_ref,
        prosody_ref=args.prosody_ref,
        prosody_ref_text=args.prosody_ref_text,
    )
    result = synthesize(request, model, vocab)
    out = Path(args.out)
    if out.suffix.lower() == ".wav":
        write_wav(out, griffin_lim(result_mel(result)))
    else:
        save_feature_file(
            out,
            {
                "mel": result.mel,
                "durations": result.durations,
                "pitch_hz": result.pitch_hz,
                "energy": result.energy,
            },
            {
                "kind": "mel",
                "sample_rate": SAMPLE_RATE,
                "hop": 256,
                "text": args.text,
                "seed": args.seed,
            },
        )
    print(f"wrote {result.mel.shape[0]} frames to {out}")
    return 0


def _paired_feature_files(gen_dir: str, ref_dir: str):
    gen_files = {p.stem: p for p in sorted(Path(gen_dir).glob("*.feat"))}
    ref_files = {p.stem: p for p in sorted(Path(ref_dir).glob("*.feat"))}
    common = sorted(set(gen_files) & set(ref_files))
    if not common:
        raise CliError(f"no paired .feat files between {gen_dir} and {ref_dir}")
    missing = sorted(set(gen_files) ^ set(ref_files))
    if missing:
        print(f"warning: {len(missing)} unpaired files ignored", file=sys.stderr)
    return [(stem, gen_files[stem], ref_files[stem]) for stem in common]


def _cmd_eval_prosody(args) -> int:
    pairs = _paired_feature_files(args.gen, args.ref)
    gen_pitch, ref_pitch, gen_energy, ref_energy = [], [], [], []
    per_pair = []
    for stem, gen_path, ref_path in pairs:
        g_arrays, _ = load_feature_file(gen_path)
        r_arrays, _ = load_feature_file(ref_path)
        gp = voiced_values(g_arrays["pitch_hz"], g_arrays.get("voiced"))
        rp = voiced_values(r_arrays["pitch_hz"], r_arrays.get("voiced"))
        if gp.size == 0 or rp.size == 0:
            print(f"warning: {stem} has no voiced frames, skipped", file=sys.stderr)
            continue
        gen_pitch.append(gp)
        ref_pitch.append(rp)
        gen_energy.append(g_arrays["energy"])
        ref_energy.append(r_arrays["energy"])
        pair_pitch = np.abs(
            track_statistics(gp).as_array() - track_statistics(rp).as_array()
        )
        pair_energy = np.abs(
            track_statistics(g_arrays["energy"]).as_array()
            - track_statistics(r_arrays["energy"]).as_array()
        )
        per_pair.append((stem, pair_pitch, pair_energy))
    if not gen_pitch:
        raise CliError("no usable pairs")
    pitch_d = prosody_distance(gen_pitch, ref_pitch)
    energy_d = prosody_distance(gen_energy, ref_energy)

    stat_names = ("mean", "std", "skew", "kurt")
    lines = [f"{'track':<8}" + "".join(f"{n:>12}" for n in stat_names)]
    for label, d in (("pitch", pitch_d), ("energy", energy_d)):
        lines.append(f"{label:<8}" + "".join(f"{getattr(d, n):>12.6f}" for n in stat_names))
    lines.append("")
    for stem, pp, pe in per_pair:
        pitch_cols = " ".join(f"pitch_{n}={v:.6f}" for n, v in zip(stat_names, pp))
        energy_cols = " ".join(f"energy_{n}={v:.6f}" for n, v in zip(stat_names, pe))
        lines.append(f"pair={stem} {pitch_cols} {energy_cols}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")

    if args.json:
        print(json.dumps({
            "pairs": len(per_pair),
            "pitch": {n: getattr(pitch_d, n) for n in stat_names},
            "energy": {n: getattr(energy_d, n) for n in stat_names},
        }))
    else:
        print("\n".join(lines[:3]))
        print(f"report written to {args.out}")
    return 0


def _cmd_eval_speaker(args) -> int:
    model, _meta = load_checkpoint(args.ckpt)
    value = speaker_similarity(_load_audio(args.a), _load_audio(args.b), model)
    if args.json:
        print(json.dumps({"similarity": value}))
    else:
        print(f"speaker similarity: {value:.6f}")
    return 0


_HANDLERS = {
    ("corpus", "segment"): _cmd_corpus_segment,
    ("corpus", "filter"): _cmd_corpus_filter,
    ("corpus", "stats"): _cmd_corpus_stats,
    ("corpus", "split"): _cmd_corpus_split,
    ("features", "extract"): _cmd_features_extract,
    ("train", "pretrain"): _cmd_train,
    ("train", "finetune"): _cmd_train,
    ("synth", None): _cmd_synth,
    ("eval", "prosody"): _cmd_eval_prosody,
    ("eval", "speaker"): _cmd_eval_speaker,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = _HANDLERS[(args.command, getattr(args, "subcommand", None))]
    try:
        return handler(args)
    except (
        CliError,
        ConfigError,
        CheckpointError,
        SynthesisError,
        FeatureError,
        corpus_mod.ManifestError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
