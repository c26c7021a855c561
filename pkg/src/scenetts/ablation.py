"""Architecture-variant comparison on the toy corpus.

Each variant trains from scratch with identical data and derived seeds,
then synthesizes held-in utterances prompted with their own prosody. The
report rows carry the timbre-cosine proxy for speaker similarity plus the
four pitch-statistic differences; formatting is fixed-width so identical
seeds reproduce the report byte for byte.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .config import RunConfig, seed_for
from .evaluation import mel_speaker_similarity, prosody_distance, voiced_values
from .inference import SynthesisRequest, synthesize
from .model import AcousticModel
from .model.config import Variant
from .synthetic import ToyUtterance, make_toy_corpus, toy_vocabulary
from .training import prepare_examples, train_loop

REPORT_COLUMNS = ("asv_proxy", "pitch_mean", "pitch_std", "pitch_skew", "pitch_kurt")


@dataclass(frozen=True)
class AblationRow:
    variant: str
    asv_proxy: float
    pitch_mean: float
    pitch_std: float
    pitch_skew: float
    pitch_kurt: float

    def values(self) -> tuple[float, ...]:
        return (self.asv_proxy, self.pitch_mean, self.pitch_std, self.pitch_skew, self.pitch_kurt)


@dataclass
class AblationReport:
    rows: list[AblationRow]
    seed: int
    steps: int
    eval_utterances: int

    def row(self, variant: str) -> AblationRow:
        for row in self.rows:
            if row.variant == variant:
                return row
        raise KeyError(f"no row for variant {variant!r}")


def _evaluate_variant(
    model: AcousticModel,
    utterances: list[ToyUtterance],
    vocab,
    seed: int,
) -> AblationRow:
    gen_pitch, ref_pitch = [], []
    similarities = []
    for utt in utterances:
        result = synthesize(
            SynthesisRequest(
                text=utt.text,
                seed=seed_for(seed, f"synth:{model.config.variant.value}:{utt.utt_id}"),
                timbre_ref=utt.waveform,
                prosody_ref=utt.waveform,
                prosody_ref_phonemes=utt.units,
                prosody_ref_durations=utt.durations,
            ),
            model,
            vocab,
        )
        n = min(result.pitch_hz.size, utt.pitch_hz.size)
        gen_pitch.append(voiced_values(result.pitch_hz[:n]))
        ref_pitch.append(voiced_values(utt.pitch_hz[:n], utt.voiced[:n]))
        similarities.append(mel_speaker_similarity(result.mel, utt.mel, model))
    distance = prosody_distance(gen_pitch, ref_pitch)
    return AblationRow(
        variant=model.config.variant.value,
        asv_proxy=float(np.mean(similarities)),
        pitch_mean=distance.mean,
        pitch_std=distance.std,
        pitch_skew=distance.skew,
        pitch_kurt=distance.kurt,
    )


def run_ablation(
    variants: Sequence[str],
    config: RunConfig,
    utterances: list[ToyUtterance] | None = None,
    eval_count: int = 6,
) -> AblationReport:
    """Train and evaluate each variant under identical seeds and data."""
    if len(variants) < 2:
        raise ValueError("run_ablation needs at least 2 variants")
    parsed = []
    for name in variants:
        try:
            parsed.append(Variant(name))
        except ValueError as exc:
            raise ValueError(
                f"unknown variant {name!r}; choices: {[v.value for v in Variant]}"
            ) from exc

    if utterances is None:
        utterances = make_toy_corpus()
    vocab = toy_vocabulary(utterances)
    seed = config.training.seed
    examples = prepare_examples(utterances, vocab, config.training.mask_ratio)
    # Short utterances keep the doubled prompt+target layout inside the
    # phoneme/frame ranges seen during training.
    eval_utts = [u for u in utterances if u.is_short][:eval_count]

    rows = []
    for variant in parsed:
        model_config = replace(config.model, variant=variant, vocab_size=len(vocab))
        torch.manual_seed(seed_for(seed, f"init:{variant.value}"))
        model = AcousticModel(model_config)
        train_loop(model, examples, config.training, config.training.steps)
        model.eval()
        rows.append(_evaluate_variant(model, eval_utts, vocab, seed))
    return AblationReport(
        rows=rows, seed=seed, steps=config.training.steps, eval_utterances=len(eval_utts)
    )


def format_report(report: AblationReport) -> str:
    """Fixed-format text table; bitwise stable for identical runs."""
    lines = [
        f"# ablation seed={report.seed} steps={report.steps} eval_utterances={report.eval_utterances}",
        f"{'variant':<16}" + "".join(f"{col:>12}" for col in REPORT_COLUMNS),
    ]
    for row in report.rows:
        lines.append(f"{row.variant:<16}" + "".join(f"{v:>12.6f}" for v in row.values()))
    return "\n".join(lines) + "\n"


def save_report(report: AblationReport, path: str | Path) -> None:
    Path(path).write_text(format_report(report), encoding="utf-8")
