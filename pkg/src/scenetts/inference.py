"""Prompt assembly and the synthesis cascade.

The reference utterance's prosody becomes the visible prefix of every
prompt: values first, zeros after, mask false then true; exactly the
structure train-time posterior masking produces when the boundary falls
at the reference length. The full prompt+target sequence is synthesized
and the prompt region cropped from the returned mel.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .features import (
    SAMPLE_RATE,
    MelSpectrogram,
    Waveform,
    extract_energy,
    extract_pitch,
    mel_spectrogram,
    read_wav,
    resample,
)
from .g2p import Vocabulary, g2p
from .model import AcousticModel, length_regulate
from .model.config import Variant
from .model.timbre import MIN_REFERENCE_FRAMES


class SynthesisError(RuntimeError):
    pass


@dataclass
class SynthesisRequest:
    text: str
    seed: int
    timbre_ref: Waveform | str | Path
    prosody_ref: Waveform | str | Path
    phonemes: list[str] | None = None
    prosody_ref_text: str | None = None
    prosody_ref_phonemes: list[str] | None = None
    prosody_ref_durations: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise SynthesisError("text must be non-empty")


@dataclass
class SynthesisResult:
    mel: np.ndarray  # target region only, (frames, n_mels)
    durations: np.ndarray  # per target phoneme
    pitch_hz: np.ndarray  # per target frame
    energy: np.ndarray  # per target frame
    prompt_frames: int
    prompt_phonemes: int


def build_prompt(ref_values: np.ndarray, target_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference values followed by ``target_len`` zeros, with a mask that is
    false over the reference and true over the target."""
    if target_len < 0:
        raise ValueError(f"target_len must be >= 0, got {target_len}")
    ref_values = np.asarray(ref_values, dtype=np.float32)
    if ref_values.ndim != 1:
        raise ValueError(f"ref_values must be 1-D, got shape {ref_values.shape}")
    values = np.concatenate([ref_values, np.zeros(target_len, dtype=np.float32)])
    mask = np.concatenate(
        [np.zeros(ref_values.size, dtype=bool), np.ones(target_len, dtype=bool)]
    )
    return values, mask


def _resolve_audio(ref: Waveform | str | Path, label: str) -> Waveform:
    w = ref if isinstance(ref, Waveform) else read_wav(ref)
    if w.sample_rate != SAMPLE_RATE:
        w = resample(w, SAMPLE_RATE)
    if w.samples.size // 256 + 1 < MIN_REFERENCE_FRAMES:
        raise SynthesisError(
            f"{label} audio too short: need at least {MIN_REFERENCE_FRAMES} frames"
        )
    return w


def _encode_units(units: list[str], vocab: Vocabulary, label: str) -> torch.Tensor:
    index = vocab.to_dict()
    ids = []
    for u in units:
        if u not in index:
            raise SynthesisError(f"{label}: no vocabulary entry for character {u!r}")
        ids.append(index[u])
    return torch.tensor(ids, dtype=torch.long)


def synthesize(
    req: SynthesisRequest, model: AcousticModel, vocab: Vocabulary
) -> SynthesisResult:
    """Duration, pitch, and energy predictors fill the masked target region
    behind the reference prompt; the diffusion decoder renders mel frames."""
    model.eval()
    variant = model.config.variant

    target_units = req.phonemes if req.phonemes is not None else g2p(req.text)
    if not target_units:
        raise SynthesisError(f"text {req.text!r} produced no phoneme units")

    prosody_wave = _resolve_audio(req.prosody_ref, "prosody reference")
    ref_mel = mel_spectrogram(prosody_wave)
    ref_energy = extract_energy(prosody_wave)
    ref_pitch, _ = extract_pitch(prosody_wave)
    ref_frames = ref_mel.frames

    ref_units = req.prosody_ref_phonemes
    if ref_units is None and req.prosody_ref_text is not None:
        ref_units = g2p(req.prosody_ref_text)
    duration_prompt_visible = True
    if ref_units:
        if req.prosody_ref_durations is not None:
            ref_durations = np.asarray(req.prosody_ref_durations, dtype=np.int64)
            if ref_durations.size != len(ref_units) or int(ref_durations.sum()) != ref_frames:
                raise SynthesisError(
                    f"reference durations do not cover {len(ref_units)} phonemes "
                    f"and {ref_frames} frames"
                )
        else:
            # No alignment for the reference: split its frames uniformly.
            base = ref_frames // len(ref_units)
            ref_durations = np.full(len(ref_units), base, dtype=np.int64)
            ref_durations[-1] += ref_frames - int(ref_durations.sum())
    else:
        # Reference text unknown: one placeholder unit spans the whole
        # reference so pitch/energy prompting still works, but the duration
        # prompt carries no observations.
        ref_units = ["<unk>"]
        ref_durations = np.array([ref_frames], dtype=np.int64)
        duration_prompt_visible = False

    full_ids = torch.cat(
        [
            _encode_units(ref_units, vocab, "prosody reference"),
            _encode_units(target_units, vocab, "text"),
        ]
    )

    with torch.no_grad():
        h_ph = model.encode_phonemes(full_ids)

        # Duration prompt at phoneme resolution.
        d_values, d_mask = build_prompt(np.log1p(ref_durations), len(target_units))
        if not duration_prompt_visible:
            d_mask[:] = True
            d_values[:] = 0.0
        d_pred = model.predict_prosody(
            "duration",
            h_ph,
            torch.tensor(d_values),
            torch.tensor(d_mask),
            prompt_mel=torch.tensor(ref_mel.values) if variant is Variant.NS2_PROMPTING else None,
        )
        target_durations = (
            torch.expm1(d_pred[len(ref_units):]).round().clamp(min=0).to(torch.long).numpy()
        )
        if target_durations.sum() == 0:
            target_durations[:] = 1  # floor: never synthesize an empty target
        durations_full = torch.tensor(
            np.concatenate([ref_durations, target_durations]), dtype=torch.long
        )
        h_frame = length_regulate(h_ph, durations_full)
        target_frames = int(target_durations.sum())
        total_frames = ref_frames + target_frames

        tracks: dict[str, np.ndarray] = {}
        for kind, ref_track in (("pitch", ref_pitch), ("energy", ref_energy)):
            values, mask = build_prompt(np.log1p(ref_track), target_frames)
            pred = model.predict_prosody(
                kind,
                h_frame,
                torch.tensor(values),
                torch.tensor(mask),
                prompt_mel=torch.tensor(ref_mel.values) if variant is Variant.NS2_PROMPTING else None,
            )
            decoded = torch.expm1(pred[ref_frames:]).clamp(min=0).numpy()
            tracks[kind] = np.concatenate([ref_track, decoded]).astype(np.float32)

        timbre_wave = _resolve_audio(req.timbre_ref, "timbre reference")
        speaker = model.timbre_encode(torch.tensor(mel_spectrogram(timbre_wave).values))

        cond = model.decoder_condition(
            h_frame,
            torch.tensor(tracks["pitch"]),
            torch.tensor(tracks["energy"]),
            speaker,
        )
        generator = torch.Generator().manual_seed(req.seed)
        mel_full = model.diffusion_sample(cond, total_frames, generator)

    return SynthesisResult(
        mel=mel_full[ref_frames:].numpy().astype(np.float32),
        durations=target_durations,
        pitch_hz=tracks["pitch"][ref_frames:],
        energy=tracks["energy"][ref_frames:],
        prompt_frames=ref_frames,
        prompt_phonemes=len(ref_units),
    )


def result_mel(result: SynthesisResult) -> MelSpectrogram:
    return MelSpectrogram(result.mel, hop_s=256 / SAMPLE_RATE, n_mels=result.mel.shape[1])
