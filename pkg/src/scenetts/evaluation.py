"""Objective prosody and speaker metrics.

Statistics are population moments: std = sqrt(m2), skew = m3 / m2^1.5,
kurt = m4 / m2^2 (non-excess; a normal distribution scores 3). A constant
track is degenerate: std 0, skew and kurt reported as 0 with the flag
set. Pitch statistics are computed over voiced frames, in Hz.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .features import SAMPLE_RATE, Waveform, mel_spectrogram, resample
from .model import AcousticModel


@dataclass(frozen=True)
class StatVector:
    mean: float
    std: float
    skew: float
    kurt: float
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.mean, self.std, self.skew, self.kurt])


def track_statistics(values: Sequence[float] | np.ndarray) -> StatVector:
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"track_statistics needs a non-empty 1-D sequence, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("track contains non-finite values")
    mean = float(x.mean())
    centered = x - mean
    m2 = float(np.mean(centered**2))
    # all-equal tracks, and tracks whose spread underflows to zero variance
    if m2 == 0.0:
        return StatVector(mean=mean, std=0.0, skew=0.0, kurt=0.0, degenerate=True)
    # Standardize before the higher moments: m2**1.5 underflows for tiny
    # spreads where sqrt(m2) is still representable.
    std = float(np.sqrt(m2))
    z = centered / std
    return StatVector(
        mean=mean, std=std, skew=float(np.mean(z**3)), kurt=float(np.mean(z**4))
    )


def voiced_values(pitch_hz: np.ndarray, voiced: np.ndarray | None = None) -> np.ndarray:
    """Voiced-frame pitch values; default voicing is pitch > 0."""
    pitch_hz = np.asarray(pitch_hz, dtype=np.float64)
    mask = pitch_hz > 0 if voiced is None else np.asarray(voiced, dtype=bool)
    return pitch_hz[mask]


def prosody_distance(
    gen: Sequence[np.ndarray], ref: Sequence[np.ndarray]
) -> StatVector:
    """Componentwise |stats(gen_i) - stats(ref_i)| averaged over pairs.

    Call separately for pitch tracks (voiced values) and energy tracks.
    """
    if len(gen) != len(ref):
        raise ValueError(f"{len(gen)} generated tracks vs {len(ref)} references")
    if not gen:
        raise ValueError("no track pairs")
    diffs = []
    any_degenerate = False
    for g, r in zip(gen, ref):
        sg, sr = track_statistics(g), track_statistics(r)
        any_degenerate = any_degenerate or sg.degenerate or sr.degenerate
        diffs.append(np.abs(sg.as_array() - sr.as_array()))
    mean_diff = np.mean(diffs, axis=0)
    return StatVector(
        mean=float(mean_diff[0]),
        std=float(mean_diff[1]),
        skew=float(mean_diff[2]),
        kurt=float(mean_diff[3]),
        degenerate=any_degenerate,
    )


def embedding_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate zero embedding")
    return float(np.dot(a, b) / (na * nb))


def speaker_similarity(a: Waveform, b: Waveform, model: AcousticModel) -> float:
    """Cosine between the model's own timbre embeddings of two waveforms."""
    model.eval()
    embeddings = []
    for w in (a, b):
        if w.sample_rate != SAMPLE_RATE:
            w = resample(w, SAMPLE_RATE)
        mel = torch.tensor(mel_spectrogram(w).values)
        with torch.no_grad():
            embeddings.append(model.timbre_encode(mel).numpy())
    return embedding_similarity(embeddings[0], embeddings[1])


def mel_speaker_similarity(
    mel_a: np.ndarray, mel_b: np.ndarray, model: AcousticModel
) -> float:
    """Timbre cosine straight from mel matrices (for generated mels)."""
    model.eval()
    with torch.no_grad():
        ea = model.timbre_encode(torch.tensor(np.asarray(mel_a, dtype=np.float32)))
        eb = model.timbre_encode(torch.tensor(np.asarray(mel_b, dtype=np.float32)))
    return embedding_similarity(ea.numpy(), eb.numpy())
