"""Synthetic corpora for desk-scale training and pipeline tests.

The toy speech corpus is 20 harmonic-complex utterances: 5 texts, 2
speakers with distinct harmonic profiles, 2 prosodic styles that scale
the pitch contour. Pitch is NOT predictable from text plus speaker alone
(every text appears at two style levels per speaker), so a predictor can
only recover an utterance's pitch level by reading its prosody prompt.
Ground-truth contours are known exactly; mel and energy come from the
real feature extractors.

The aligned scene corpus drives the segmentation and split pipelines:
token streams with stop/minor punctuation at controlled spacing, plus a
manifest spanning several scenes and speakers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AlignedToken, ManifestEntry, Scene
from .features import HOP_SIZE, SAMPLE_RATE, Waveform, extract_energy, mel_spectrogram
from .g2p import Vocabulary, char_g2p

VOWELS = set("aeiou")
VOWEL_FRAMES = 9
CONSONANT_FRAMES = 6

SHORT_TEXTS = ("pato kise", "mipo zatu", "kela nosu")
LONG_TEXTS = ("pato kise mela turo kipa", "zuka mone tipa rosu kela")

# (speaker id, base F0 in Hz, harmonic amplitudes). Speaker A is nearly
# pure; speaker B is harmonically rich, so mel spectra separate timbres.
TOY_SPEAKERS = (
    ("spk_a", 130.0, (1.0, 0.12, 0.05)),
    ("spk_b", 230.0, (0.7, 0.9, 0.35, 0.2)),
)
TOY_STYLES = (("calm", 0.8), ("excited", 1.25))


def char_pitch_factor(ch: str) -> float:
    """Deterministic per-character pitch multiplier in [0.88, 1.12]."""
    return 0.88 + 0.24 * ((ord(ch) * 7) % 11) / 10.0


def char_amp_factor(ch: str) -> float:
    """Deterministic per-character amplitude in [0.6, 1.0]."""
    return 0.6 + 0.4 * ((ord(ch) * 5) % 7) / 6.0


@dataclass
class ToyUtterance:
    utt_id: str
    speaker_id: str
    style: str
    text: str
    units: list[str]
    durations: np.ndarray  # frames per unit
    pitch_hz: np.ndarray  # per frame, exact contour
    voiced: np.ndarray
    energy: np.ndarray  # per frame, from the extractor
    mel: np.ndarray  # (frames, n_mels), from the extractor
    waveform: Waveform

    @property
    def frames(self) -> int:
        return int(self.durations.sum())

    @property
    def is_short(self) -> bool:
        return self.text in SHORT_TEXTS


def _unit_frames(unit: str) -> int:
    return VOWEL_FRAMES if unit in VOWELS else CONSONANT_FRAMES


def _render_waveform(
    f0_frames: np.ndarray, amp_frames: np.ndarray, harmonics: tuple[float, ...]
) -> Waveform:
    total = f0_frames.size
    # floor(N / hop) + 1 == total exactly for this N.
    n_samples = (total - 1) * HOP_SIZE + HOP_SIZE // 2
    f0 = np.repeat(f0_frames, HOP_SIZE)[:n_samples]
    amp = np.repeat(amp_frames, HOP_SIZE)[:n_samples]
    smooth = np.hanning(129)
    amp = np.convolve(amp, smooth / smooth.sum(), mode="same")
    phase = 2.0 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    wave = np.zeros(n_samples)
    for k, gain in enumerate(harmonics, start=1):
        wave += gain * np.sin(k * phase)
    wave *= amp
    wave *= 0.5 / np.max(np.abs(wave))
    return Waveform(wave, SAMPLE_RATE)


def make_toy_corpus() -> list[ToyUtterance]:
    """All 20 utterances; fully deterministic, no RNG involved."""
    utterances = []
    for text in SHORT_TEXTS + LONG_TEXTS:
        units = char_g2p(text)
        durations = np.array([_unit_frames(u) for u in units], dtype=np.int64)
        for speaker_id, base_f0, harmonics in TOY_SPEAKERS:
            for style, style_scale in TOY_STYLES:
                unit_f0 = np.array(
                    [base_f0 * style_scale * char_pitch_factor(u) for u in units]
                )
                unit_amp = np.array([char_amp_factor(u) for u in units])
                f0_frames = np.repeat(unit_f0, durations)
                amp_frames = np.repeat(unit_amp, durations)
                waveform = _render_waveform(f0_frames, amp_frames, harmonics)
                mel = mel_spectrogram(waveform)
                energy = extract_energy(waveform)
                if mel.frames != f0_frames.size:
                    raise AssertionError(
                        f"frame mismatch: mel {mel.frames} vs contour {f0_frames.size}"
                    )
                utterances.append(
                    ToyUtterance(
                        utt_id=f"{text.replace(' ', '-')}_{speaker_id}_{style}",
                        speaker_id=speaker_id,
                        style=style,
                        text=text,
                        units=units,
                        durations=durations.copy(),
                        pitch_hz=f0_frames.astype(np.float32),
                        voiced=np.ones(f0_frames.size, dtype=bool),
                        energy=energy,
                        mel=mel.values,
                        waveform=waveform,
                    )
                )
    return utterances


def toy_vocabulary(utterances: list[ToyUtterance] | None = None) -> Vocabulary:
    if utterances is None:
        units = [char_g2p(t) for t in SHORT_TEXTS + LONG_TEXTS]
    else:
        units = [u.units for u in utterances]
    return Vocabulary.build(units)


_WORDS = (
    "time", "water", "light", "sound", "river", "stone", "garden", "window",
    "morning", "harbor", "cloud", "bridge", "field", "story", "market", "road",
)


def make_aligned_utterance(
    rng: np.random.Generator, total_s: float = 60.0
) -> list[AlignedToken]:
    """Word tokens with commas every few words and periods every few clauses."""
    tokens: list[AlignedToken] = []
    t = 0.0
    words_since_punct = 0
    clauses_since_stop = 0
    next_comma = int(rng.integers(3, 8))
    next_stop = int(rng.integers(2, 5))
    while t < total_s:
        word = _WORDS[int(rng.integers(0, len(_WORDS)))]
        dur = float(rng.uniform(0.25, 0.6))
        tokens.append(AlignedToken.make(word, t, t + dur))
        t += dur + float(rng.uniform(0.02, 0.08))
        words_since_punct += 1
        if words_since_punct >= next_comma:
            words_since_punct = 0
            next_comma = int(rng.integers(3, 8))
            clauses_since_stop += 1
            punct = "." if clauses_since_stop >= next_stop else ","
            if punct == ".":
                clauses_since_stop = 0
                next_stop = int(rng.integers(2, 5))
            tokens.append(AlignedToken.make(punct, t, t + 0.05))
            t += 0.1
    tokens.append(AlignedToken.make(".", t, t + 0.05))
    return tokens


def make_scene_manifest(seed: int = 0) -> list[ManifestEntry]:
    """Manifest across three scenes, four speakers each, for split tests."""
    rng = np.random.default_rng(seed)
    entries = []
    for scene in (Scene.CHAT, Scene.NEWS, Scene.QA):
        for spk in range(4):
            speaker_id = f"{scene.value}_spk{spk}"
            for clip in range(int(rng.integers(3, 6))):
                dur = float(rng.uniform(5.0, 10.0))
                entries.append(
                    ManifestEntry(
                        id=f"{speaker_id}_clip{clip}",
                        audio_path=f"audio/{speaker_id}_clip{clip}.wav",
                        text="placeholder text for split testing",
                        speaker_id=speaker_id,
                        scene=scene,
                        duration_s=round(dur, 3),
                    )
                )
    return entries
