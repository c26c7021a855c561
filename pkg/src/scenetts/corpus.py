"""Corpus construction: segmentation, transcript filtering, statistics, splits.

The pipeline operates on utterance manifests (one JSON record per line) and
per-utterance alignment files (one token per line with start/end seconds).
All operations are pure functions over in-memory values.
"""
from __future__ import annotations

import json
import random
import unicodedata
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

# Sentence-final punctuation ("traditional stopping indicators").
STOP_PUNCT = set("。．.!！?？;；")

DEFAULT_SEGMENT_WINDOW = (5.0, 10.0)
DEFAULT_SIMILARITY_THRESHOLD = 0.8


class ManifestError(ValueError):
    """Raised for malformed manifest or alignment files."""


class Scene(str, Enum):
    CHAT = "Chat"
    NEWS = "News"
    QA = "QA"
    STORYTELLING = "Storytelling"
    OTHER = "Other"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"
    UNASSIGNED = "unassigned"


def is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_text(text: str, casefold: bool = True) -> str:
    """Strip punctuation and whitespace; optionally casefold the rest."""
    kept = "".join(ch for ch in text if not is_punct(ch) and not ch.isspace())
    return kept.casefold() if casefold else kept


@dataclass
class ManifestEntry:
    id: str
    audio_path: str
    text: str
    speaker_id: str
    scene: Scene
    duration_s: float
    phonemes: list[str] | None = None
    split: Split = Split.UNASSIGNED
    alignment_path: str | None = None
    transcript: str | None = None

    def __post_init__(self) -> None:
        self.scene = Scene(self.scene)
        self.split = Split(self.split)
        if not self.duration_s > 0:
            raise ManifestError(f"entry {self.id!r}: duration_s must be > 0, got {self.duration_s}")


@dataclass(frozen=True)
class AlignedToken:
    token: str
    start_s: float
    end_s: float
    is_stop_punct: bool
    is_minor_punct: bool

    def __post_init__(self) -> None:
        if self.end_s < self.start_s:
            raise ManifestError(f"token {self.token!r}: end {self.end_s} before start {self.start_s}")

    @classmethod
    def make(cls, token: str, start_s: float, end_s: float) -> "AlignedToken":
        """Build a token, classifying punctuation from the token text."""
        stop = bool(token) and all(ch in STOP_PUNCT for ch in token)
        minor = not stop and bool(token) and all(is_punct(ch) for ch in token)
        return cls(token, start_s, end_s, stop, minor)

    @property
    def is_cut_point(self) -> bool:
        return self.is_stop_punct or self.is_minor_punct


@dataclass
class SceneStats:
    scene: Scene
    hours: float
    clip_count: int
    speed_cpm: float
    pitch_mean_hz: float | None = None
    pitch_var: float | None = None
    pitch_skew: float | None = None


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float
    text: str
    token_start: int  # index of first token, inclusive
    token_end: int  # index of last token, inclusive
    flags: tuple[str, ...] = ()

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def _window_distance(duration: float, window: tuple[float, float]) -> float:
    lo, hi = window
    return max(lo - duration, duration - hi, 0.0)


def segment_utterance(
    tokens: Sequence[AlignedToken],
    window: tuple[float, float] = DEFAULT_SEGMENT_WINDOW,
) -> list[Segment]:
    """Greedily split an aligned token stream into clip-sized segments.

    Left-to-right scan. For each region the cut is, in priority order, the
    latest stop-punctuation token whose segment lands inside ``window``, the
    latest minor-punctuation token inside the window, or the punctuation
    token (of either kind) whose segment duration is nearest to the window.
    A region with no punctuation at all becomes one segment flagged
    ``no-cut-point``. Segments outside the window are flagged
    ``below-window`` / ``above-window``, never dropped.
    """
    if not tokens:
        raise ValueError("segment_utterance: empty token list")
    lo, hi = window
    if not (0 < lo <= hi):
        raise ValueError(f"segment_utterance: bad window {window}")
    for a, b in zip(tokens, tokens[1:]):
        if b.start_s < a.end_s - 1e-9:
            raise ValueError(
                f"segment_utterance: tokens overlap or out of order at {a.token!r} -> {b.token!r}"
            )

    segments: list[Segment] = []
    n = len(tokens)
    i = 0
    seg_start = tokens[0].start_s
    while i < n:
        cuts = [j for j in range(i, n) if tokens[j].is_cut_point]
        cut_j: int | None = None
        if cuts:
            in_window_stop = [j for j in cuts if tokens[j].is_stop_punct
                              and lo <= tokens[j].end_s - seg_start <= hi]
            in_window_minor = [j for j in cuts if tokens[j].is_minor_punct
                               and lo <= tokens[j].end_s - seg_start <= hi]
            if in_window_stop:
                cut_j = in_window_stop[-1]
            elif in_window_minor:
                cut_j = in_window_minor[-1]
            else:
                # Nearest-to-window cut; ties resolved to the latest token.
                cut_j = min(cuts, key=lambda j: (_window_distance(tokens[j].end_s - seg_start, window), -j))
        j = cut_j if cut_j is not None else n - 1
        end = tokens[j].end_s
        duration = end - seg_start
        flags: list[str] = []
        if not cuts:
            flags.append("no-cut-point")
        if duration < lo:
            flags.append("below-window")
        elif duration > hi:
            flags.append("above-window")
        segments.append(Segment(
            start_s=seg_start,
            end_s=end,
            text="".join(t.token for t in tokens[i:j + 1]),
            token_start=i,
            token_end=j,
            flags=tuple(flags),
        ))
        i = j + 1
        seg_start = end
    return segments


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance over Unicode characters."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a):
        current = [i + 1]
        for j, cb in enumerate(b):
            current.append(min(
                previous[j + 1] + 1,
                current[j] + 1,
                previous[j] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def text_similarity(a: str, b: str) -> float:
    """Normalized edit similarity in [0, 1] after punctuation/case stripping."""
    na, nb = normalize_text(a), normalize_text(b)
    if not na and not nb:
        return 1.0
    return 1.0 - edit_distance(na, nb) / max(len(na), len(nb))


@dataclass(frozen=True)
class Rejection:
    id: str
    similarity: float | None
    reason: str


@dataclass(frozen=True)
class FilterResult:
    kept: list[ManifestEntry]
    rejected: list[Rejection]


def asr_filter(
    entries: Sequence[ManifestEntry],
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> FilterResult:
    """Keep entries whose text/transcript similarity is >= threshold.

    The boundary is inclusive: a similarity of exactly ``threshold``
    survives. Entries without a transcript are rejected outright.
    """
    kept: list[ManifestEntry] = []
    rejected: list[Rejection] = []
    for entry in entries:
        if entry.transcript is None:
            rejected.append(Rejection(entry.id, None, "no-transcript"))
            continue
        sim = text_similarity(entry.text, entry.transcript)
        if sim >= threshold:
            kept.append(entry)
        else:
            rejected.append(Rejection(entry.id, sim, "below-threshold"))
    return FilterResult(kept, rejected)


def _pooled_speaker_moments(values_by_speaker: Mapping[str, list[np.ndarray]]):
    """Per-speaker voiced-pitch moments, then averaged across speakers."""
    means, variances, skews = [], [], []
    for speaker in sorted(values_by_speaker):
        pooled = np.concatenate(values_by_speaker[speaker])
        if pooled.size == 0:
            continue
        m = float(np.mean(pooled))
        m2 = float(np.mean((pooled - m) ** 2))
        means.append(m)
        variances.append(m2)
        skews.append(float(np.mean((pooled - m) ** 3)) / m2 ** 1.5 if m2 > 0 else 0.0)
    if not means:
        return None, None, None
    return (float(np.mean(means)), float(np.mean(variances)), float(np.mean(skews)))


def scene_statistics(
    manifest: Sequence[ManifestEntry],
    pitch_source: Mapping[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> list[SceneStats]:
    """Per-scene hours, clip counts, speaking speed, and pitch statistics.

    ``pitch_source`` maps entry id -> (pitch_hz, voiced) frame tracks; pitch
    statistics use voiced frames only, pooled per speaker and then averaged
    across speakers. Speed counts characters after punctuation stripping,
    per minute of audio.
    """
    by_scene: dict[Scene, list[ManifestEntry]] = {}
    for entry in manifest:
        by_scene.setdefault(entry.scene, []).append(entry)
    stats: list[SceneStats] = []
    for scene in Scene:
        if scene not in by_scene:
            continue
        entries = by_scene[scene]
        if not entries:
            warnings.warn(f"scene {scene.value}: no entries, emitting zero row")
            stats.append(SceneStats(scene, 0.0, 0, 0.0))
            continue
        total_s = sum(e.duration_s for e in entries)
        chars = sum(len(normalize_text(e.text, casefold=False)) for e in entries)
        speed = chars / (total_s / 60.0) if total_s > 0 else 0.0
        pitch_mean = pitch_var = pitch_skew = None
        if pitch_source is not None:
            voiced_by_speaker: dict[str, list[np.ndarray]] = {}
            for e in entries:
                track = pitch_source.get(e.id)
                if track is None:
                    continue
                pitch_hz, voiced = track
                voiced_by_speaker.setdefault(e.speaker_id, []).append(
                    np.asarray(pitch_hz, dtype=np.float64)[np.asarray(voiced, dtype=bool)]
                )
            if voiced_by_speaker:
                pitch_mean, pitch_var, pitch_skew = _pooled_speaker_moments(voiced_by_speaker)
        stats.append(SceneStats(
            scene=scene,
            hours=total_s / 3600.0,
            clip_count=len(entries),
            speed_cpm=speed,
            pitch_mean_hz=pitch_mean,
            pitch_var=pitch_var,
            pitch_skew=pitch_skew,
        ))
    return stats


def split_train_test(manifest: Sequence[ManifestEntry], seed: int) -> list[ManifestEntry]:
    """Assign one held-out test speaker per scene, deterministically.

    All recordings of the chosen (speaker, scene) pair go to test; everything
    else goes to train. A speaker already held out for an earlier scene is
    skipped in later scenes whenever an alternative exists.
    """
    rng = random.Random(seed)
    scenes = sorted({e.scene for e in manifest}, key=lambda s: s.value)
    chosen: dict[Scene, str] = {}
    used: set[str] = set()
    for scene in scenes:
        speakers = sorted({e.speaker_id for e in manifest if e.scene == scene})
        if len(speakers) == 1:
            warnings.warn(f"scene {scene.value} has a single speaker; it has no training speakers")
        fresh = [s for s in speakers if s not in used]
        pick = rng.choice(fresh if fresh else speakers)
        chosen[scene] = pick
        used.add(pick)
    out = []
    for entry in manifest:
        test = chosen.get(entry.scene) == entry.speaker_id
        out.append(replace(entry, split=Split.TEST if test else Split.TRAIN))
    return out


# Manifest file keys, in write order. Optional fields are omitted when None.
_REQUIRED_KEYS = ("id", "audio", "text", "speaker", "scene", "duration")
_OPTIONAL_KEYS = ("phonemes", "split", "alignment", "transcript")


def _entry_to_record(entry: ManifestEntry) -> dict:
    record = {
        "id": entry.id,
        "audio": entry.audio_path,
        "text": entry.text,
        "speaker": entry.speaker_id,
        "scene": entry.scene.value,
        "duration": entry.duration_s,
    }
    if entry.phonemes is not None:
        record["phonemes"] = list(entry.phonemes)
    if entry.split is not Split.UNASSIGNED:
        record["split"] = entry.split.value
    if entry.alignment_path is not None:
        record["alignment"] = entry.alignment_path
    if entry.transcript is not None:
        record["transcript"] = entry.transcript
    return record


def _entry_from_record(record: dict) -> ManifestEntry:
    missing = [k for k in _REQUIRED_KEYS if k not in record]
    if missing:
        raise ManifestError(f"missing fields {missing}")
    unknown = set(record) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS)
    if unknown:
        raise ManifestError(f"unknown fields {sorted(unknown)}")
    return ManifestEntry(
        id=record["id"],
        audio_path=record["audio"],
        text=record["text"],
        speaker_id=record["speaker"],
        scene=Scene(record["scene"]),
        duration_s=float(record["duration"]),
        phonemes=record.get("phonemes"),
        split=Split(record.get("split", "unassigned")),
        alignment_path=record.get("alignment"),
        transcript=record.get("transcript"),
    )


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Load a line-oriented manifest; raises ManifestError naming the bad line."""
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                entry = _entry_from_record(record)
            except (json.JSONDecodeError, ManifestError, ValueError, TypeError) as exc:
                raise ManifestError(f"{path}: line {lineno}: {exc}") from exc
            if entry.id in seen:
                raise ManifestError(f"{path}: line {lineno}: duplicate id {entry.id!r}")
            seen.add(entry.id)
            entries.append(entry)
    return entries


def save_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(_entry_to_record(entry), ensure_ascii=False) + "\n")


def load_alignment(path: str | Path) -> list[AlignedToken]:
    """Load one-token-per-line alignment: token<TAB>start_s<TAB>end_s."""
    tokens: list[AlignedToken] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ManifestError(f"{path}: line {lineno}: expected 3 tab-separated fields")
            try:
                tokens.append(AlignedToken.make(parts[0], float(parts[1]), float(parts[2])))
            except (ValueError, ManifestError) as exc:
                raise ManifestError(f"{path}: line {lineno}: {exc}") from exc
    return tokens


def save_alignment(tokens: Iterable[AlignedToken], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for t in tokens:
            handle.write(f"{t.token}\t{t.start_s:.6f}\t{t.end_s:.6f}\n")
