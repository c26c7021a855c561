"""Waveform-to-feature transforms: resampling, mel, pitch, energy, durations.

All extractors share one framing convention: center padding with zeros,
window 1024, hop 256 at 16 kHz, giving floor(N / 256) + 1 frames. Mel,
pitch, and energy tracks for the same waveform are therefore always
frame-synchronous.
"""
from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

SAMPLE_RATE = 16000
N_FFT = 1024
HOP_SIZE = 256
WIN_SIZE = 1024
N_MELS = 80
MEL_FMIN = 0.0
MEL_FMAX = 8000.0
LOG_FLOOR = 1e-5
PITCH_MIN_HZ = 50.0
PITCH_MAX_HZ = 600.0
PERIODICITY_THRESHOLD = 0.3
FRAME_RATE = SAMPLE_RATE / HOP_SIZE

FEATURE_CACHE_VERSION = 1
_CACHE_MAGIC = b"SSFT"


class FeatureError(ValueError):
    """Raised for invalid feature inputs or malformed cache files."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise FeatureError(f"waveform must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise FeatureError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise FeatureError("waveform contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class MelSpectrogram:
    values: np.ndarray  # (frames, n_mels), natural-log magnitude
    hop_s: float
    n_mels: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise FeatureError(f"mel must be (frames, n_mels) with frames >= 1, got {self.values.shape}")
        if self.values.shape[1] != self.n_mels:
            raise FeatureError(f"mel has {self.values.shape[1]} bands, expected {self.n_mels}")
        if not np.all(np.isfinite(self.values)):
            raise FeatureError("mel contains non-finite cells")

    @property
    def frames(self) -> int:
        return self.values.shape[0]


@dataclass
class ProsodyTrack:
    durations: np.ndarray  # per-phoneme frame counts
    pitch_hz: np.ndarray  # per-frame F0, 0 where unvoiced
    voiced: np.ndarray  # per-frame bool
    energy: np.ndarray  # per-frame magnitude norm
    mask: np.ndarray  # per-frame bool, True = hidden from the model

    def __post_init__(self) -> None:
        self.durations = np.asarray(self.durations, dtype=np.int64)
        self.pitch_hz = np.asarray(self.pitch_hz, dtype=np.float32)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        self.energy = np.asarray(self.energy, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=bool)
        frames = self.pitch_hz.size
        if int(self.durations.sum()) != frames:
            raise FeatureError(f"durations sum {int(self.durations.sum())} != {frames} frames")
        for name in ("voiced", "energy", "mask"):
            if getattr(self, name).size != frames:
                raise FeatureError(f"{name} has {getattr(self, name).size} frames, expected {frames}")
        if np.any(self.pitch_hz < 0):
            raise FeatureError("pitch_hz must be >= 0")
        if np.any((self.pitch_hz == 0) == self.voiced):
            raise FeatureError("voiced flags must be true exactly where pitch_hz > 0")


def resample(w: Waveform, target: int) -> Waveform:
    """Band-limited polyphase resampling to ``target`` Hz."""
    if target <= 0:
        raise FeatureError(f"target rate must be > 0, got {target}")
    if w.samples.size == 0:
        raise FeatureError("cannot resample an empty waveform")
    if target == w.sample_rate:
        return Waveform(w.samples, target)
    ratio = Fraction(target, w.sample_rate)
    out = resample_poly(w.samples, ratio.numerator, ratio.denominator)
    return Waveform(out, target)


def _frame_signal(samples: np.ndarray, win: int = WIN_SIZE, hop: int = HOP_SIZE) -> np.ndarray:
    """Zero-pad win//2 on both sides and slide: floor(N/hop)+1 frames of length win."""
    padded = np.pad(samples, (win // 2, win // 2))
    windows = np.lib.stride_tricks.sliding_window_view(padded, win)
    return windows[::hop]


def _stft_magnitude(samples: np.ndarray) -> np.ndarray:
    frames = _frame_signal(samples) * np.hanning(WIN_SIZE + 1)[:WIN_SIZE]
    return np.abs(np.fft.rfft(frames, n=N_FFT, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE,
                   fmin: float = MEL_FMIN, fmax: float = MEL_FMAX) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1)."""
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    weights = np.zeros((n_mels, fft_freqs.size))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (fft_freqs - left) / max(center - left, 1e-12)
        falling = (right - fft_freqs) / max(right - center, 1e-12)
        weights[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return weights


_MEL_BASIS: np.ndarray | None = None


def _mel_basis() -> np.ndarray:
    global _MEL_BASIS
    if _MEL_BASIS is None:
        _MEL_BASIS = mel_filterbank()
    return _MEL_BASIS


def mel_spectrogram(w: Waveform) -> MelSpectrogram:
    """80-band natural-log magnitude mel with floor clamp at 1e-5."""
    if w.sample_rate != SAMPLE_RATE:
        raise FeatureError(
            f"mel_spectrogram expects {SAMPLE_RATE} Hz input, got {w.sample_rate}; resample first"
        )
    mag = _stft_magnitude(w.samples)
    mel = mag @ _mel_basis().T
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)), HOP_SIZE / SAMPLE_RATE, N_MELS)


def extract_energy(w: Waveform) -> np.ndarray:
    """Per-frame L2 norm of the linear magnitude spectrum."""
    if w.sample_rate != SAMPLE_RATE:
        raise FeatureError(f"extract_energy expects {SAMPLE_RATE} Hz input, got {w.sample_rate}")
    mag = _stft_magnitude(w.samples)
    return np.linalg.norm(mag, axis=1).astype(np.float32)


def extract_pitch(w: Waveform,
                  fmin: float = PITCH_MIN_HZ,
                  fmax: float = PITCH_MAX_HZ,
                  threshold: float = PERIODICITY_THRESHOLD) -> tuple[np.ndarray, np.ndarray]:
    """Frame-synchronous autocorrelation F0 with a periodicity gate.

    Returns (pitch_hz, voiced). Frames whose peak normalized autocorrelation
    in the 50-600 Hz lag range falls below ``threshold`` are unvoiced with
    pitch 0; digital silence is all-unvoiced.
    """
    if w.sample_rate != SAMPLE_RATE:
        raise FeatureError(f"extract_pitch expects {SAMPLE_RATE} Hz input, got {w.sample_rate}")
    frames = _frame_signal(w.samples).astype(np.float64)
    frames = frames - frames.mean(axis=1, keepdims=True)
    n = frames.shape[1]
    lag_min = int(np.floor(SAMPLE_RATE / fmax))
    lag_max = int(np.ceil(SAMPLE_RATE / fmin))
    lag_max = min(lag_max, n - 2)

    # Linear autocorrelation for all frames at once via zero-padded FFT.
    fft_len = 1
    while fft_len < 2 * n:
        fft_len *= 2
    spec = np.fft.rfft(frames, n=fft_len, axis=1)
    acf = np.fft.irfft(spec.real ** 2 + spec.imag ** 2, n=fft_len, axis=1)[:, :n]

    pitch = np.zeros(frames.shape[0], dtype=np.float32)
    voiced = np.zeros(frames.shape[0], dtype=bool)
    unbias = n / (n - np.arange(n, dtype=np.float64))
    for i, r in enumerate(acf):
        r0 = r[0]
        if r0 / n < 1e-10:  # silence gate on mean square
            continue
        norm = r * unbias / r0
        search = norm[lag_min:lag_max + 1]
        peak = float(search.max())
        if peak < threshold:
            continue
        # Local maxima; keep the smallest lag near the global peak so
        # period multiples do not halve the estimate.
        local = np.flatnonzero((search[1:-1] >= search[:-2]) & (search[1:-1] >= search[2:])) + 1
        local = local[search[local] >= max(threshold, 0.9 * peak)]
        best = int(local[0]) + lag_min if local.size else int(np.argmax(search)) + lag_min
        # Parabolic refinement around the peak lag.
        if 1 <= best < n - 1:
            y0, y1, y2 = norm[best - 1], norm[best], norm[best + 1]
            denom = y0 - 2.0 * y1 + y2
            offset = 0.5 * (y0 - y2) / denom if abs(denom) > 1e-12 else 0.0
            offset = float(np.clip(offset, -0.5, 0.5))
        else:
            offset = 0.0
        f0 = SAMPLE_RATE / (best + offset)
        if fmin <= f0 <= fmax:
            pitch[i] = f0
            voiced[i] = True
    return pitch, voiced


def durations_from_alignment(
    phonemes: Sequence[str],
    alignment: Sequence[tuple[float, float]],
    total_frames: int,
) -> np.ndarray:
    """Per-phoneme frame counts from (start_s, end_s) spans.

    Spans are rounded to frames independently; the rounding residual is
    assigned to the last phoneme so the counts always sum to
    ``total_frames``.
    """
    if len(phonemes) != len(alignment):
        raise FeatureError(
            f"{len(phonemes)} phonemes but {len(alignment)} aligned spans"
        )
    if not alignment:
        raise FeatureError("empty alignment")
    spans = np.array([end - start for start, end in alignment], dtype=np.float64)
    if np.any(spans < 0):
        raise FeatureError("alignment span with negative length")
    durations = np.rint(spans * FRAME_RATE).astype(np.int64)
    durations[-1] += total_frames - int(durations.sum())
    if durations[-1] < 0:
        raise FeatureError(
            f"alignment longer than {total_frames} frames after rounding"
        )
    return durations


def interpolate_unvoiced(values: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    """Fill unvoiced gaps by linear interpolation between voiced anchors.

    Edges hold the nearest voiced value; an all-unvoiced track stays zero.
    """
    values = np.asarray(values, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    if values.size != voiced.size:
        raise FeatureError("values/voiced length mismatch")
    if not voiced.any():
        return np.zeros_like(values)
    idx = np.flatnonzero(voiced)
    return np.interp(np.arange(values.size), idx, values[idx])


def read_wav(path: str | Path) -> Waveform:
    """Read a mono PCM wave file into float samples in [-1, 1]."""
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise FeatureError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise FeatureError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, int(rate))


def write_wav(path: str | Path, w: Waveform) -> None:
    clipped = np.clip(w.samples, -1.0, 1.0)
    wavfile.write(path, w.sample_rate, (clipped * 32767.0).astype(np.int16))


def save_feature_file(path: str | Path, arrays: Mapping[str, np.ndarray], meta: dict) -> None:
    """Versioned binary container: magic, version byte, JSON header, then
    named arrays in npy format. Byte-deterministic for identical inputs
    (no archive timestamps), so equal features give equal files."""
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(_CACHE_MAGIC)
        handle.write(bytes([FEATURE_CACHE_VERSION]))
        handle.write(struct.pack("<I", len(header)))
        handle.write(header)
        handle.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            encoded = name.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            np.lib.format.write_array(handle, np.asarray(arrays[name]), allow_pickle=False)


def load_feature_file(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != _CACHE_MAGIC:
            raise FeatureError(f"{path}: not a feature file (magic {magic!r})")
        version = handle.read(1)[0]
        if version != FEATURE_CACHE_VERSION:
            raise FeatureError(
                f"{path}: version {version} != current {FEATURE_CACHE_VERSION}"
            )
        (header_len,) = struct.unpack("<I", handle.read(4))
        meta = json.loads(handle.read(header_len).decode("utf-8"))
        (count,) = struct.unpack("<I", handle.read(4))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", handle.read(2))
            name = handle.read(name_len).decode("utf-8")
            arrays[name] = np.lib.format.read_array(handle, allow_pickle=False)
    return arrays, meta


class FeatureCache:
    """Per-utterance feature blobs keyed by manifest id.

    A version byte is embedded in every file; blobs written by a different
    version read as cache misses.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, utt_id: str) -> Path:
        if re.fullmatch(r"[A-Za-z0-9._-]+", utt_id):
            name = utt_id
        else:
            name = hashlib.sha1(utt_id.encode("utf-8")).hexdigest()
        return self.root / f"{name}.feat"

    def get(self, utt_id: str) -> tuple[dict[str, np.ndarray], dict] | None:
        path = self.path_for(utt_id)
        if not path.exists():
            return None
        try:
            return load_feature_file(path)
        except FeatureError:
            return None  # stale version or corrupt blob: treat as a miss

    def put(self, utt_id: str, arrays: Mapping[str, np.ndarray], meta: dict) -> Path:
        path = self.path_for(utt_id)
        save_feature_file(path, arrays, meta)
        return path
