"""Mel inversion by filterbank pseudo-inverse plus Griffin-Lim phase
reconstruction. A convenience output path, not a quality target."""
from __future__ import annotations

import numpy as np

from .features import (
    HOP_SIZE,
    N_FFT,
    SAMPLE_RATE,
    WIN_SIZE,
    FeatureError,
    MelSpectrogram,
    Waveform,
    _frame_signal,
    mel_filterbank,
)

DEFAULT_ITERATIONS = 60


def _window() -> np.ndarray:
    return np.hanning(WIN_SIZE + 1)[:WIN_SIZE]


def _stft_complex(samples: np.ndarray) -> np.ndarray:
    return np.fft.rfft(_frame_signal(samples) * _window(), n=N_FFT, axis=1)


def _istft(spec: np.ndarray, n_samples: int) -> np.ndarray:
    """Windowed overlap-add inverse matching the analysis framing."""
    frames = np.fft.irfft(spec, n=N_FFT, axis=1)[:, :WIN_SIZE]
    window = _window()
    frames = frames * window
    total = (spec.shape[0] - 1) * HOP_SIZE + WIN_SIZE
    buf = np.zeros(total)
    norm = np.zeros(total)
    wsq = window * window
    for t in range(spec.shape[0]):
        start = t * HOP_SIZE
        buf[start:start + WIN_SIZE] += frames[t]
        norm[start:start + WIN_SIZE] += wsq
    buf /= np.maximum(norm, 1e-9)
    pad = WIN_SIZE // 2
    return buf[pad:pad + n_samples]


def griffin_lim(mel: MelSpectrogram, iterations: int = DEFAULT_ITERATIONS) -> Waveform:
    """Invert a log-mel matrix to a 16 kHz waveform.

    The linear magnitude estimate is the Moore-Penrose pseudo-inverse of
    the mel filterbank applied to the de-logged mel, clipped at zero; the
    phase starts at zero and is refined by ``iterations`` analysis and
    resynthesis passes. Output length is (frames - 1) * hop samples.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    values = np.asarray(mel.values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise FeatureError("mel contains non-finite cells")
    basis = mel_filterbank(n_mels=mel.n_mels)
    magnitude = np.clip(np.exp(values) @ np.linalg.pinv(basis).T, 0.0, None)
    n_samples = (mel.frames - 1) * HOP_SIZE
    spec = magnitude.astype(np.complex128)
    wave = _istft(spec, n_samples)
    for _ in range(iterations):
        phase = np.angle(_stft_complex(wave))
        wave = _istft(magnitude * np.exp(1j * phase), n_samples)
    peak = np.max(np.abs(wave))
    if peak > 1.0:
        wave = wave / peak
    return Waveform(wave, SAMPLE_RATE)
