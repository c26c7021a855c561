"""Posterior-span masking of prosody targets and the masked-only loss.

The model never sees ground-truth prosody for the masked span of an
utterance; it must reconstruct it from the visible prefix plus text. In
the default posterior mode the boundary sits at floor(L * (1 - ratio)),
so the masked span is always the last L - floor(L * (1 - ratio)) frames.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch


class MaskMode(str, Enum):
    POSTERIOR = "posterior"
    RANDOM_CONTIGUOUS = "random_contiguous"


@dataclass(frozen=True)
class MaskSpec:
    total_frames: int
    ratio: float
    mode: MaskMode = MaskMode.POSTERIOR

    def __post_init__(self) -> None:
        if self.total_frames < 0:
            raise ValueError(f"total_frames must be >= 0, got {self.total_frames}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        object.__setattr__(self, "mode", MaskMode(self.mode))

    @property
    def boundary_frame(self) -> int:
        """First masked index in posterior mode: floor(L * (1 - ratio))."""
        return int(np.floor(self.total_frames * (1.0 - self.ratio)))

    @property
    def masked_frames(self) -> int:
        return self.total_frames - self.boundary_frame


def build_posterior_mask(total_frames: int, ratio: float) -> np.ndarray:
    """Boolean frame mask, True (hidden) from floor(L*(1-ratio)) onward."""
    spec = MaskSpec(total_frames, ratio)
    mask = np.zeros(spec.total_frames, dtype=bool)
    mask[spec.boundary_frame:] = True
    return mask


def build_mask(spec: MaskSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Mask for a spec; random_contiguous keeps the posterior masked count
    but places the run at a uniform offset (experimentation mode)."""
    if spec.mode is MaskMode.POSTERIOR:
        return build_posterior_mask(spec.total_frames, spec.ratio)
    if rng is None:
        raise ValueError("random_contiguous mode needs an rng")
    span = spec.masked_frames
    start = int(rng.integers(0, spec.total_frames - span + 1)) if span < spec.total_frames else 0
    mask = np.zeros(spec.total_frames, dtype=bool)
    mask[start:start + span] = True
    return mask


def mask_durations(durations: np.ndarray, frame_mask: np.ndarray) -> np.ndarray:
    """Per-phoneme mask: a phoneme is masked iff its frame span intersects
    the masked frame region.

    Zero-length phonemes occupy no frames and are never masked, so every
    masked phoneme contributes at least one masked frame.
    """
    durations = np.asarray(durations, dtype=np.int64)
    frame_mask = np.asarray(frame_mask, dtype=bool)
    if np.any(durations < 0):
        raise ValueError("negative phoneme duration")
    if int(durations.sum()) != frame_mask.size:
        raise ValueError(
            f"durations sum {int(durations.sum())} != mask length {frame_mask.size}"
        )
    ends = np.cumsum(durations)
    starts = ends - durations
    out = np.zeros(durations.size, dtype=bool)
    for i, (s, e) in enumerate(zip(starts, ends)):
        out[i] = e > s and bool(frame_mask[s:e].any())
    return out


def mpp_loss(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over masked positions only.

    Visible positions cannot influence the value or the gradient: masked
    entries are gathered before any arithmetic, so even a non-finite
    prediction at a visible position never propagates. An empty mask
    yields exactly 0.
    """
    if pred.shape != target.shape:
        raise ValueError(f"pred {tuple(pred.shape)} != target {tuple(target.shape)}")
    if mask.dim() != 1 or mask.shape[0] != pred.shape[0]:
        raise ValueError(f"mask must be 1-D over positions, got {tuple(mask.shape)}")
    if mask.dtype != torch.bool:
        raise ValueError(f"mask must be boolean, got {mask.dtype}")
    if not bool(mask.any()):
        return torch.zeros((), dtype=pred.dtype, device=pred.device)
    return (pred[mask] - target[mask]).abs().mean()
