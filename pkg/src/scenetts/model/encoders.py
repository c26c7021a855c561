"""Phoneme-side encoders and the length regulator."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
from torch import nn

from .config import ModelConfig
from .layers import FFTBlock, PositionalEncoding


class Resolution(str, Enum):
    PHONEME = "phoneme"
    FRAME = "frame"


@dataclass
class HiddenSequence:
    values: torch.Tensor  # (length, hidden_dim)
    resolution: Resolution

    def __post_init__(self) -> None:
        self.resolution = Resolution(self.resolution)
        if self.values.dim() != 2 or self.values.shape[0] < 1:
            raise ValueError(
                f"hidden sequence must be (length >= 1, dim), got {tuple(self.values.shape)}"
            )

    def __len__(self) -> int:
        return self.values.shape[0]


class _FFTStack(nn.Module):
    def __init__(self, config: ModelConfig, n_layers: int):
        super().__init__()
        self.positions = PositionalEncoding(config.hidden_dim)
        self.blocks = nn.ModuleList(
            FFTBlock(config.hidden_dim, config.encoder_heads, config.encoder_kernel, config.dropout)
            for _ in range(n_layers)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.positions(x)
        for block in self.blocks:
            x = block(x)
        return x


class LinguisticEncoder(nn.Module):
    """Phoneme ids to phoneme-resolution hidden states."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.vocab_size = config.vocab_size
        self.embed = nn.Embedding(config.vocab_size, config.hidden_dim, padding_idx=0)
        self.stack = _FFTStack(config, config.encoder_layers)

    def forward(self, phoneme_ids: torch.Tensor) -> HiddenSequence:
        if phoneme_ids.dim() != 1 or phoneme_ids.numel() == 0:
            raise ValueError(f"phoneme_ids must be a non-empty 1-D tensor, got {tuple(phoneme_ids.shape)}")
        if bool((phoneme_ids < 0).any()) or bool((phoneme_ids >= self.vocab_size).any()):
            bad = int(phoneme_ids[(phoneme_ids < 0) | (phoneme_ids >= self.vocab_size)][0])
            raise ValueError(f"phoneme id {bad} outside vocabulary of size {self.vocab_size}")
        return HiddenSequence(self.stack(self.embed(phoneme_ids)), Resolution.PHONEME)


class StyleAdaptiveEncoder(nn.Module):
    """Second phoneme-resolution stack; refines linguistic states."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.stack = _FFTStack(config, config.encoder_layers)

    def forward(self, h: HiddenSequence) -> HiddenSequence:
        if h.resolution is not Resolution.PHONEME:
            raise ValueError(f"expected phoneme resolution, got {h.resolution.value}")
        return HiddenSequence(self.stack(h.values), Resolution.PHONEME)


def length_regulate(h: HiddenSequence, durations: torch.Tensor) -> HiddenSequence:
    """Repeat each phoneme hidden durations[i] times; output length = sum."""
    if h.resolution is not Resolution.PHONEME:
        raise ValueError(f"length_regulate needs phoneme resolution, got {h.resolution.value}")
    durations = torch.as_tensor(durations, dtype=torch.long)
    if durations.dim() != 1 or durations.shape[0] != len(h):
        raise ValueError(
            f"durations shape {tuple(durations.shape)} does not match {len(h)} phonemes"
        )
    if bool((durations < 0).any()):
        raise ValueError("negative duration")
    if int(durations.sum()) == 0:
        raise ValueError("all durations are zero; nothing to regulate")
    return HiddenSequence(
        torch.repeat_interleave(h.values, durations, dim=0), Resolution.FRAME
    )
