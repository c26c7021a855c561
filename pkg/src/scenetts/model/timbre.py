"""Speaker representation via attention over a learned basis bank.

The reference mel passes a small transformer encoder; its mean-pooled
output queries the basis vectors (keys and values are the same bank), and
the readout is projected to the speaker embedding width. The output width
never depends on the reference length.
"""
from __future__ import annotations

import math

import torch
from torch import nn

from .config import ModelConfig
from .layers import FFTBlock, PositionalEncoding

MIN_REFERENCE_FRAMES = 8


class TimbreEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.input_proj = nn.Linear(config.n_mels, config.hidden_dim)
        self.positions = PositionalEncoding(config.hidden_dim)
        self.blocks = nn.ModuleList(
            FFTBlock(config.hidden_dim, config.encoder_heads, config.encoder_kernel, config.dropout)
            for _ in range(config.timbre_layers)
        )
        self.query_proj = nn.Linear(config.hidden_dim, config.basis_dim)
        self.basis = nn.Parameter(torch.randn(config.basis_count, config.basis_dim))
        self.out_proj = nn.Linear(config.basis_dim, config.spk_embed_dim)
        self.scale = 1.0 / math.sqrt(config.basis_dim)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        if mel.dim() != 2:
            raise ValueError(f"reference mel must be (frames, n_mels), got {tuple(mel.shape)}")
        if mel.shape[0] < MIN_REFERENCE_FRAMES:
            raise ValueError(
                f"reference mel has {mel.shape[0]} frames, need >= {MIN_REFERENCE_FRAMES}"
            )
        h = self.positions(self.input_proj(mel))
        for block in self.blocks:
            h = block(h)
        query = self.query_proj(h.mean(dim=0))
        weights = torch.softmax(self.basis @ query * self.scale, dim=0)
        return self.out_proj(weights @ self.basis)
