"""Shared sequence blocks: positional encoding, FFT and conformer layers.

All blocks operate on unbatched (length, channels) tensors; convolutions
and attention add the batch axis internally. Normalization is always
per-position LayerNorm so no block ever mixes information across time
except through its attention or convolution kernel. That keeps the
convolution-only predictor's receptive field exactly the stack's kernel
span, which the receptive-field tests rely on.
"""
from __future__ import annotations

import math

import torch
from torch import nn


class PositionalEncoding(nn.Module):
    """Fixed sinusoidal position table, grown on demand."""

    def __init__(self, dim: int, initial_len: int = 512):
        super().__init__()
        self.dim = dim
        self.register_buffer("table", self._build(initial_len), persistent=False)

    def _build(self, length: int) -> torch.Tensor:
        position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
        div = torch.exp(
            torch.arange(0, self.dim, 2, dtype=torch.float64) * (-math.log(10000.0) / self.dim)
        )
        table = torch.zeros(length, self.dim, dtype=torch.float64)
        table[:, 0::2] = torch.sin(position * div)
        table[:, 1::2] = torch.cos(position * div[: self.dim // 2])
        return table

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        length = x.shape[0]
        if length > self.table.shape[0]:
            self.table = self._build(2 * length).to(self.table.device)
        return x + self.table[:length].to(dtype=x.dtype, device=x.device)


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x.unsqueeze(0)
        out, _ = self.attn(y, y, y, need_weights=False)
        return out.squeeze(0)


class CrossAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)

    def forward(self, query: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        out, _ = self.attn(
            query.unsqueeze(0), memory.unsqueeze(0), memory.unsqueeze(0), need_weights=False
        )
        return out.squeeze(0)


def conv1d_seq(conv: nn.Conv1d, x: torch.Tensor) -> torch.Tensor:
    """Apply a Conv1d to a (length, channels) tensor."""
    return conv(x.t().unsqueeze(0)).squeeze(0).t()


class ConvFeedForward(nn.Module):
    """FastSpeech-style FFN: wide conv, ReLU, pointwise conv back."""

    def __init__(self, dim: int, kernel: int, dropout: float, mult: int = 2):
        super().__init__()
        self.conv1 = nn.Conv1d(dim, mult * dim, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(mult * dim, dim, 1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = conv1d_seq(self.conv1, x).relu()
        return self.dropout(conv1d_seq(self.conv2, y))


class FFTBlock(nn.Module):
    """Pre-norm feed-forward transformer block (self-attention + conv FFN)."""

    def __init__(self, dim: int, heads: int, kernel: int, dropout: float):
        super().__init__()
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, dropout)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = ConvFeedForward(dim, kernel, dropout)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.dropout(self.attn(self.attn_norm(x)))
        return x + self.ffn(self.ffn_norm(x))


class ConvModule(nn.Module):
    """Conformer convolution module: pointwise GLU, depthwise conv, SiLU."""

    def __init__(self, dim: int, kernel: int, dropout: float):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError(f"depthwise kernel must be odd, got {kernel}")
        self.norm = nn.LayerNorm(dim)
        self.pointwise_in = nn.Conv1d(dim, 2 * dim, 1)
        self.depthwise = nn.Conv1d(dim, dim, kernel, padding=kernel // 2, groups=dim)
        self.post_norm = nn.LayerNorm(dim)
        self.pointwise_out = nn.Conv1d(dim, dim, 1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.norm(x)
        y = nn.functional.glu(conv1d_seq(self.pointwise_in, y), dim=-1)
        y = conv1d_seq(self.depthwise, y)
        y = nn.functional.silu(self.post_norm(y))
        return self.dropout(conv1d_seq(self.pointwise_out, y))


class FeedForward(nn.Module):
    def __init__(self, dim: int, dropout: float, mult: int = 2):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.net = nn.Sequential(
            nn.Linear(dim, mult * dim), nn.SiLU(), nn.Dropout(dropout), nn.Linear(mult * dim, dim)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(self.norm(x))


class ConformerBlock(nn.Module):
    """Macaron conformer layer: half-FFN, self-attention, conv module, half-FFN."""

    def __init__(self, dim: int, heads: int, kernel: int, dropout: float):
        super().__init__()
        self.ffn1 = FeedForward(dim, dropout)
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, dropout)
        self.conv = ConvModule(dim, kernel, dropout)
        self.ffn2 = FeedForward(dim, dropout)
        self.out_norm = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + 0.5 * self.ffn1(x)
        x = x + self.dropout(self.attn(self.attn_norm(x)))
        x = x + self.conv(x)
        x = x + 0.5 * self.ffn2(x)
        return self.out_norm(x)


class ConvNormBlock(nn.Module):
    """Convolution-only predictor layer: conv, ReLU, per-frame LayerNorm.

    Receptive field grows by kernel//2 per layer and by nothing else; there
    is deliberately no attention or global statistic here.
    """

    def __init__(self, dim: int, kernel: int, dropout: float):
        super().__init__()
        self.conv = nn.Conv1d(dim, dim, kernel, padding=kernel // 2)
        self.norm = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.dropout(self.norm(conv1d_seq(self.conv, x).relu()))
