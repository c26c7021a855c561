"""Prosody predictors over phoneme- or frame-resolution hidden states.

The default stack is conformer layers, whose attention gives every output
position a view of the whole prompt. The cnn_predictor variant swaps in a
convolution-only stack whose receptive field is the kernel span times the
depth, and atten_predictor is that convolution stack plus one attention
layer. The prompt enters as an embedded channel: observed values where
the mask is false, zeros where true, plus the mask itself. ns2_prompting
drops the explicit channel and instead cross-attends the raw prompt mel.
"""
from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig, PREDICTOR_KINDS, Variant
from .encoders import HiddenSequence, Resolution
from .layers import ConformerBlock, ConvNormBlock, CrossAttention, PositionalEncoding, SelfAttention

PROMPT_CHANNELS = 2  # observed-or-zero value, binary mask


class ProsodyPredictor(nn.Module):
    def __init__(self, kind: str, config: ModelConfig):
        super().__init__()
        if kind not in PREDICTOR_KINDS:
            raise ValueError(f"kind must be one of {PREDICTOR_KINDS}, got {kind!r}")
        self.kind = kind
        self.variant = config.variant
        self.resolution = Resolution.PHONEME if kind == "duration" else Resolution.FRAME
        hidden = config.hidden_dim
        depth = config.predictor_layers[kind]

        if self.variant is Variant.NS2_PROMPTING:
            self.mel_proj = nn.Linear(config.n_mels, hidden)
            self.prompt_attn = CrossAttention(hidden, config.conformer_heads, config.dropout)
        else:
            self.prompt_proj = nn.Linear(PROMPT_CHANNELS, hidden)
        if self.variant is Variant.ADDALL_SPK:
            self.spk_proj = nn.Linear(config.spk_embed_dim, hidden, bias=False)

        self.positions = PositionalEncoding(hidden)
        if self.variant is Variant.CNN_PREDICTOR:
            self.stack = nn.ModuleList(
                ConvNormBlock(hidden, 3, config.dropout) for _ in range(depth)
            )
            self.final_attn = None
        elif self.variant is Variant.ATTEN_PREDICTOR:
            self.stack = nn.ModuleList(
                ConvNormBlock(hidden, 3, config.dropout) for _ in range(depth)
            )
            self.attn_norm = nn.LayerNorm(hidden)
            self.final_attn = SelfAttention(hidden, config.conformer_heads, config.dropout)
        else:
            self.stack = nn.ModuleList(
                ConformerBlock(hidden, config.conformer_heads, config.conformer_kernel, config.dropout)
                for _ in range(depth)
            )
            self.final_attn = None
        self.head = nn.Linear(hidden, 1)

    def assemble_input(
        self,
        h: HiddenSequence,
        prompt_values: torch.Tensor | None,
        prompt_mask: torch.Tensor | None,
        speaker: torch.Tensor | None = None,
        prompt_mel: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Predictor input before the stack; exposed so tests can verify the
        baseline assembles no speaker channel."""
        if h.resolution is not self.resolution:
            raise ValueError(
                f"{self.kind} predictor expects {self.resolution.value} resolution, got {h.resolution.value}"
            )
        x = h.values
        if self.variant is Variant.NS2_PROMPTING:
            if prompt_mel is None:
                raise ValueError("ns2_prompting needs prompt_mel")
            if prompt_mel.shape[0] > 0:
                x = x + self.prompt_attn(x, self.mel_proj(prompt_mel))
        else:
            if prompt_values is None or prompt_mask is None:
                raise ValueError("explicit prompting needs prompt_values and prompt_mask")
            if prompt_values.shape != (len(h),) or prompt_mask.shape != (len(h),):
                raise ValueError(
                    f"prompt length {tuple(prompt_values.shape)}/{tuple(prompt_mask.shape)} "
                    f"does not match {len(h)} positions"
                )
            channel = torch.stack(
                [prompt_values.to(x.dtype), prompt_mask.to(x.dtype)], dim=-1
            )
            x = x + self.prompt_proj(channel)
        if self.variant is Variant.ADDALL_SPK:
            if speaker is None:
                raise ValueError("addall_spk needs the speaker vector")
            x = x + self.spk_proj(speaker).unsqueeze(0)
        return x

    def forward(
        self,
        h: HiddenSequence,
        prompt_values: torch.Tensor | None,
        prompt_mask: torch.Tensor | None,
        speaker: torch.Tensor | None = None,
        prompt_mel: torch.Tensor | None = None,
    ) -> torch.Tensor:
        x = self.positions(
            self.assemble_input(h, prompt_values, prompt_mask, speaker, prompt_mel)
        )
        for block in self.stack:
            x = block(x)
        if self.final_attn is not None:
            x = x + self.final_attn(self.attn_norm(x))
        out = self.head(x).squeeze(-1)
        # Duration works in log1p frames; softplus keeps the codomain
        # nonnegative so decoded frame counts are always valid.
        return nn.functional.softplus(out) if self.kind == "duration" else out
