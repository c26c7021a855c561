"""Denoising diffusion over mel frames with a residual convolution stack.

Forward process: x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps with a
linear beta schedule. The denoiser predicts eps; sampling is ancestral
from pure noise, injecting posterior noise at every step except the last.
Steps are 1-based: t in [1, diffusion_steps].
"""
from __future__ import annotations

import math

import torch
from torch import nn

from .config import ModelConfig


class NoiseSchedule(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.steps = config.diffusion_steps
        betas = torch.linspace(config.beta_start, config.beta_end, self.steps, dtype=torch.float64)
        alphas = 1.0 - betas
        abar = torch.cumprod(alphas, dim=0)
        abar_prev = torch.cat([torch.ones(1, dtype=torch.float64), abar[:-1]])
        posterior_var = betas * (1.0 - abar_prev) / (1.0 - abar)
        reg = lambda name, t: self.register_buffer(name, t.to(torch.float32))
        reg("betas", betas)
        reg("alphas", alphas)
        reg("alphas_cumprod", abar)
        reg("sqrt_alphas_cumprod", abar.sqrt())
        reg("sqrt_one_minus_alphas_cumprod", (1.0 - abar).sqrt())
        reg("recip_sqrt_alphas", alphas.rsqrt())
        reg("eps_coef", betas / (1.0 - abar).sqrt())
        reg("posterior_std", posterior_var.sqrt())

    def _index(self, t: int) -> int:
        if not 1 <= t <= self.steps:
            raise ValueError(f"step t must be in [1, {self.steps}], got {t}")
        return t - 1

    def q_sample(self, x0: torch.Tensor, t: int, noise: torch.Tensor) -> torch.Tensor:
        """Closed-form corruption of x0 at step t."""
        if noise.shape != x0.shape:
            raise ValueError(f"noise {tuple(noise.shape)} != x0 {tuple(x0.shape)}")
        i = self._index(t)
        dt = x0.dtype
        return self.sqrt_alphas_cumprod[i].to(dt) * x0 + self.sqrt_one_minus_alphas_cumprod[i].to(dt) * noise

    def denoise_step(
        self, x: torch.Tensor, eps_hat: torch.Tensor, t: int, noise: torch.Tensor | None
    ) -> torch.Tensor:
        """One ancestral step from x_t to x_{t-1}; t == 1 adds no noise."""
        i = self._index(t)
        dt = x.dtype
        mean = self.recip_sqrt_alphas[i].to(dt) * (x - self.eps_coef[i].to(dt) * eps_hat)
        if t == 1 or noise is None:
            return mean
        return mean + self.posterior_std[i].to(dt) * noise


class _StepEmbedding(nn.Module):
    """Sinusoidal step encoding pushed through a two-layer MLP."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.net = nn.Sequential(nn.Linear(dim, 4 * dim), nn.SiLU(), nn.Linear(4 * dim, dim))

    def forward(self, t: int, dtype: torch.dtype, device: torch.device) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            torch.arange(half, dtype=torch.float64, device=device)
            * (-math.log(10000.0) / max(half - 1, 1))
        )
        angles = t * freqs
        enc = torch.cat([angles.sin(), angles.cos()])
        if enc.numel() < self.dim:
            enc = torch.cat([enc, torch.zeros(self.dim - enc.numel(), dtype=torch.float64, device=device)])
        return self.net(enc.to(dtype))


class _ResidualLayer(nn.Module):
    def __init__(self, channels: int, cond_dim: int, kernel: int, dilation: int):
        super().__init__()
        self.step_proj = nn.Linear(channels, channels)
        self.conv = nn.Conv1d(
            channels, 2 * channels, kernel, padding=(kernel // 2) * dilation, dilation=dilation
        )
        self.cond_proj = nn.Linear(cond_dim, 2 * channels)
        self.out_proj = nn.Linear(channels, 2 * channels)

    def forward(
        self, x: torch.Tensor, cond: torch.Tensor, step_emb: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        y = x + self.step_proj(step_emb).unsqueeze(0)
        y = self.conv(y.t().unsqueeze(0)).squeeze(0).t()
        y = y + self.cond_proj(cond)
        gate, filt = y.chunk(2, dim=-1)
        y = torch.sigmoid(gate) * torch.tanh(filt)
        residual, skip = self.out_proj(y).chunk(2, dim=-1)
        return (x + residual) / math.sqrt(2.0), skip


class DiffusionDecoder(nn.Module):
    """Noise predictor: stacked same-width residual conv layers, each fed
    the step embedding and the frame-aligned conditioning sequence."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_mels = config.n_mels
        channels = config.decoder_channels
        self.input_proj = nn.Linear(config.n_mels, channels)
        self.step_embedding = _StepEmbedding(channels)
        self.layers = nn.ModuleList(
            _ResidualLayer(channels, config.hidden_dim, config.decoder_kernel, config.decoder_dilation)
            for _ in range(config.decoder_layers)
        )
        self.skip_scale = 1.0 / math.sqrt(config.decoder_layers)
        self.out = nn.Sequential(
            nn.Linear(channels, channels), nn.SiLU(), nn.Linear(channels, config.n_mels)
        )

    def forward(self, x_t: torch.Tensor, t: int, cond: torch.Tensor) -> torch.Tensor:
        if x_t.dim() != 2 or x_t.shape[1] != self.n_mels:
            raise ValueError(f"x_t must be (frames, {self.n_mels}), got {tuple(x_t.shape)}")
        if cond.shape[0] != x_t.shape[0]:
            raise ValueError(
                f"conditioning has {cond.shape[0]} frames, mel has {x_t.shape[0]}"
            )
        h = self.input_proj(x_t)
        step_emb = self.step_embedding(t, h.dtype, h.device)
        skip_sum = torch.zeros_like(h)
        for layer in self.layers:
            h, skip = layer(h, cond, step_emb)
            skip_sum = skip_sum + skip
        return self.out((skip_sum * self.skip_scale).relu())


def diffusion_loss(
    decoder: DiffusionDecoder,
    schedule: NoiseSchedule,
    mel_gt: torch.Tensor,
    cond: torch.Tensor,
    t: int,
    noise: torch.Tensor,
) -> torch.Tensor:
    """MSE between injected and predicted noise at step t."""
    if mel_gt.shape != noise.shape:
        raise ValueError(f"noise {tuple(noise.shape)} != mel {tuple(mel_gt.shape)}")
    x_t = schedule.q_sample(mel_gt, t, noise)
    eps_hat = decoder(x_t, t, cond)
    return nn.functional.mse_loss(eps_hat, noise)


def diffusion_sample(
    decoder: DiffusionDecoder,
    schedule: NoiseSchedule,
    cond: torch.Tensor,
    frames: int,
    generator: torch.Generator,
) -> torch.Tensor:
    """Ancestral sampling from pure noise; deterministic given the generator."""
    if frames <= 0:
        raise ValueError(f"frames must be positive, got {frames}")
    if cond.shape[0] != frames:
        raise ValueError(f"conditioning has {cond.shape[0]} frames, requested {frames}")
    dtype = next(decoder.parameters()).dtype
    x = torch.randn(frames, decoder.n_mels, generator=generator, dtype=dtype)
    for t in range(schedule.steps, 0, -1):
        eps_hat = decoder(x, t, cond)
        noise = torch.randn(x.shape, generator=generator, dtype=dtype) if t > 1 else None
        x = schedule.denoise_step(x, eps_hat, t, noise)
    return x
