"""The full acoustic model and its checkpoint format."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..features import interpolate_unvoiced
from .config import ModelConfig, PREDICTOR_KINDS
from .diffusion import DiffusionDecoder, NoiseSchedule, diffusion_loss, diffusion_sample
from .encoders import HiddenSequence, LinguisticEncoder, Resolution, StyleAdaptiveEncoder
from .predictors import ProsodyPredictor
from .timbre import TimbreEncoder

CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class AcousticModel(nn.Module):
    """Encoders, timbre bank, prosody predictors, and diffusion decoder.

    Weights are immutable during inference; training is single-writer.
    """

    # Encoder stacks pinned during finetuning to preserve linguistic content.
    FINETUNE_FROZEN = ("linguistic", "style_adaptive")

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.linguistic = LinguisticEncoder(config)
        self.style_adaptive = StyleAdaptiveEncoder(config)
        self.timbre = TimbreEncoder(config)
        self.predictors = nn.ModuleDict(
            {kind: ProsodyPredictor(kind, config) for kind in PREDICTOR_KINDS}
        )
        # Bias-free projections so zero pitch/energy/speaker leave the
        # conditioning exactly equal to the frame hiddens.
        self.pitch_proj = nn.Linear(1, config.hidden_dim, bias=False)
        self.energy_proj = nn.Linear(1, config.hidden_dim, bias=False)
        self.spk_proj = nn.Linear(config.spk_embed_dim, config.hidden_dim, bias=False)
        self.decoder = DiffusionDecoder(config)
        self.schedule = NoiseSchedule(config)

    def linguistic_encode(self, phoneme_ids: torch.Tensor) -> HiddenSequence:
        return self.linguistic(phoneme_ids)

    def style_adaptive_encode(self, h: HiddenSequence) -> HiddenSequence:
        return self.style_adaptive(h)

    def encode_phonemes(self, phoneme_ids: torch.Tensor) -> HiddenSequence:
        return self.style_adaptive(self.linguistic(phoneme_ids))

    def timbre_encode(self, spk_mel: torch.Tensor) -> torch.Tensor:
        return self.timbre(spk_mel)

    def predict_prosody(
        self,
        kind: str,
        h: HiddenSequence,
        prompt_values: torch.Tensor | None,
        prompt_mask: torch.Tensor | None,
        speaker: torch.Tensor | None = None,
        prompt_mel: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if kind not in self.predictors:
            raise ValueError(f"unknown predictor kind {kind!r}")
        return self.predictors[kind](h, prompt_values, prompt_mask, speaker, prompt_mel)

    def decoder_condition(
        self,
        h_frame: HiddenSequence,
        pitch_hz: torch.Tensor,
        energy: torch.Tensor,
        speaker: torch.Tensor,
    ) -> torch.Tensor:
        """Frame conditioning: hiddens plus projected log-pitch (interpolated
        through unvoiced gaps), log-energy, and the broadcast speaker vector."""
        if h_frame.resolution is not Resolution.FRAME:
            raise ValueError(f"conditioning needs frame resolution, got {h_frame.resolution.value}")
        frames = len(h_frame)
        if pitch_hz.shape != (frames,) or energy.shape != (frames,):
            raise ValueError(
                f"pitch {tuple(pitch_hz.shape)} / energy {tuple(energy.shape)} "
                f"do not match {frames} frames"
            )
        filled = interpolate_unvoiced(
            pitch_hz.detach().cpu().numpy().astype(np.float64),
            pitch_hz.detach().cpu().numpy() > 0,
        )
        log_pitch = torch.log1p(torch.as_tensor(filled, dtype=h_frame.values.dtype))
        log_energy = torch.log1p(energy.to(h_frame.values.dtype).clamp(min=0))
        return (
            h_frame.values
            + self.pitch_proj(log_pitch.unsqueeze(-1))
            + self.energy_proj(log_energy.unsqueeze(-1))
            + self.spk_proj(speaker).unsqueeze(0)
        )

    def diffusion_train_step(
        self, mel_gt: torch.Tensor, cond: torch.Tensor, t: int, noise: torch.Tensor
    ) -> torch.Tensor:
        return diffusion_loss(self.decoder, self.schedule, mel_gt, cond, t, noise)

    def diffusion_sample(
        self, cond: torch.Tensor, frames: int, generator: torch.Generator
    ) -> torch.Tensor:
        return diffusion_sample(self.decoder, self.schedule, cond, frames, generator)


def save_checkpoint(model: AcousticModel, path: str | Path, step: int = 0) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "config": model.config.to_dict(),
            "state_dict": model.state_dict(),
            "step": step,
        },
        path,
    )


def load_checkpoint(
    path: str | Path, expected_config: ModelConfig | None = None
) -> tuple[AcousticModel, int]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version} != {CHECKPOINT_VERSION}")
    config = ModelConfig.from_dict(payload["config"])
    if expected_config is not None and config.to_dict() != expected_config.to_dict():
        stored, wanted = config.to_dict(), expected_config.to_dict()
        diff = sorted(k for k in stored if stored[k] != wanted.get(k))
        raise CheckpointError(f"{path}: config mismatch on {diff}")
    model = AcousticModel(config)
    model.load_state_dict(payload["state_dict"])
    return model, int(payload.get("step", 0))
