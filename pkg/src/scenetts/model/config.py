"""Model hyperparameters and architecture variants."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from enum import Enum


class Variant(str, Enum):
    BASELINE = "baseline"
    CNN_PREDICTOR = "cnn_predictor"
    ATTEN_PREDICTOR = "atten_predictor"
    PARALLEL_SPK = "parallel_spk"
    ADDALL_SPK = "addall_spk"
    NS2_PROMPTING = "ns2_prompting"


PREDICTOR_KINDS = ("duration", "pitch", "energy")


@dataclass
class ModelConfig:
    vocab_size: int = 64
    hidden_dim: int = 256
    n_mels: int = 80
    spk_embed_dim: int = 256
    basis_dim: int = 128
    basis_count: int = 2000
    predictor_layers: dict[str, int] = field(
        default_factory=lambda: {"duration": 2, "pitch": 4, "energy": 2}
    )
    decoder_layers: int = 20
    decoder_kernel: int = 3
    decoder_dilation: int = 1
    decoder_channels: int = 256
    diffusion_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.06
    encoder_layers: int = 4
    encoder_heads: int = 2
    encoder_kernel: int = 9
    conformer_heads: int = 2
    conformer_kernel: int = 9
    timbre_layers: int = 2
    dropout: float = 0.1
    variant: Variant = Variant.BASELINE

    def __post_init__(self) -> None:
        self.variant = Variant(self.variant)
        counts = dict(
            vocab_size=self.vocab_size,
            hidden_dim=self.hidden_dim,
            n_mels=self.n_mels,
            spk_embed_dim=self.spk_embed_dim,
            basis_dim=self.basis_dim,
            basis_count=self.basis_count,
            decoder_layers=self.decoder_layers,
            decoder_kernel=self.decoder_kernel,
            decoder_dilation=self.decoder_dilation,
            decoder_channels=self.decoder_channels,
            diffusion_steps=self.diffusion_steps,
            encoder_layers=self.encoder_layers,
            encoder_heads=self.encoder_heads,
            encoder_kernel=self.encoder_kernel,
            conformer_heads=self.conformer_heads,
            conformer_kernel=self.conformer_kernel,
            timbre_layers=self.timbre_layers,
        )
        for name, value in counts.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if set(self.predictor_layers) != set(PREDICTOR_KINDS):
            raise ValueError(
                f"predictor_layers must have keys {PREDICTOR_KINDS}, got {sorted(self.predictor_layers)}"
            )
        for kind, depth in self.predictor_layers.items():
            if depth <= 0:
                raise ValueError(f"predictor_layers[{kind}] must be positive, got {depth}")
        for name in ("decoder_kernel", "encoder_kernel", "conformer_kernel"):
            if getattr(self, name) % 2 == 0:
                raise ValueError(f"{name} must be odd for same-length padding, got {getattr(self, name)}")
        for name in ("hidden_dim",):
            if getattr(self, name) % self.encoder_heads or getattr(self, name) % self.conformer_heads:
                raise ValueError(f"{name} must be divisible by the head counts")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 < self.beta_start < self.beta_end < 1.0:
            raise ValueError(
                f"need 0 < beta_start < beta_end < 1, got {self.beta_start}, {self.beta_end}"
            )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variant"] = self.variant.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)

    @classmethod
    def tiny(cls, vocab_size: int = 64, **overrides) -> "ModelConfig":
        """Desk-scale config for tests and the toy corpus; keeps the default
        predictor depths so receptive-field behavior matches the full model."""
        base = cls(
            vocab_size=vocab_size,
            hidden_dim=48,
            n_mels=80,
            spk_embed_dim=32,
            basis_dim=16,
            basis_count=32,
            decoder_layers=8,
            decoder_channels=48,
            diffusion_steps=100,
            encoder_layers=2,
            timbre_layers=1,
            dropout=0.0,
        )
        return replace(base, **overrides) if overrides else base
