from .acoustic import AcousticModel, CheckpointError, load_checkpoint, save_checkpoint
from .config import ModelConfig, Variant
from .encoders import HiddenSequence, Resolution, length_regulate

__all__ = [
    "AcousticModel",
    "CheckpointError",
    "HiddenSequence",
    "ModelConfig",
    "Resolution",
    "Variant",
    "length_regulate",
    "load_checkpoint",
    "save_checkpoint",
]
