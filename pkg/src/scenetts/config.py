"""Run configuration: dotted-key config files and seed derivation.

Config files are plain text, one ``section.key = value`` per line, with
``#`` comments. Section names mirror the dataclasses below; model keys
mirror ModelConfig field names exactly. The training seed is required:
there are no unseeded runs.
"""
from __future__ import annotations

import hashlib
import os
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .model.config import ModelConfig, Variant

CACHE_ENV_VAR = "SCENETTS_CACHE"


class ConfigError(ValueError):
    pass


def seed_for(root_seed: int, name: str) -> int:
    """Stable per-purpose seed derived from the single root seed."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


@dataclass
class DataConfig:
    manifest: str | None = None
    corpus_dir: str | None = None
    cache_dir: str = "features_cache"
    run_dir: str = "runs/default"


@dataclass
class FeatureConfig:
    sample_rate: int = 16000
    pitch_fmin: float = 50.0
    pitch_fmax: float = 600.0
    periodicity_threshold: float = 0.3
    cache_dir: str | None = None  # falls back to data.cache_dir


@dataclass
class TrainingConfig:
    seed: int
    steps: int = 2000
    batch_size: int = 4
    peak_lr: float = 2e-3
    warmup_steps: int = 100
    mask_ratio: float = 0.6
    mask_mode: str = "posterior"
    mask_jitter: float = 0.0  # half-width of a per-step uniform ratio perturbation
    finetune_cap: int = 5000
    frozen_modules: tuple[str, ...] = ("linguistic", "style_adaptive")
    checkpoint_every: int = 1000
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.steps <= 0 or self.batch_size <= 0:
            raise ConfigError("training.steps and training.batch_size must be positive")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ConfigError(f"training.mask_ratio must be in [0, 1], got {self.mask_ratio}")
        if not 0.0 <= self.mask_jitter <= 0.5:
            raise ConfigError(f"training.mask_jitter must be in [0, 0.5], got {self.mask_jitter}")
        if self.finetune_cap <= 0:
            raise ConfigError("training.finetune_cap must be positive")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    training: TrainingConfig = field(default_factory=lambda: TrainingConfig(seed=0))
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def cache_dir(self) -> Path:
        env = os.environ.get(CACHE_ENV_VAR)
        if env:
            return Path(env)
        return Path(self.features.cache_dir or self.data.cache_dir)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Dotted key/value lines to a flat mapping; later keys win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def _coerce(raw: str, annotation: Any, key: str) -> Any:
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):  # Optional[T]
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if raw.lower() in ("none", ""):
            return None
        return _coerce(raw, args[0], key)
    if origin in (tuple, list):
        items = [item.strip() for item in raw.split(",") if item.strip()]
        inner = typing.get_args(annotation)[0] if typing.get_args(annotation) else str
        coerced = [_coerce(item, inner, key) for item in items]
        return tuple(coerced) if origin is tuple else coerced
    if annotation is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if annotation is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if annotation is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    if annotation is Variant:
        try:
            return Variant(raw)
        except ValueError as exc:
            raise ConfigError(
                f"{key}: unknown variant {raw!r}; choices: {[v.value for v in Variant]}"
            ) from exc
    return raw


_SECTIONS = {
    "model": ModelConfig,
    "data": DataConfig,
    "training": TrainingConfig,
    "features": FeatureConfig,
}


def build_run_config(
    kv: Mapping[str, str], overrides: Mapping[str, str] | None = None
) -> RunConfig:
    """Assemble a RunConfig from dotted keys; overrides win over the file."""
    merged = dict(kv)
    merged.update(overrides or {})
    per_section: dict[str, dict[str, Any]] = {name: {} for name in _SECTIONS}
    for key, raw in merged.items():
        section, _, rest = key.partition(".")
        if section not in _SECTIONS or not rest:
            raise ConfigError(f"unknown config key {key!r}")
        cls = _SECTIONS[section]
        hints = typing.get_type_hints(cls)
        name, _, sub = rest.partition(".")
        if name not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        if sub:  # nested mapping such as model.predictor_layers.pitch
            if typing.get_origin(hints[name]) is not dict:
                raise ConfigError(f"{key!r}: {section}.{name} takes no sub-keys")
            per_section[section].setdefault(name, {})[sub] = _coerce(raw, int, key)
        else:
            per_section[section][name] = _coerce(raw, hints[name], key)

    if "predictor_layers" in per_section["model"]:
        full = dict(ModelConfig().predictor_layers)
        full.update(per_section["model"]["predictor_layers"])
        per_section["model"]["predictor_layers"] = full
    if "seed" not in per_section["training"]:
        raise ConfigError("training.seed is required; there are no unseeded runs")
    try:
        return RunConfig(
            model=ModelConfig(**per_section["model"]),
            data=DataConfig(**per_section["data"]),
            training=TrainingConfig(**per_section["training"]),
            features=FeatureConfig(**per_section["features"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_run_config(config: RunConfig) -> str:
    """Emit the effective configuration; parsing it back reproduces config."""
    lines: list[str] = []
    for section_name, section_cls in _SECTIONS.items():
        section = getattr(config, section_name)
        for f in fields(section_cls):
            value = getattr(section, f.name)
            if isinstance(value, dict):
                for sub, sub_value in sorted(value.items()):
                    lines.append(f"{section_name}.{f.name}.{sub} = {sub_value}")
            elif isinstance(value, (tuple, list)):
                lines.append(f"{section_name}.{f.name} = {','.join(str(v) for v in value)}")
            elif isinstance(value, Variant):
                lines.append(f"{section_name}.{f.name} = {value.value}")
            elif value is None:
                lines.append(f"{section_name}.{f.name} = none")
            else:
                lines.append(f"{section_name}.{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_run_config(path: str | Path, overrides: Mapping[str, str] | None = None) -> RunConfig:
    return build_run_config(load_config_file(path), overrides)
