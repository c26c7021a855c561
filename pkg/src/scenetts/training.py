"""Masked-prosody training: example preparation, the step, and schedules.

One optimization step sums the duration/pitch/energy masked losses and
the diffusion denoising loss over a small batch of unpadded utterances
(gradient accumulation instead of padded batching). The timbre reference
for each utterance is a different utterance from the same speaker; the
parallel_spk variant uses the utterance itself. All stochastic choices
(batch order, reference choice, diffusion step and noise) come from one
torch.Generator so identical seeds replay identical steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainingConfig, seed_for
from .g2p import Vocabulary
from .masking import MaskMode, MaskSpec, build_mask, build_posterior_mask, mask_durations, mpp_loss
from .model import AcousticModel, length_regulate, save_checkpoint
from .model.config import Variant

log = logging.getLogger(__name__)

LOSS_COMPONENTS = ("duration", "pitch", "energy", "diffusion")


@dataclass
class UtteranceRecord:
    """The minimum an utterance must supply to become a training example.

    ToyUtterance satisfies the same attribute set; records built from
    cached features use this class directly.
    """

    utt_id: str
    speaker_id: str
    units: list[str]
    durations: np.ndarray
    pitch_hz: np.ndarray
    energy: np.ndarray
    mel: np.ndarray

    @property
    def frames(self) -> int:
        return int(np.asarray(self.durations).sum())


@dataclass
class TrainExample:
    utt_id: str
    speaker_id: str
    phoneme_ids: torch.Tensor
    durations: torch.Tensor  # int64 frames per phoneme
    pitch_hz: torch.Tensor
    energy: torch.Tensor
    mel: torch.Tensor
    frame_mask: torch.Tensor  # bool, True = hidden
    phoneme_mask: torch.Tensor
    log_durations: torch.Tensor = field(init=False)
    log_pitch: torch.Tensor = field(init=False)
    log_energy: torch.Tensor = field(init=False)

    def __post_init__(self) -> None:
        frames = int(self.durations.sum())
        if self.pitch_hz.shape[0] != frames or self.mel.shape[0] != frames:
            raise ValueError(f"{self.utt_id}: track frames do not match durations sum {frames}")
        self.log_durations = torch.log1p(self.durations.to(torch.float32))
        self.log_pitch = torch.log1p(self.pitch_hz)
        self.log_energy = torch.log1p(self.energy)

    def prompt(self, kind: str) -> tuple[torch.Tensor, torch.Tensor]:
        """Masked-prompt channel: observed values where visible, zeros where hidden."""
        target = {"duration": self.log_durations, "pitch": self.log_pitch, "energy": self.log_energy}[kind]
        mask = self.phoneme_mask if kind == "duration" else self.frame_mask
        return target * (~mask), mask

    def remask(self, frame_mask: np.ndarray) -> None:
        """Swap in a new frame mask (and the phoneme mask it induces)."""
        self.frame_mask = torch.tensor(frame_mask)
        self.phoneme_mask = torch.tensor(mask_durations(self.durations.numpy(), frame_mask))

    @property
    def visible_mel(self) -> torch.Tensor:
        return self.mel[~self.frame_mask]


def prepare_examples(
    utterances: "list[UtteranceRecord]",
    vocab: Vocabulary,
    mask_ratio: float,
    mask_mode: str = "posterior",
    mask_rng: np.random.Generator | None = None,
) -> list[TrainExample]:
    examples = []
    for utt in utterances:
        spec = MaskSpec(utt.frames, mask_ratio, MaskMode(mask_mode))
        frame_mask = build_mask(spec, mask_rng)
        examples.append(
            TrainExample(
                utt_id=utt.utt_id,
                speaker_id=utt.speaker_id,
                phoneme_ids=torch.tensor(vocab.encode(utt.units), dtype=torch.long),
                durations=torch.tensor(utt.durations, dtype=torch.long),
                pitch_hz=torch.tensor(utt.pitch_hz, dtype=torch.float32),
                energy=torch.tensor(utt.energy, dtype=torch.float32),
                mel=torch.tensor(utt.mel, dtype=torch.float32),
                frame_mask=torch.tensor(frame_mask),
                phoneme_mask=torch.tensor(mask_durations(utt.durations, frame_mask)),
            )
        )
    return examples


@dataclass
class TrainState:
    model: AcousticModel
    optimizer: torch.optim.Optimizer
    generator: torch.Generator
    step: int = 0
    frozen_modules: frozenset[str] = frozenset()

    @classmethod
    def create(
        cls, model: AcousticModel, config: TrainingConfig, frozen: tuple[str, ...] = ()
    ) -> "TrainState":
        for name in frozen:
            if not hasattr(model, name):
                raise ValueError(f"cannot freeze unknown module {name!r}")
            getattr(model, name).requires_grad_(False)
        trainable = [p for p in model.parameters() if p.requires_grad]
        optimizer = torch.optim.Adam(trainable, lr=config.peak_lr, betas=(0.9, 0.98))
        generator = torch.Generator().manual_seed(seed_for(config.seed, "train"))
        return cls(model, optimizer, generator, frozen_modules=frozenset(frozen))


def learning_rate(step: int, config: TrainingConfig) -> float:
    """Linear warmup to peak_lr, then inverse-sqrt decay."""
    step = max(step, 1)
    return config.peak_lr * min(step / config.warmup_steps, math.sqrt(config.warmup_steps / step))


def _speaker_pool(examples: list[TrainExample]) -> dict[str, list[int]]:
    pool: dict[str, list[int]] = {}
    for i, ex in enumerate(examples):
        pool.setdefault(ex.speaker_id, []).append(i)
    return pool


_warned_single: set[str] = set()


def _timbre_reference(
    ex: TrainExample,
    idx: int,
    examples: list[TrainExample],
    pool: dict[str, list[int]],
    variant: Variant,
    generator: torch.Generator,
) -> TrainExample:
    if variant is Variant.PARALLEL_SPK:
        return ex
    candidates = [j for j in pool[ex.speaker_id] if j != idx]
    if not candidates:
        if ex.speaker_id not in _warned_single:
            _warned_single.add(ex.speaker_id)
            log.warning(
                "speaker %s has a single utterance; timbre reference falls back "
                "to the utterance itself", ex.speaker_id,
            )
        return ex
    pick = int(torch.randint(len(candidates), (1,), generator=generator))
    return examples[candidates[pick]]


def _draw_mask(
    frames: int, ratio: float, mode: MaskMode, generator: torch.Generator
) -> np.ndarray:
    """Fresh frame mask drawn from the training generator."""
    if mode is MaskMode.POSTERIOR:
        return build_posterior_mask(frames, ratio)
    span = MaskSpec(frames, ratio, mode).masked_frames
    limit = frames - span + 1
    start = int(torch.randint(limit, (1,), generator=generator)) if limit > 1 else 0
    mask = np.zeros(frames, dtype=bool)
    mask[start:start + span] = True
    return mask


def train_step(
    state: TrainState,
    batch: list[int],
    examples: list[TrainExample],
    config: TrainingConfig,
) -> dict[str, float]:
    """One optimizer update over a batch of example indices."""
    model = state.model
    model.train()
    pool = _speaker_pool(examples)
    variant = model.config.variant
    state.step += 1
    lr = learning_rate(state.step, config)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad()

    totals = {name: 0.0 for name in LOSS_COMPONENTS}
    for idx in batch:
        ex = examples[idx]
        if config.mask_jitter > 0.0:
            # Resample the boundary each visit so every frame of the
            # utterance takes gradient in some step and prompts of varying
            # length are all in-distribution.
            u = float(torch.rand((), generator=state.generator))
            ratio = config.mask_ratio + (2.0 * u - 1.0) * config.mask_jitter
            ratio = min(max(ratio, 0.05), 0.95)
            frames = int(ex.durations.sum())
            ex.remask(_draw_mask(frames, ratio, MaskMode(config.mask_mode), state.generator))
        ref = _timbre_reference(ex, idx, examples, pool, variant, state.generator)
        speaker = model.timbre_encode(ref.mel)
        h_ph = model.encode_phonemes(ex.phoneme_ids)
        h_frame = length_regulate(h_ph, ex.durations)

        losses = {}
        for kind, h in (("duration", h_ph), ("pitch", h_frame), ("energy", h_frame)):
            values, mask = ex.prompt(kind)
            pred = model.predict_prosody(
                kind, h, values, mask,
                speaker=speaker if variant is Variant.ADDALL_SPK else None,
                prompt_mel=ex.visible_mel if variant is Variant.NS2_PROMPTING else None,
            )
            target = {"duration": ex.log_durations, "pitch": ex.log_pitch, "energy": ex.log_energy}[kind]
            losses[kind] = mpp_loss(pred, target, mask)

        cond = model.decoder_condition(h_frame, ex.pitch_hz, ex.energy, speaker)
        t = int(torch.randint(1, model.config.diffusion_steps + 1, (1,), generator=state.generator))
        noise = torch.randn(ex.mel.shape, generator=state.generator)
        losses["diffusion"] = model.diffusion_train_step(ex.mel, cond, t, noise)

        (sum(losses.values()) / len(batch)).backward()
        for name in LOSS_COMPONENTS:
            totals[name] += float(losses[name].detach()) / len(batch)

    state.optimizer.step()
    report = dict(totals)
    report["total"] = sum(totals.values())
    report["lr"] = lr
    return report


def _batches(n: int, batch_size: int, generator: torch.Generator):
    """Endless shuffled index batches; reshuffles each epoch."""
    while True:
        order = torch.randperm(n, generator=generator).tolist()
        for start in range(0, n - batch_size + 1, batch_size):
            yield order[start:start + batch_size]


def train_loop(
    model: AcousticModel,
    examples: list[TrainExample],
    config: TrainingConfig,
    steps: int,
    run_dir: str | Path | None = None,
    frozen: tuple[str, ...] = (),
    vocab: Vocabulary | None = None,
) -> tuple[TrainState, list[dict[str, float]]]:
    """Run ``steps`` updates; returns final state and per-step loss reports."""
    if steps <= 0:
        raise ValueError(f"steps must be positive, got {steps}")
    state = TrainState.create(model, config, frozen)
    batch_size = min(config.batch_size, len(examples))
    batches = _batches(len(examples), batch_size, state.generator)
    history: list[dict[str, float]] = []

    run_path = Path(run_dir) if run_dir is not None else None
    metrics = None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)
        metrics = open(run_path / "metrics.log", "a", encoding="utf-8")
    try:
        for _ in range(steps):
            report = train_step(state, next(batches), examples, config)
            history.append(report)
            if metrics is not None and (
                state.step % config.log_every == 0 or state.step == steps
            ):
                parts = " ".join(f"{k}={report[k]:.6f}" for k in (*LOSS_COMPONENTS, "total", "lr"))
                metrics.write(f"step={state.step} {parts}\n")
                metrics.flush()
            if run_path is not None and state.step % config.checkpoint_every == 0:
                save_checkpoint(model, run_path / f"checkpoint_{state.step:06d}.pt", state.step)
    finally:
        if metrics is not None:
            metrics.close()
    if run_path is not None:
        save_checkpoint(model, run_path / "checkpoint_final.pt", state.step)
        if vocab is not None:
            (run_path / "vocab.txt").write_text(
                "\n".join(vocab.symbols) + "\n", encoding="utf-8"
            )
    return state, history


def pretrain(
    model: AcousticModel,
    examples: list[TrainExample],
    config: TrainingConfig,
    run_dir: str | Path | None = None,
    vocab: Vocabulary | None = None,
) -> tuple[TrainState, list[dict[str, float]]]:
    return train_loop(model, examples, config, config.steps, run_dir, frozen=(), vocab=vocab)


def finetune(
    model: AcousticModel,
    examples: list[TrainExample],
    config: TrainingConfig,
    steps_budget: int,
    run_dir: str | Path | None = None,
    vocab: Vocabulary | None = None,
) -> tuple[TrainState, list[dict[str, float]]]:
    """Adaptation pass with the text encoders pinned and a hard step cap."""
    if steps_budget <= 0:
        raise ValueError(f"steps_budget must be positive, got {steps_budget}")
    steps = min(steps_budget, config.finetune_cap)
    return train_loop(
        model, examples, config, steps, run_dir, frozen=tuple(config.frozen_modules), vocab=vocab
    )
