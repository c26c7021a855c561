"""Training loop: determinism, schedules, freezing, masking plumbing."""
import logging

import numpy as np
import pytest
import torch

from scenetts.config import TrainingConfig, seed_for
from scenetts.model import AcousticModel
from scenetts.model.config import ModelConfig, Variant
from scenetts.training import (
    TrainState,
    UtteranceRecord,
    finetune,
    learning_rate,
    prepare_examples,
    pretrain,
    train_loop,
    train_step,
)


def small_config(**overrides):
    defaults = dict(seed=5, steps=4, batch_size=2, warmup_steps=10, log_every=2,
                    checkpoint_every=100)
    defaults.update(overrides)
    return TrainingConfig(**defaults)


@pytest.fixture
def examples(toy_corpus, toy_vocab):
    return prepare_examples(toy_corpus[:6], toy_vocab, mask_ratio=0.6)


@pytest.fixture
def model(tiny_config):
    torch.manual_seed(0)
    return AcousticModel(tiny_config)


class TestExamples:
    def test_targets_are_log1p(self, examples):
        ex = examples[0]
        assert torch.allclose(ex.log_pitch, torch.log1p(ex.pitch_hz))
        assert torch.allclose(ex.log_durations, torch.log1p(ex.durations.float()))

    def test_prompt_zeros_hidden_positions(self, examples):
        ex = examples[0]
        values, mask = ex.prompt("pitch")
        assert torch.all(values[mask] == 0)
        assert torch.all(values[~mask] == ex.log_pitch[~mask])

    def test_duration_prompt_uses_phoneme_mask(self, examples):
        ex = examples[0]
        values, mask = ex.prompt("duration")
        assert values.shape == ex.log_durations.shape
        assert mask.shape == ex.phoneme_mask.shape
        assert torch.equal(mask, ex.phoneme_mask)

    def test_track_length_mismatch_rejected(self, toy_vocab):
        record = UtteranceRecord(
            utt_id="bad", speaker_id="s", units=["a", "b"],
            durations=np.array([2, 2]), pitch_hz=np.zeros(3),
            energy=np.zeros(4), mel=np.zeros((4, 80)),
        )
        with pytest.raises(ValueError, match="bad"):
            prepare_examples([record], toy_vocab, mask_ratio=0.5)

    def test_remask_updates_phoneme_mask(self, examples):
        ex = examples[0]
        frames = int(ex.durations.sum())
        new_mask = np.zeros(frames, dtype=bool)
        new_mask[: frames // 4] = True  # prefix instead of suffix
        ex.remask(new_mask)
        assert bool(ex.phoneme_mask[0])
        assert not bool(ex.phoneme_mask[-1])


class TestSchedule:
    def test_warmup_is_linear(self):
        config = small_config(warmup_steps=10, peak_lr=1e-3)
        assert learning_rate(5, config) == pytest.approx(5e-4)
        assert learning_rate(10, config) == pytest.approx(1e-3)

    def test_decay_is_inverse_sqrt(self):
        config = small_config(warmup_steps=100, peak_lr=2e-3)
        assert learning_rate(400, config) == pytest.approx(2e-3 * 0.5)
        assert learning_rate(10000, config) == pytest.approx(2e-3 * 0.1)

    def test_applied_to_optimizer(self, model, examples):
        config = small_config(warmup_steps=10, peak_lr=1e-3)
        state = TrainState.create(model, config)
        report = train_step(state, [0, 1], examples, config)
        assert report["lr"] == pytest.approx(1e-4)
        assert state.optimizer.param_groups[0]["lr"] == pytest.approx(1e-4)


class TestDeterminism:
    def run(self, tiny_config, examples, jitter=0.0, steps=3):
        torch.manual_seed(seed_for(5, "init"))
        model = AcousticModel(tiny_config)
        config = small_config(steps=steps, mask_jitter=jitter)
        _, history = train_loop(model, examples, config, steps)
        return history, [p.detach().clone() for p in model.parameters()]

    def test_identical_seeds_identical_runs(self, tiny_config, toy_corpus, toy_vocab):
        a_hist, a_params = self.run(
            tiny_config, prepare_examples(toy_corpus[:6], toy_vocab, 0.6)
        )
        b_hist, b_params = self.run(
            tiny_config, prepare_examples(toy_corpus[:6], toy_vocab, 0.6)
        )
        assert a_hist == b_hist
        assert all(torch.equal(a, b) for a, b in zip(a_params, b_params))

    def test_jitter_stays_deterministic(self, tiny_config, toy_corpus, toy_vocab):
        a_hist, _ = self.run(
            tiny_config, prepare_examples(toy_corpus[:6], toy_vocab, 0.6), jitter=0.3
        )
        b_hist, _ = self.run(
            tiny_config, prepare_examples(toy_corpus[:6], toy_vocab, 0.6), jitter=0.3
        )
        assert a_hist == b_hist

    def test_jitter_changes_the_trajectory(self, tiny_config, toy_corpus, toy_vocab):
        a_hist, _ = self.run(
            tiny_config, prepare_examples(toy_corpus[:6], toy_vocab, 0.6), jitter=0.0
        )
        b_hist, _ = self.run(
            tiny_config, prepare_examples(toy_corpus[:6], toy_vocab, 0.6), jitter=0.3
        )
        assert a_hist != b_hist


class TestFreezing:
    def test_finetune_freezes_encoders(self, model, examples, tmp_path):
        frozen_before = {
            name: param.detach().clone()
            for name, param in model.named_parameters()
            if name.startswith(("linguistic.", "style_adaptive."))
        }
        config = small_config(steps=2)
        finetune(model, examples, config, steps_budget=2)
        changed = 0
        for name, param in model.named_parameters():
            if name.startswith(("linguistic.", "style_adaptive.")):
                assert torch.equal(param, frozen_before[name]), name
                assert not param.requires_grad
            elif param.requires_grad and param.grad is not None:
                changed += 1
        assert changed > 0

    def test_budget_capped(self, model, examples):
        config = small_config(steps=100, finetune_cap=3)
        state, history = finetune(model, examples, config, steps_budget=50)
        assert state.step == 3
        assert len(history) == 3

    def test_nonpositive_budget_rejected(self, model, examples):
        with pytest.raises(ValueError):
            finetune(model, examples, small_config(), steps_budget=0)

    def test_unknown_frozen_module_rejected(self, model):
        with pytest.raises(ValueError, match="bogus"):
            TrainState.create(model, small_config(), frozen=("bogus",))


class TestLoop:
    def test_loss_components_reported(self, model, examples):
        config = small_config(steps=1)
        _, history = pretrain(model, examples, config)
        report = history[0]
        for key in ("duration", "pitch", "energy", "diffusion", "total", "lr"):
            assert key in report
        assert report["total"] == pytest.approx(
            report["duration"] + report["pitch"] + report["energy"] + report["diffusion"]
        )

    def test_run_dir_artifacts(self, model, examples, toy_vocab, tmp_path):
        config = small_config(steps=4, checkpoint_every=2, log_every=2)
        pretrain(model, examples, config, run_dir=tmp_path, vocab=toy_vocab)
        assert (tmp_path / "checkpoint_000002.pt").exists()
        assert (tmp_path / "checkpoint_final.pt").exists()
        assert (tmp_path / "vocab.txt").exists()
        lines = (tmp_path / "metrics.log").read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("step=2 ")

    def test_loss_decreases_on_tiny_overfit(self, tiny_config, toy_corpus, toy_vocab):
        torch.manual_seed(seed_for(5, "init"))
        model = AcousticModel(tiny_config)
        examples = prepare_examples(toy_corpus[:2], toy_vocab, 0.6)
        config = small_config(steps=30, batch_size=2, warmup_steps=5, peak_lr=2e-3)
        _, history = train_loop(model, examples, config, 30)
        early = np.mean([h["pitch"] + h["energy"] for h in history[:5]])
        late = np.mean([h["pitch"] + h["energy"] for h in history[-5:]])
        assert late < early

    def test_single_utterance_speaker_warns_once(self, tiny_config, toy_corpus, toy_vocab, caplog):
        import scenetts.training as training_mod

        training_mod._warned_single.clear()
        # One utterance per speaker: every timbre reference must fall back.
        examples = prepare_examples([toy_corpus[0], toy_corpus[2]], toy_vocab, 0.6)
        speakers = {e.speaker_id for e in examples}
        torch.manual_seed(0)
        model = AcousticModel(tiny_config)
        config = small_config(steps=2, batch_size=2)
        with caplog.at_level(logging.WARNING):
            train_loop(model, examples, config, 2)
        relevant = [r for r in caplog.records if "single utterance" in r.message]
        assert 1 <= len(relevant) <= len(speakers)

    def test_parallel_variant_skips_fallback_warning(self, toy_corpus, toy_vocab, caplog):
        import scenetts.training as training_mod

        training_mod._warned_single.clear()
        torch.manual_seed(0)
        model = AcousticModel(
            ModelConfig.tiny(vocab_size=len(toy_vocab), variant=Variant.PARALLEL_SPK)
        )
        examples = prepare_examples([toy_corpus[0], toy_corpus[2]], toy_vocab, 0.6)
        with caplog.at_level(logging.WARNING):
            train_loop(model, examples, small_config(steps=2, batch_size=2), 2)
        assert not [r for r in caplog.records if "single utterance" in r.message]

    def test_nonpositive_steps_rejected(self, model, examples):
        with pytest.raises(ValueError):
            train_loop(model, examples, small_config(), 0)
