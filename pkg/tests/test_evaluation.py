"""Prosody statistics and speaker-similarity identities."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenetts.evaluation import (
    embedding_similarity,
    mel_speaker_similarity,
    prosody_distance,
    speaker_similarity,
    track_statistics,
    voiced_values,
)

finite_track = st.lists(
    st.floats(min_value=-1e4, max_value=1e4, allow_nan=False),
    min_size=2,
    max_size=50,
)


class TestTrackStatistics:
    def test_oracle_1_2_3(self):
        stats = track_statistics([1.0, 2.0, 3.0])
        assert stats.mean == pytest.approx(2.0)
        assert stats.std == pytest.approx(np.sqrt(2.0 / 3.0))
        assert stats.skew == pytest.approx(0.0, abs=1e-12)
        # Population kurtosis of a symmetric three-point uniform: m4/m2^2.
        assert stats.kurt == pytest.approx(1.5)
        assert not stats.degenerate

    def test_normal_sample_kurtosis_near_three(self):
        rng = np.random.default_rng(0)
        stats = track_statistics(rng.normal(size=200_000))
        assert stats.kurt == pytest.approx(3.0, abs=0.1)
        assert stats.skew == pytest.approx(0.0, abs=0.05)

    def test_constant_track_degenerate(self):
        stats = track_statistics([5.0] * 10)
        assert stats.degenerate
        assert stats.std == 0.0
        assert stats.skew == 0.0
        assert stats.kurt == 0.0

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(ValueError):
            track_statistics([])
        with pytest.raises(ValueError):
            track_statistics([1.0, np.nan])

    @given(finite_track)
    @settings(max_examples=60)
    def test_permutation_invariance(self, values):
        rng = np.random.default_rng(1)
        shuffled = rng.permutation(values)
        a, b = track_statistics(values), track_statistics(shuffled)
        assert a.mean == pytest.approx(b.mean, rel=1e-12, abs=1e-12)
        assert a.std == pytest.approx(b.std, rel=1e-9, abs=1e-9)

    @given(finite_track, st.floats(min_value=-100, max_value=100))
    @settings(max_examples=60)
    def test_shift_leaves_shape_statistics(self, values, shift):
        a = track_statistics(values)
        b = track_statistics(np.asarray(values) + shift)
        assert b.mean == pytest.approx(a.mean + shift, rel=1e-9, abs=1e-6)
        assert b.std == pytest.approx(a.std, rel=1e-9, abs=1e-9)
        if not a.degenerate and a.std > 1e-3:
            assert b.skew == pytest.approx(a.skew, rel=1e-6, abs=1e-6)
            assert b.kurt == pytest.approx(a.kurt, rel=1e-6, abs=1e-6)

    @given(finite_track, st.floats(min_value=0.1, max_value=50))
    @settings(max_examples=40)
    def test_scale_acts_on_mean_and_std_only(self, values, scale):
        a = track_statistics(values)
        b = track_statistics(np.asarray(values) * scale)
        assert b.mean == pytest.approx(a.mean * scale, rel=1e-9, abs=1e-9)
        assert b.std == pytest.approx(a.std * scale, rel=1e-6, abs=1e-9)


class TestVoicedValues:
    def test_default_positive_mask(self):
        out = voiced_values(np.array([0.0, 120.0, 0.0, 230.0]))
        assert out.tolist() == [120.0, 230.0]

    def test_explicit_mask(self):
        out = voiced_values(np.array([50.0, 60.0]), np.array([False, True]))
        assert out.tolist() == [60.0]


class TestProsodyDistance:
    def test_identity_is_exact_zero(self):
        tracks = [np.array([100.0, 120.0, 130.0]), np.array([90.0, 95.0, 200.0, 210.0])]
        d = prosody_distance(tracks, tracks)
        assert (d.mean, d.std, d.skew, d.kurt) == (0.0, 0.0, 0.0, 0.0)

    def test_symmetry(self):
        a = [np.array([100.0, 150.0, 130.0])]
        b = [np.array([105.0, 140.0, 160.0])]
        assert prosody_distance(a, b) == prosody_distance(b, a)

    def test_mean_shift_measured_exactly(self):
        a = [np.array([100.0, 120.0, 140.0])]
        b = [np.asarray(a[0]) + 25.0]
        d = prosody_distance(a, b)
        assert d.mean == pytest.approx(25.0)
        assert d.std == pytest.approx(0.0, abs=1e-9)

    def test_degenerate_flag_propagates(self):
        a = [np.array([100.0, 100.0])]
        b = [np.array([100.0, 120.0])]
        assert prosody_distance(a, b).degenerate

    def test_pair_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            prosody_distance([np.ones(3)], [np.ones(3), np.ones(3)])
        with pytest.raises(ValueError):
            prosody_distance([], [])


class TestSpeakerSimilarity:
    def test_embedding_cosine_oracle(self):
        assert embedding_similarity(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0
        assert embedding_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
        assert embedding_similarity(np.array([1.0, 0.0]), np.array([-2.0, 0.0])) == -1.0

    def test_zero_embedding_rejected(self):
        with pytest.raises(ValueError):
            embedding_similarity(np.zeros(4), np.ones(4))

    def test_self_similarity_is_one(self, tiny_model, toy_corpus):
        wav = toy_corpus[0].waveform
        sim = speaker_similarity(wav, wav, tiny_model)
        assert sim == pytest.approx(1.0, abs=1e-6)

    def test_mel_self_similarity_is_one(self, tiny_model, toy_corpus):
        mel = toy_corpus[0].mel
        sim = mel_speaker_similarity(mel, mel, tiny_model)
        assert sim == pytest.approx(1.0, abs=1e-6)

    def test_resamples_foreign_rate(self, tiny_model, toy_corpus):
        from scenetts.features import resample

        wav = toy_corpus[0].waveform
        downsampled = resample(wav, 8000)
        sim = speaker_similarity(wav, downsampled, tiny_model)
        assert -1.0 <= sim <= 1.0
