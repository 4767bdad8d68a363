"""Tests for latent states, Koopman operators and forecasting."""

import math

import numpy as np
import pytest
import torch

from gait_koopman.data.synthetic import SubjectSpec, analytic_latents, analytic_operator
from gait_koopman.lds.koopman import (
    KoopmanOperator,
    LatentState,
    apply_koopman,
    decode,
    dominant_channel,
    encode,
    encode_sequence,
    estimate_koopman,
    forecast,
    prefix_length,
    rotate_latents,
    summarize_sequence,
)
from gait_koopman.pose.types import PoseFrame, PoseSequence, flatten_frame


class TestLatentState:
    """Test LatentState."""

    def test_from_vector_splits_halves(self):
        """Test the first half is real and the second imaginary."""
        z = LatentState.from_vector([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(z.re, [1.0, 2.0])
        np.testing.assert_array_equal(z.im, [3.0, 4.0])
        assert z.channels == 2
        np.testing.assert_array_equal(z.as_complex(), [1 + 3j, 2 + 4j])

    def test_rejects_mismatched_parts(self):
        """Test unequal halves are rejected."""
        with pytest.raises(ValueError):
            LatentState(np.zeros(2), np.zeros(3))

    def test_rejects_non_finite(self):
        """Test NaN parts are rejected."""
        with pytest.raises(ValueError):
            LatentState(np.array([np.nan]), np.array([0.0]))


class TestKoopmanOperator:
    """Test KoopmanOperator."""

    def test_unit_modulus(self):
        """Test every diagonal entry has modulus 1."""
        K = KoopmanOperator(np.linspace(-3.0, 3.0, 9))
        np.testing.assert_allclose(K.moduli(), np.ones(9), atol=1e-15)

    def test_phases_are_wrapped(self):
        """Test phases outside (-pi, pi] are wrapped and -pi maps to pi."""
        K = KoopmanOperator(np.array([1.5 * math.pi, -math.pi, math.pi, 0.5]))
        np.testing.assert_allclose(K.phases, [-0.5 * math.pi, math.pi, math.pi, 0.5], atol=1e-12)

    def test_identity(self):
        """Test the identity operator has zero phases."""
        np.testing.assert_array_equal(KoopmanOperator.identity(3).phases, np.zeros(3))


class TestApplyKoopman:
    """Test apply_koopman."""

    def test_zero_phases_leave_state_unchanged(self):
        """Test the identity operator for any number of steps."""
        z = LatentState(np.array([0.3, -1.2]), np.array([2.0, 0.5]))
        for steps in (0, 1, 7):
            result = apply_koopman(KoopmanOperator.identity(2), z, steps)
            np.testing.assert_array_equal(result.re, z.re)
            np.testing.assert_array_equal(result.im, z.im)

    def test_phase_pi_negates(self):
        """Test exp(i pi) maps 1 + 0i to -1 + 0i."""
        result = apply_koopman(KoopmanOperator(np.array([math.pi])), LatentState(np.ones(1), np.zeros(1)), 1)
        np.testing.assert_allclose(result.re, [-1.0], atol=1e-15)
        np.testing.assert_allclose(result.im, [0.0], atol=1e-15)

    def test_zero_steps_is_identity(self):
        """Test steps = 0 returns the state unchanged."""
        z = LatentState(np.array([0.3]), np.array([0.4]))
        result = apply_koopman(KoopmanOperator(np.array([1.0])), z, 0)
        np.testing.assert_array_equal(result.to_vector(), z.to_vector())

    def test_preserves_norm(self):
        """Test unit-modulus operators preserve the complex norm."""
        rng = np.random.default_rng(0)
        z = LatentState(rng.normal(size=5), rng.normal(size=5))
        result = apply_koopman(KoopmanOperator(rng.uniform(-3, 3, 5)), z, 11)
        assert result.norm() == pytest.approx(z.norm(), rel=1e-12)

    def test_norm_after_a_million_steps(self):
        """Test a million applications change the latent norm by less than 1e-9."""
        rng = np.random.default_rng(3)
        z = LatentState(rng.normal(size=90), rng.normal(size=90))
        result = apply_koopman(KoopmanOperator(rng.uniform(-math.pi, math.pi, 90)), z, 10**6)
        assert abs(result.norm() - z.norm()) < 1e-9

    def test_steps_compose(self):
        """Test applying a then b steps equals applying a + b steps."""
        rng = np.random.default_rng(4)
        z = LatentState(rng.normal(size=6), rng.normal(size=6))
        K = KoopmanOperator(rng.uniform(-3, 3, 6))
        for a, b in [(0, 5), (3, 4), (1000, 2345)]:
            composed = apply_koopman(K, apply_koopman(K, z, a), b)
            np.testing.assert_allclose(composed.to_vector(), apply_koopman(K, z, a + b).to_vector(), atol=1e-10)

    def test_negative_steps_raise(self):
        """Test negative steps are rejected."""
        with pytest.raises(ValueError):
            apply_koopman(KoopmanOperator.identity(1), LatentState(np.ones(1), np.zeros(1)), -1)

    def test_channel_mismatch_raises(self):
        """Test operator and state must agree on channels."""
        with pytest.raises(ValueError):
            apply_koopman(KoopmanOperator.identity(2), LatentState(np.ones(1), np.zeros(1)), 1)

    def test_matches_tensor_rotation(self):
        """Test rotate_latents agrees with apply_koopman."""
        rng = np.random.default_rng(1)
        z = LatentState(rng.normal(size=4), rng.normal(size=4))
        K = KoopmanOperator(rng.uniform(-3, 3, 4))
        rotated = rotate_latents(
            torch.from_numpy(z.to_vector()), torch.from_numpy(K.phases.copy()), 3.0
        )
        np.testing.assert_allclose(rotated.numpy(), apply_koopman(K, z, 3).to_vector(), atol=1e-12)

    def test_analytic_orbit(self):
        """Test the analytic operator advances the analytic latents by one frame."""
        spec = SubjectSpec.random("s", 0.2, seed=0)
        latents = analytic_latents(spec, 10)
        K = analytic_operator(spec)
        for i in range(9):
            nxt = apply_koopman(K, LatentState.from_vector(latents[i]), 1)
            np.testing.assert_allclose(nxt.to_vector(), latents[i + 1], atol=1e-12)


class TestPrefixLength:
    """Test prefix_length."""

    def test_ceil_half(self):
        """Test the prefix is ceil(N / 2)."""
        assert [prefix_length(n) for n in (1, 2, 3, 4, 5, 150)] == [1, 1, 2, 2, 3, 75]


class TestEstimateKoopman:
    """Test estimate_koopman."""

    def test_depends_on_order(self, lds_model, small_population):
        """Test reversing the latent states changes the estimate."""
        latents = encode_sequence(lds_model, small_population.items[0].sequence)[:8]
        forward = estimate_koopman(lds_model, latents)
        backward = estimate_koopman(lds_model, latents[::-1])
        np.testing.assert_allclose(forward.moduli(), 1.0, atol=1e-15)
        assert np.abs(forward.phases - backward.phases).max() > 1e-6


class TestEncodeDecode:
    """Test the single-frame wrappers around the network."""

    def test_encode_decode_shapes(self, lds_model):
        """Test a frame encodes to 90 channels and decodes to 216 values."""
        z = encode(lds_model, flatten_frame(PoseFrame(np.zeros((24, 3)))))
        assert z.channels == 90
        assert decode(lds_model, z).shape == (216,)

    def test_encode_rejects_non_finite(self, lds_model):
        """Test NaN input is rejected."""
        with pytest.raises(ValueError):
            encode(lds_model, np.full(216, np.nan))

    def test_decode_rejects_wrong_channels(self, lds_model):
        """Test a latent with the wrong channel count is rejected."""
        with pytest.raises(ValueError):
            decode(lds_model, LatentState(np.zeros(3), np.zeros(3)))

    def test_estimate_koopman_empty_raises(self, lds_model):
        """Test estimation from no latents is rejected."""
        with pytest.raises(ValueError):
            estimate_koopman(lds_model, [])

    def test_estimate_koopman_accepts_states_or_array(self, lds_model, small_population):
        """Test LatentState lists and (T, 180) arrays give the same operator."""
        latents = encode_sequence(lds_model, small_population.items[0].sequence)[:4]
        from_array = estimate_koopman(lds_model, latents)
        from_states = estimate_koopman(lds_model, [LatentState.from_vector(v) for v in latents])
        np.testing.assert_array_equal(from_array.phases, from_states.phases)

    def test_summarize_sequence_uses_prefix(self, lds_model, small_population):
        """Test the summary is frame 1's latent and K from the first ceil(N/2) frames."""
        sequence = small_population.items[0].sequence
        z1, K = summarize_sequence(lds_model, sequence)
        latents = encode_sequence(lds_model, sequence)
        np.testing.assert_array_equal(z1.to_vector(), latents[0])
        expected = estimate_koopman(lds_model, latents[: prefix_length(len(sequence))])
        np.testing.assert_array_equal(K.phases, expected.phases)


class TestForecast:
    """Test forecast."""

    def test_zero_frames(self, lds_model, small_population):
        """Test m = 0 returns no frames."""
        assert forecast(lds_model, small_population.items[0].sequence, 0) == []

    def test_frame_count_and_type(self, lds_model, small_population):
        """Test m frames of canonical poses are returned."""
        frames = forecast(lds_model, small_population.items[0].sequence, 5)
        assert len(frames) == 5
        assert all(isinstance(f, PoseFrame) for f in frames)
        assert all(np.all(np.linalg.norm(f.joints, axis=1) <= math.pi + 1e-12) for f in frames)

    def test_deterministic(self, lds_model, small_population):
        """Test repeated forecasts are identical."""
        sequence = small_population.items[0].sequence
        a = forecast(lds_model, sequence, 3)
        b = forecast(lds_model, sequence, 3)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa.joints, fb.joints)

    def test_prefix_of_longer_forecast(self, lds_model, small_population):
        """Test the first k frames do not depend on m."""
        sequence = small_population.items[0].sequence
        short = forecast(lds_model, sequence, 2)
        longer = forecast(lds_model, sequence, 6)
        for fa, fb in zip(short, longer[:2]):
            np.testing.assert_allclose(fa.joints, fb.joints, atol=1e-12)

    def test_anchor_options(self, lds_model, small_population):
        """Test both anchors are accepted and unknown anchors rejected."""
        sequence = small_population.items[0].sequence
        assert len(forecast(lds_model, sequence, 2, anchor="last")) == 2
        with pytest.raises(ValueError):
            forecast(lds_model, sequence, 2, anchor="middle")

    def test_short_sequence_raises(self, lds_model):
        """Test a 1-frame sequence cannot be forecast."""
        with pytest.raises(ValueError):
            forecast(lds_model, PoseSequence(np.zeros((1, 24, 3))), 3)

    def test_negative_length_raises(self, lds_model, small_population):
        """Test a negative forecast length is rejected."""
        with pytest.raises(ValueError):
            forecast(lds_model, small_population.items[0].sequence, -1)


class TestDominantChannel:
    """Test dominant_channel."""

    def test_picks_largest_oscillation(self):
        """Test the channel with the largest rotation radius is chosen."""
        t = np.arange(40)[:, None]
        radii = np.array([0.5, 2.0, 1.0])
        angle = t * np.array([0.1, 0.2, 0.3])
        latents = np.concatenate([radii * np.cos(angle), radii * np.sin(angle)], axis=1)
        K = KoopmanOperator(np.array([0.1, 0.2, 0.3]))
        assert dominant_channel(latents, K) == (1, pytest.approx(0.2))

    def test_static_offset_does_not_dominate(self):
        """Test a constant channel loses to a small rotating one."""
        t = np.arange(60)
        latents = np.zeros((60, 6))
        latents[:, 0] = 3.0
        latents[:, 3] = 4.0
        latents[:, 2] = 0.2 * np.cos(0.25 * t)
        latents[:, 5] = 0.2 * np.sin(0.25 * t)
        K = KoopmanOperator(np.array([0.05, 0.1, 0.25]))
        assert dominant_channel(latents, K) == (2, pytest.approx(0.25))
