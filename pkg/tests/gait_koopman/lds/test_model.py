"""Tests for the LDS network."""

import math

import pytest
import torch

from gait_koopman.lds.model import LdsArchitecture, LdsModel


class TestLdsArchitecture:
    """Test LdsArchitecture validation."""

    def test_defaults(self):
        """Test the default 216 -> 216 -> 198 -> 180 layout."""
        arch = LdsArchitecture()
        assert arch.input_dim == 216
        assert arch.encoder_widths == (216, 198, 180)
        assert arch.latent_dim == 180
        assert arch.decoder_widths == (198, 216, 216)

    def test_latent_width_must_match_channels(self):
        """Test the last encoder width must be twice the channels."""
        with pytest.raises(ValueError) as exc_info:
            LdsArchitecture(encoder_widths=(216, 100), latent_channels=90)

        assert "latent_channels" in str(exc_info.value)

    def test_empty_encoder_rejected(self):
        """Test an encoder without layers is rejected."""
        with pytest.raises(ValueError):
            LdsArchitecture(encoder_widths=())


class TestLdsModel:
    """Test LdsModel construction and forward passes."""

    def test_layer_shapes(self, lds_model):
        """Test encoder, decoder and estimator dimensions."""
        encoder = [m for m in lds_model.encoder if isinstance(m, torch.nn.Linear)]
        decoder = [m for m in lds_model.decoder if isinstance(m, torch.nn.Linear)]
        assert [(m.in_features, m.out_features) for m in encoder] == [(216, 216), (216, 198), (198, 180)]
        assert [(m.in_features, m.out_features) for m in decoder] == [(180, 198), (198, 216), (216, 216)]
        assert lds_model.k_estimator.hidden_size == 180
        assert lds_model.k_readout.out_features == 180

    def test_parameters_are_float64(self, lds_model):
        """Test every parameter is double precision."""
        assert all(p.dtype == torch.float64 for p in lds_model.parameters())

    def test_param_groups(self, lds_model):
        """Test the named groups cover every parameter once."""
        groups = lds_model.param_groups()
        assert list(groups) == ["encoder", "decoder", "k_estimator"]
        assert sum(len(v) for v in groups.values()) == len(list(lds_model.parameters()))

    def test_zero_input_gives_bias_path(self, lds_model):
        """Test zero input with zero biases encodes to zero."""
        latent = lds_model.encode(torch.zeros(216, dtype=torch.float64))
        assert torch.all(latent == 0)

    def test_encode_is_deterministic(self, lds_model):
        """Test encoding twice gives bitwise-equal outputs."""
        x = torch.randn(5, 216, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        assert torch.equal(lds_model.encode(x), lds_model.encode(x))

    def test_seed_controls_initialization(self):
        """Test equal seeds give equal weights and different seeds differ."""
        a, b, c = LdsModel(seed=3), LdsModel(seed=3), LdsModel(seed=4)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)
        assert not torch.equal(a.encoder[0].weight, c.encoder[0].weight)

    def test_initialization_does_not_touch_global_rng(self):
        """Test construction leaves the global torch RNG state alone."""
        torch.manual_seed(123)
        expected = torch.rand(3)
        torch.manual_seed(123)
        LdsModel(seed=0)
        assert torch.equal(torch.rand(3), expected)

    def test_estimate_phases_range_and_shape(self, lds_model):
        """Test phases lie in (-pi, pi] for single and batched prefixes."""
        latents = torch.randn(4, 7, 180, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        phases = lds_model.estimate_phases(latents)
        assert phases.shape == (4, 90)
        assert torch.all(phases > -math.pi) and torch.all(phases <= math.pi)
        single = lds_model.estimate_phases(latents[0])
        assert single.shape == (90,)
        torch.testing.assert_close(single, phases[0])

    def test_descriptor(self, lds_model):
        """Test the descriptor records the architecture."""
        descriptor = lds_model.descriptor()
        assert descriptor["type"] == "lds"
        assert descriptor["latent_channels"] == 90
        assert list(descriptor["encoder_widths"]) == [216, 198, 180]
