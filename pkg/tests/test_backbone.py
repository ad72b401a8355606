"""Tests for the convolutional feature extractor."""

import pytest
import torch
from pydantic import ValidationError
from torch.autograd import gradcheck
from torch.func import functional_call

from cbm_trust.backbone import extract_features, init_params
from cbm_trust.config import FeatureExtractorConfig, Nonlinearity, Padding, TrainConfig
from cbm_trust.errors import ShapeError


class TestShapes:
    def test_default_extractor_on_96px(self):
        model = init_params(FeatureExtractorConfig())
        features = extract_features(model, torch.rand(2, 3, 96, 96))
        assert features.deep.shape == (2, 64, 12, 12)
        assert features.shallow.shape == (2, 32, 48, 48)
        assert len(features) == 2

    def test_batch_order_preserved(self):
        model = init_params(FeatureExtractorConfig(widths=[4, 6], strides=[2, 2], deep_stage=2))
        images = torch.rand(3, 3, 16, 16)
        batched = model(images).deep
        for i in range(3):
            torch.testing.assert_close(batched[i], model(images[i : i + 1]).deep[0])

    def test_indivisible_input(self):
        model = init_params(FeatureExtractorConfig())
        with pytest.raises(ShapeError, match="downsample"):
            model(torch.rand(1, 3, 30, 30))

    def test_unbatched_input(self):
        model = init_params(FeatureExtractorConfig())
        with pytest.raises(ShapeError):
            model(torch.rand(3, 32, 32))

    def test_train_config_extractor(self):
        config = TrainConfig(stage_widths=[4, 8], feature_dim=8, num_prototypes=8, top_n=2)
        extractor = config.extractor_config()
        assert extractor.feature_dim == 8
        assert extractor.total_stride == 8
        assert extractor.shallow_ratio == 4


class TestInitialization:
    def test_same_seed_identical_parameters(self):
        a = init_params(FeatureExtractorConfig(seed=5)).state_dict()
        b = init_params(FeatureExtractorConfig(seed=5)).state_dict()
        for key in a:
            assert torch.equal(a[key], b[key])

    def test_different_seed_differs(self):
        a = init_params(FeatureExtractorConfig(seed=5)).state_dict()
        b = init_params(FeatureExtractorConfig(seed=6)).state_dict()
        assert any(not torch.equal(a[k], b[k]) for k in a)

    def test_weight_variance_matches_fan_in(self):
        model = init_params(FeatureExtractorConfig(seed=7))
        checked = 0
        for conv in model.convolutions():
            if conv.weight.numel() < 5000:
                continue
            fan_in = conv.in_channels * 3 * 3
            assert float(conv.weight.var()) == pytest.approx(2.0 / fan_in, rel=0.1)
            checked += 1
        assert checked >= 3

    def test_biases_are_zero(self):
        model = init_params(FeatureExtractorConfig())
        for conv in model.convolutions():
            assert not conv.bias.any()

    def test_zero_width_stage(self):
        with pytest.raises(ValidationError):
            FeatureExtractorConfig(widths=[32, 0, 64])

    def test_taps_out_of_order(self):
        with pytest.raises(ValidationError):
            FeatureExtractorConfig(shallow_stage=3, deep_stage=2)


class TestGradients:
    @pytest.mark.parametrize("nonlinearity", list(Nonlinearity))
    @pytest.mark.parametrize("padding", list(Padding))
    def test_gradcheck(self, nonlinearity, padding):
        """Analytic input gradients of every stage configuration match finite differences."""
        config = FeatureExtractorConfig(
            widths=[2, 3], strides=[2, 1], deep_stage=2, nonlinearity=nonlinearity, padding=padding, seed=1
        )
        model = init_params(config).double()
        images = torch.rand(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)

        def deep(x):
            return model(x).deep

        assert gradcheck(deep, (images,), eps=1e-6, atol=1e-5, rtol=1e-4)

    @pytest.mark.parametrize("nonlinearity", list(Nonlinearity))
    def test_parameter_gradcheck(self, nonlinearity):
        """Analytic parameter gradients on a 16x16 input match central differences."""
        config = FeatureExtractorConfig(widths=[2, 3], strides=[2, 2], deep_stage=2, nonlinearity=nonlinearity, seed=2)
        model = init_params(config).double()
        names = [name for name, _ in model.named_parameters()]
        params = tuple(p.detach().clone().requires_grad_(True) for p in model.parameters())
        images = torch.rand(1, 3, 16, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(0))

        def deep(*values):
            return functional_call(model, dict(zip(names, values)), (images,)).deep

        assert gradcheck(deep, params, eps=1e-6, atol=1e-5, rtol=1e-4)


class TestPeriodicPadding:
    @pytest.mark.parametrize(("dy", "dx"), [(8, 0), (0, 16), (8, 24)])
    def test_translation_covariance(self, dy, dx):
        """Rolling the input by a multiple of the total stride rolls z_d by the quotient."""
        config = FeatureExtractorConfig(widths=[4, 8, 8], strides=[2, 2, 2], padding=Padding.PERIODIC, seed=3)
        model = init_params(config)
        images = torch.rand(2, 3, 32, 32, generator=torch.Generator().manual_seed(1))
        stride = config.total_stride
        with torch.no_grad():
            shifted = model(torch.roll(images, shifts=(dy, dx), dims=(-2, -1))).deep
            expected = torch.roll(model(images).deep, shifts=(dy // stride, dx // stride), dims=(-2, -1))
        assert float((shifted - expected).abs().max()) < 1e-5

    def test_zero_padding_is_not_covariant(self):
        config = FeatureExtractorConfig(widths=[4, 8, 8], strides=[2, 2, 2], seed=3)
        model = init_params(config)
        images = torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(1))
        with torch.no_grad():
            shifted = model(torch.roll(images, shifts=8, dims=-1)).deep
            expected = torch.roll(model(images).deep, shifts=1, dims=-1)
        assert float((shifted - expected).abs().max()) > 1e-3
