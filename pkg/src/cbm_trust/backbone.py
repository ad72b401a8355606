"""Small convolutional feature extractor f with a shallow and a deep tap."""

import math
from dataclasses import dataclass

import torch
from torch import nn

from .config import FeatureExtractorConfig, Nonlinearity
from .errors import ShapeError

_ACTIVATIONS = {
    Nonlinearity.GELU: nn.GELU,
    Nonlinearity.SOFTPLUS: nn.Softplus,
    Nonlinearity.TANH: nn.Tanh,
}


@dataclass
class FeatureMaps:
    """Shallow map z_s (B, D_s, H_s, W_s) and deep map z_d (B, D, H_z, W_z), channels first."""

    shallow: torch.Tensor
    deep: torch.Tensor

    def __len__(self) -> int:
        return self.deep.shape[0]


class FeatureExtractor(nn.Module):
    """Stacked conv stages; each stage downsamples once, then refines at stride 1."""

    def __init__(self, config: FeatureExtractorConfig) -> None:
        super().__init__()
        self.config = config
        act = _ACTIVATIONS[config.nonlinearity]
        padding_mode = config.padding.to_torch()

        stages = []
        in_ch = config.in_channels
        for width, stride in zip(config.widths[: config.deep_stage], config.strides[: config.deep_stage]):
            layers: list[nn.Module] = []
            for k in range(config.convs_per_stage):
                layers.append(
                    nn.Conv2d(
                        in_ch if k == 0 else width,
                        width,
                        kernel_size=3,
                        stride=stride if k == 0 else 1,
                        padding=1,
                        padding_mode=padding_mode,
                    )
                )
                layers.append(act())
            stages.append(nn.Sequential(*layers))
            in_ch = width
        self.stages = nn.ModuleList(stages)

    def convolutions(self) -> list[nn.Conv2d]:
        return [m for m in self.modules() if isinstance(m, nn.Conv2d)]

    def forward(self, images: torch.Tensor) -> FeatureMaps:
        if images.ndim != 4:
            raise ShapeError(f"expected a batch NCHW, got shape {tuple(images.shape)}")
        stride = self.config.total_stride
        h, w = images.shape[-2:]
        if h % stride or w % stride:
            raise ShapeError(f"input {h}x{w} is not divisible by the total downsample factor {stride}")

        x = images
        shallow = None
        for i, stage in enumerate(self.stages, 1):
            x = stage(x)
            if i == self.config.shallow_stage:
                shallow = x
        return FeatureMaps(shallow=shallow, deep=x)


def init_params(config: FeatureExtractorConfig) -> FeatureExtractor:
    """Build a feature extractor with seeded fan-in scaled weights.

    Conv weights ~ N(0, 2 / fan_in) with fan_in = in_channels * 3 * 3; biases are zero.
    """
    model = FeatureExtractor(config)
    gen = torch.Generator().manual_seed(config.seed)
    with torch.no_grad():
        for conv in model.convolutions():
            fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
            conv.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
            conv.bias.zero_()
    return model


def extract_features(model: FeatureExtractor, images: torch.Tensor) -> FeatureMaps:
    """Run f on a batch of NCHW images; batch order is preserved."""
    return model(images)
