"""Pydantic configuration models."""

import math
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class Nonlinearity(str, Enum):
    """Smooth activation used between convolutions."""
    GELU = "gelu"
    SOFTPLUS = "softplus"
    TANH = "tanh"


class Padding(str, Enum):
    """Convolution boundary handling."""
    ZEROS = "zeros"
    PERIODIC = "periodic"

    def to_torch(self) -> str:
        """Name of the matching `nn.Conv2d` padding_mode."""
        return {Padding.ZEROS: "zeros", Padding.PERIODIC: "circular"}[self]


class Similarity(str, Enum):
    """Prototype/feature similarity function."""
    COSINE = "cosine"
    LOG_DISTANCE = "log-distance"


class CamMethod(str, Enum):
    """Attribution method used to localize concepts of a vanilla CBM."""
    GRAD_CAM = "grad-cam"
    GRAD_CAM_PP = "grad-cam++"


class ContainmentTarget(str, Enum):
    """What must fall inside the predicted box for a hit."""
    POINT = "point"
    RECT = "rect"


class ModelKind(str, Enum):
    """Model families evaluated by the benchmark."""
    LINEAR_PROBE = "linear-probe"
    VANILLA = "vanilla"
    PROTO = "proto"


class AlignmentModule(str, Enum):
    """Auxiliary alignment losses available to the prototype CBM."""
    CLA = "cla"
    CIA = "cia"
    PA = "pa"


class PartSpec(BaseModel):
    """One object part of the synthetic generator."""

    name: str = Field(..., min_length=1, description="Part name, e.g. 'head'")
    shape: str = Field(..., description="Glyph drawn for this part")
    colors: list[str] = Field(..., min_length=1, description="Attribute vocabulary (fill colours)")

    @field_validator("shape")
    @classmethod
    def check_shape(cls, v: str) -> str:
        from .data.synthetic import GLYPHS

        if v not in GLYPHS:
            raise ValueError(f"unknown glyph '{v}', expected one of {sorted(GLYPHS)}")
        return v


def _default_parts() -> list[PartSpec]:
    colors = ["red", "lime", "blue"]
    return [
        PartSpec(name="head", shape="circle", colors=colors),
        PartSpec(name="wing", shape="triangle", colors=colors),
        PartSpec(name="body", shape="square", colors=colors),
        PartSpec(name="tail", shape="diamond", colors=colors),
    ]


class GeneratorSpec(BaseModel):
    """Parameters of the procedural part-annotated dataset."""

    image_size: int = Field(96, ge=16, description="Image height and width (H = W)")
    parts: list[PartSpec] = Field(default_factory=_default_parts, min_length=1)
    num_categories: int = Field(8, ge=1, description="Number of categories K")
    samples_per_category: int = Field(50, ge=0, description="Training samples per category")
    test_samples_per_category: int = Field(25, ge=0, description="Test samples per category")
    part_size: int = Field(20, ge=3, description="Side of each glyph's bounding square (px)")
    jitter_radius: int = Field(6, ge=0, description="Max placement offset from the layout anchor (px)")
    background_noise: float = Field(0.08, ge=0, le=0.5, description="Texture amplitude")
    seed: int = Field(0, description="Generator seed")

    @property
    def num_concepts(self) -> int:
        return sum(len(p.colors) for p in self.parts)

    @model_validator(mode="after")
    def check_categories(self) -> "GeneratorSpec":
        combos = math.prod(len(p.colors) for p in self.parts)
        if self.num_categories > combos:
            raise ValueError(
                f"num_categories={self.num_categories} exceeds the {combos} distinct "
                "attribute combinations"
            )
        return self


class FeatureExtractorConfig(BaseModel):
    """Convolutional feature extractor f."""

    in_channels: int = Field(3, ge=1)
    widths: list[int] = Field(default_factory=lambda: [32, 64, 64], min_length=1)
    strides: list[int] = Field(default_factory=lambda: [2, 2, 2], min_length=1)
    convs_per_stage: int = Field(2, ge=1)
    shallow_stage: int = Field(1, ge=1, description="1-based stage whose output is z_s")
    deep_stage: int = Field(3, ge=1, description="1-based stage whose output is z_d")
    nonlinearity: Nonlinearity = Nonlinearity.GELU
    padding: Padding = Padding.ZEROS
    seed: int = 0

    @field_validator("widths", "strides")
    @classmethod
    def check_positive(cls, v: list[int]) -> list[int]:
        if any(x <= 0 for x in v):
            raise ValueError(f"stage widths and strides must be positive, got {v}")
        return v

    @model_validator(mode="after")
    def check_taps(self) -> "FeatureExtractorConfig":
        if len(self.widths) != len(self.strides):
            raise ValueError("widths and strides must have one entry per stage")
        if not self.shallow_stage <= self.deep_stage <= len(self.widths):
            raise ValueError(
                f"need shallow_stage <= deep_stage <= {len(self.widths)}, "
                f"got {self.shallow_stage}, {self.deep_stage}"
            )
        return self

    @property
    def feature_dim(self) -> int:
        """Deep output dimension D."""
        return self.widths[self.deep_stage - 1]

    @property
    def shallow_dim(self) -> int:
        return self.widths[self.shallow_stage - 1]

    @property
    def total_stride(self) -> int:
        """Downsample factor from the input to z_d."""
        return math.prod(self.strides[: self.deep_stage])

    @property
    def shallow_ratio(self) -> int:
        """Integer r with H_s = r * H_z."""
        return math.prod(self.strides[self.shallow_stage : self.deep_stage])


class LossWeights(BaseModel):
    """Weights of the total objective and loss-shape flags."""

    concept: float = Field(1.0, ge=0)
    task: float = Field(1.0, ge=0)
    cla: float = Field(1.0, ge=0)
    cia: float = Field(1.0, ge=0)
    pa: float = Field(1.0, ge=0)
    div_margin: Optional[float] = Field(
        None, ge=0, description="Hinge margin delta of L_div; None means sqrt((H_z^2 + W_z^2) / 4)"
    )
    div_hinge: bool = Field(True, description="False restores the unbounded -||k_c - k_c'||^2")
    grp_pair_normalize: bool = Field(False, description="Normalise L_grp by pair count instead of T")
    cla_mean_normalize: bool = Field(False, description="Mean instead of sum over CLA matrix entries")
    cia_mean_normalize: bool = Field(False, description="Mean instead of sum over CIA feature-map entries")

    @field_validator("concept", "task", "cla", "cia", "pa")
    @classmethod
    def check_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("loss weights must be finite")
        return v


class BoxSpec(BaseModel):
    """Size of the fixed box r_c(x) and the containment target."""

    box_fraction: Optional[float] = Field(90 / 224, gt=0, le=1)
    box_size: Optional[int] = Field(None, ge=1, description="Absolute H_b = W_b in pixels")
    target: ContainmentTarget = ContainmentTarget.POINT

    def resolve(self, height: int, width: int) -> tuple[int, int]:
        """Return (H_b, W_b) for an image of the given size."""
        if self.box_size is not None:
            h_b = w_b = self.box_size
        else:
            h_b = max(1, round(self.box_fraction * height))
            w_b = max(1, round(self.box_fraction * width))
        if h_b > height or w_b > width:
            raise ValueError(f"box {h_b}x{w_b} does not fit a {height}x{width} image")
        return h_b, w_b


class TrainConfig(BaseModel):
    """Everything that determines one training run."""

    model: ModelKind = ModelKind.PROTO
    modules: list[AlignmentModule] = Field(default_factory=list)
    dataset: Optional[Path] = Field(None, description="Dataset directory; None generates synthetic data")
    cub_image_size: int = Field(224, ge=8, description="Side of CUB crops after resizing")
    generator: GeneratorSpec = Field(default_factory=GeneratorSpec)
    epochs: int = Field(18, ge=0)
    warmup_epochs: int = Field(5, ge=0)
    learning_rate: float = Field(1e-4, gt=0)
    prototype_learning_rate: Optional[float] = Field(
        None, gt=0, description="Learning rate of the prototype bank and its heads; None uses learning_rate"
    )
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)
    batch_size: int = Field(16, ge=1)
    num_prototypes: int = Field(64, ge=1, description="M")
    feature_dim: int = Field(64, ge=1, description="D")
    stage_widths: list[int] = Field(default_factory=lambda: [32, 64], description="Widths before the deep stage")
    nonlinearity: Nonlinearity = Nonlinearity.GELU
    cla_levels: int = Field(2, ge=1, description="E")
    top_n: int = Field(10, ge=1, description="N")
    similarity: Similarity = Similarity.COSINE
    cam_method: CamMethod = CamMethod.GRAD_CAM_PP
    loss: LossWeights = Field(default_factory=LossWeights)
    seed: int = 0

    @field_validator("modules")
    @classmethod
    def dedupe_modules(cls, v: list[AlignmentModule]) -> list[AlignmentModule]:
        order = list(AlignmentModule)
        return sorted(set(v), key=order.index)

    @model_validator(mode="after")
    def check_invariants(self) -> "TrainConfig":
        if self.warmup_epochs > self.epochs:
            raise ValueError(f"warmup_epochs={self.warmup_epochs} exceeds epochs={self.epochs}")
        if self.modules and self.model is not ModelKind.PROTO:
            raise ValueError("alignment modules require the prototype model")
        if self.top_n > self.num_prototypes:
            raise ValueError(f"top_n={self.top_n} exceeds num_prototypes={self.num_prototypes}")
        return self

    @property
    def variant(self) -> str:
        """Short name such as 'proto+cla+cia+pa'."""
        return "+".join([self.model.value, *(m.value for m in self.modules)])

    @classmethod
    def from_variant(cls, variant: str, **kwargs) -> "TrainConfig":
        """Build a config from a variant string such as 'proto+cla+pa'."""
        head, *mods = variant.strip().lower().split("+")
        return cls(model=ModelKind(head), modules=[AlignmentModule(m) for m in mods], **kwargs)

    def extractor_config(self, padding: Padding = Padding.ZEROS) -> FeatureExtractorConfig:
        """Feature extractor for this run; the deep stage is the last one."""
        widths = [*self.stage_widths, self.feature_dim]
        return FeatureExtractorConfig(
            widths=widths,
            strides=[2] * len(widths),
            shallow_stage=1,
            deep_stage=len(widths),
            nonlinearity=self.nonlinearity,
            padding=padding,
            seed=self.seed,
        )
