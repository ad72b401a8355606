"""Dataset domain types: concept schema, part annotations, samples, datasets."""

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..utils import Rect, sha256_bytes


class Split(str, Enum):
    """Dataset split tag."""
    TRAIN = "train"
    TEST = "test"


class Part(BaseModel):
    """An object part that concepts can refer to."""

    model_config = ConfigDict(frozen=True)

    part_id: int
    name: str


class Concept(BaseModel):
    """A binary attribute attached to exactly one part."""

    model_config = ConfigDict(frozen=True)

    concept_id: int = Field(..., ge=0, description="Contiguous index into concept vectors")
    part_id: int
    label: str = Field(..., description="Human-readable attribute, e.g. 'head::red'")
    source_id: int | None = Field(None, description="Id in the originating annotation files")


class ConceptSchema(BaseModel):
    """Ordered concepts and parts shared by every sample of a dataset."""

    model_config = ConfigDict(frozen=True)

    concepts: tuple[Concept, ...]
    parts: tuple[Part, ...]

    @model_validator(mode="after")
    def check_consistency(self) -> "ConceptSchema":
        ids = [c.concept_id for c in self.concepts]
        if ids != list(range(len(ids))):
            raise ValueError("concept ids must be 0..C-1 in order")
        part_ids = [p.part_id for p in self.parts]
        if len(set(part_ids)) != len(part_ids):
            raise ValueError("duplicate part ids")
        known = set(part_ids)
        for c in self.concepts:
            if c.part_id not in known:
                raise ValueError(f"concept {c.concept_id} refers to unknown part {c.part_id}")
        return self

    @property
    def num_concepts(self) -> int:
        return len(self.concepts)

    @property
    def groups(self) -> list[list[int]]:
        return concept_part_groups(self)

    def part_of(self, concept_id: int) -> int:
        return self.concepts[concept_id].part_id

    def part_name(self, part_id: int) -> str:
        for p in self.parts:
            if p.part_id == part_id:
                return p.name
        raise KeyError(part_id)

    def schema_hash(self) -> str:
        """Stable hash used to pair checkpoints with datasets."""
        return sha256_bytes(self.model_dump_json().encode())


def concept_part_groups(schema: ConceptSchema) -> list[list[int]]:
    """Partition concept ids by part.

    Groups are ordered by ascending part_id and concepts by ascending id within a group.
    Only parts that own at least one concept produce a group, so len(result) == T.
    """
    by_part: dict[int, list[int]] = {}
    for concept in schema.concepts:
        by_part.setdefault(concept.part_id, []).append(concept.concept_id)
    return [sorted(by_part[pid]) for pid in sorted(by_part)]


class PartAnnotation(BaseModel):
    """Ground-truth location of one part in one image, in pixels (row, col)."""

    model_config = ConfigDict(frozen=True)

    part_id: int
    center: tuple[float, float]
    region: tuple[float, float, float, float] = Field(
        ..., description="(top, left, bottom, right), closed; degenerate for point annotations"
    )
    visible: bool = True

    @model_validator(mode="after")
    def check_center(self) -> "PartAnnotation":
        rect = self.rect
        if not rect.is_degenerate and not rect.contains_point(*self.center):
            raise ValueError(f"part {self.part_id}: center {self.center} outside region {self.region}")
        return self

    @property
    def rect(self) -> Rect:
        return Rect(*self.region)

    @classmethod
    def point(cls, part_id: int, row: float, col: float, visible: bool = True) -> "PartAnnotation":
        return cls(part_id=part_id, center=(row, col), region=(row, col, row, col), visible=visible)


@dataclass(frozen=True, eq=False)
class ImageSample:
    """One image with its concept labels, category and part annotations.

    Pixels are stored as uint8 so that lossless files reproduce them exactly; `image`
    exposes them as reals in [0, 1].
    """

    sample_id: str
    pixels: np.ndarray
    concept_labels: np.ndarray
    category: int
    parts: tuple[PartAnnotation, ...]
    split: Split = Split.TRAIN

    def __post_init__(self) -> None:
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"{self.sample_id}: pixels must be uint8 HxWx3")
        self.pixels.setflags(write=False)
        self.concept_labels.setflags(write=False)

    @property
    def image(self) -> np.ndarray:
        return self.pixels.astype(np.float32) / 255.0

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def part(self, part_id: int) -> PartAnnotation | None:
        for p in self.parts:
            if p.part_id == part_id:
                return p
        return None

    def present_concepts(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.concept_labels)]

    def with_pixels(self, pixels: np.ndarray) -> "ImageSample":
        """Copy of this sample with replaced pixels."""
        return ImageSample(
            sample_id=self.sample_id,
            pixels=pixels,
            concept_labels=self.concept_labels,
            category=self.category,
            parts=self.parts,
            split=self.split,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageSample):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.category == other.category
            and self.split == other.split
            and self.parts == other.parts
            and np.array_equal(self.pixels, other.pixels)
            and np.array_equal(self.concept_labels, other.concept_labels)
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of samples sharing one schema and one image size."""

    samples: tuple[ImageSample, ...]
    schema: ConceptSchema
    num_categories: int
    image_size: int
    source: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("sample ids must be unique")
        for s in self.samples:
            if s.pixels.shape[:2] != (self.image_size, self.image_size):
                raise ValueError(f"{s.sample_id}: expected {self.image_size}px square image")
            if s.concept_labels.shape != (self.schema.num_concepts,):
                raise ValueError(f"{s.sample_id}: expected {self.schema.num_concepts} concept bits")
            if not 0 <= s.category < self.num_categories:
                raise ValueError(f"{s.sample_id}: category {s.category} out of range")
            for c in s.present_concepts():
                part = s.part(self.schema.part_of(c))
                if part is None or not part.visible:
                    raise ValueError(f"{s.sample_id}: concept {c} is present but its part is not visible")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[ImageSample]:
        return iter(self.samples)

    def __getitem__(self, idx: int) -> ImageSample:
        return self.samples[idx]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.num_categories == other.num_categories
            and self.image_size == other.image_size
            and self.source == other.source
            and len(self.samples) == len(other.samples)
            and all(a == b for a, b in zip(self.samples, other.samples))
        )

    @property
    def groups(self) -> list[list[int]]:
        return concept_part_groups(self.schema)

    def split(self, split: Split | str) -> "Dataset":
        """Subset with one split tag."""
        split = Split(split)
        return self.subset([s for s in self.samples if s.split == split])

    def subset(self, samples: list[ImageSample]) -> "Dataset":
        return Dataset(
            samples=tuple(samples),
            schema=self.schema,
            num_categories=self.num_categories,
            image_size=self.image_size,
            source=self.source,
        )

    def tensors(
        self, indices: list[int] | None = None, dtype: torch.dtype = torch.float32
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Stack (images NCHW, concept labels, categories) for the given indices."""
        chosen = self.samples if indices is None else [self.samples[i] for i in indices]
        return samples_to_tensors(chosen, dtype=dtype)

    def fingerprint(self) -> str:
        """SHA-256 over the manifest text and every pixel buffer."""
        from .io import build_manifest

        manifest = build_manifest(self)
        chunks = [json.dumps(manifest.model_dump(mode="json"), sort_keys=True).encode()]
        chunks.extend(s.pixels.tobytes() for s in self.samples)
        return sha256_bytes(*chunks)


def samples_to_tensors(
    samples: list[ImageSample] | tuple[ImageSample, ...], dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Stack samples into (images NCHW in [0,1], concept labels, categories)."""
    if not samples:
        raise ValueError("no samples to stack")
    pixels = np.stack([s.pixels for s in samples])
    images = torch.from_numpy(pixels).to(dtype).div_(255.0).permute(0, 3, 1, 2).contiguous()
    concepts = torch.from_numpy(np.stack([s.concept_labels for s in samples])).to(dtype)
    categories = torch.tensor([s.category for s in samples], dtype=torch.long)
    return images, concepts, categories
