"""Shared fixtures: a tiny synthetic dataset, a matching training config and a CUB-format tree."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from cbm_trust import settings
from cbm_trust.config import GeneratorSpec, TrainConfig
from cbm_trust.data import generate_synthetic_dataset
from cbm_trust.data.types import Concept, ConceptSchema, Dataset, ImageSample, Part, PartAnnotation, Split


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Every test writes its runs under its own tmp_path."""
    monkeypatch.setenv("CBM_TRUST_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.delenv("CBM_TRUST_NUM_THREADS", raising=False)
    monkeypatch.setattr(settings, "_settings", None)


@pytest.fixture(scope="session")
def tiny_spec() -> GeneratorSpec:
    """4 parts x 3 colours on 32 px images: a 4x4 deep grid with the default stride of 8."""
    return GeneratorSpec(
        image_size=32,
        part_size=8,
        jitter_radius=2,
        num_categories=4,
        samples_per_category=3,
        test_samples_per_category=2,
        seed=3,
    )


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec) -> Dataset:
    return generate_synthetic_dataset(tiny_spec)


@pytest.fixture
def tiny_config(tiny_spec) -> TrainConfig:
    return TrainConfig(
        model="proto",
        modules=["cla", "cia", "pa"],
        generator=tiny_spec,
        epochs=2,
        warmup_epochs=1,
        learning_rate=1e-3,
        batch_size=4,
        num_prototypes=8,
        feature_dim=8,
        stage_widths=[4, 8],
        top_n=2,
        seed=0,
    )


def make_sample(
    sample_id: str,
    labels: list[int],
    parts: list[PartAnnotation],
    size: int = 8,
    category: int = 0,
    split: Split = Split.TEST,
    fill: int = 0,
) -> ImageSample:
    return ImageSample(
        sample_id=sample_id,
        pixels=np.full((size, size, 3), fill, dtype=np.uint8),
        concept_labels=np.asarray(labels, dtype=np.uint8),
        category=category,
        parts=tuple(parts),
        split=split,
    )


def two_part_schema(extra_concepts: int = 0) -> ConceptSchema:
    """Concept 0 on part 0 (head), concept 1 on part 1 (wing), extras on part 0."""
    concepts = [
        Concept(concept_id=0, part_id=0, label="head::red"),
        Concept(concept_id=1, part_id=1, label="wing::blue"),
    ]
    for i in range(extra_concepts):
        concepts.append(Concept(concept_id=2 + i, part_id=0, label=f"head::extra{i}"))
    return ConceptSchema(
        concepts=tuple(concepts),
        parts=(Part(part_id=0, name="head"), Part(part_id=1, name="wing")),
    )


@pytest.fixture
def point_dataset() -> Dataset:
    """Two 8x8 test images; head at (1, 1) / (2, 2), wing at (6, 6) in both."""
    samples = (
        make_sample("a", [1, 1], [PartAnnotation.point(0, 1, 1), PartAnnotation.point(1, 6, 6)]),
        make_sample("b", [1, 1], [PartAnnotation.point(0, 2, 2), PartAnnotation.point(1, 6, 6)]),
    )
    return Dataset(samples=samples, schema=two_part_schema(), num_categories=1, image_size=8)


def _write(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines))


@pytest.fixture
def cub_root(tmp_path) -> Path:
    """Two 128x128 images of two classes with beak (part 2) and crown (part 5) annotations.

    Attribute 1 is a beak attribute, attribute 5 a crown attribute, so concept 0 is
    attribute 1 and concept 1 is attribute 5.
    """
    root = tmp_path / "CUB_200_2011"
    for rel, shade in (("001.Albatross/a.png", 60), ("002.Auklet/b.png", 180)):
        path = root / "images" / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.full((128, 128, 3), shade, dtype=np.uint8)).save(path)

    _write(root / "images.txt", ["1 001.Albatross/a.png", "2 002.Auklet/b.png"])
    _write(root / "bounding_boxes.txt", ["1 0 0 128 128", "2 0 0 128 128"])
    _write(root / "train_test_split.txt", ["1 1", "2 0"])
    _write(root / "image_class_labels.txt", ["1 1", "2 2"])
    _write(
        root / "parts" / "part_locs.txt",
        ["1 2 60.5 90.0 1", "1 5 64.0 20.0 1", "2 2 30.0 40.0 1", "2 5 0.0 0.0 0"],
    )
    _write(
        root / "attributes" / "attributes.txt",
        ["1 has_bill_shape::dagger", "2 has_size::small", "5 has_crown_color::blue"],
    )
    _write(root / "attributes" / "attribute_part_map.txt", ["1 2", "5 5"])
    _write(
        root / "attributes" / "image_attribute_labels.txt",
        ["1 5 1 3 10.2", "1 1 0 3 4.0", "2 1 1 4 2.5", "2 5 1 2 1.0"],
    )
    return root
