"""On-disk dataset format: manifest.json plus one PNG per sample."""

import logging
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, ValidationError

from ..errors import IngestionError
from .types import ConceptSchema, Dataset, ImageSample, PartAnnotation, Split

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
IMAGES_DIR = "images"
FORMAT_VERSION = 1


class SampleRecord(BaseModel):
    """Manifest entry for one sample."""

    sample_id: str
    split: Split
    category: int
    concept_labels: list[int] = Field(..., description="Bit vector of length C")
    parts: list[PartAnnotation]
    image: str = Field(..., description="Path relative to the dataset root")


class DatasetManifest(BaseModel):
    """Everything about a dataset except its pixels."""

    format_version: int = FORMAT_VERSION
    concept_schema: ConceptSchema
    num_categories: int
    image_size: int
    source: dict = Field(default_factory=dict, description="Generator echo or ingestion source")
    samples: list[SampleRecord]


def build_manifest(dataset: Dataset) -> DatasetManifest:
    """Describe a dataset without its pixels."""
    return DatasetManifest(
        concept_schema=dataset.schema,
        num_categories=dataset.num_categories,
        image_size=dataset.image_size,
        source=dataset.source,
        samples=[
            SampleRecord(
                sample_id=s.sample_id,
                split=s.split,
                category=s.category,
                concept_labels=[int(b) for b in s.concept_labels],
                parts=list(s.parts),
                image=f"{IMAGES_DIR}/{s.sample_id}.png",
            )
            for s in dataset.samples
        ],
    )


def save_dataset(dataset: Dataset, root: Path) -> Path:
    """Write manifest and lossless images under root. Returns the manifest path."""
    root = Path(root)
    (root / IMAGES_DIR).mkdir(parents=True, exist_ok=True)

    manifest = build_manifest(dataset)
    for sample, record in zip(dataset.samples, manifest.samples):
        Image.fromarray(sample.pixels).save(root / record.image, format="PNG")

    path = root / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=1))
    logger.info("Saved %d samples to %s", len(dataset), root)
    return path


def load_dataset(root: Path) -> Dataset:
    """Read a dataset written by save_dataset."""
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.exists():
        raise IngestionError("missing dataset manifest", path)
    try:
        manifest = DatasetManifest.model_validate_json(path.read_text())
    except ValidationError as e:
        raise IngestionError(f"invalid manifest: {e}", path) from e
    if manifest.format_version != FORMAT_VERSION:
        raise IngestionError(f"unsupported manifest version {manifest.format_version}", path)

    samples = []
    for record in manifest.samples:
        image_path = root / record.image
        if not image_path.exists():
            raise IngestionError("missing image file", image_path)
        with Image.open(image_path) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
        samples.append(
            ImageSample(
                sample_id=record.sample_id,
                pixels=pixels,
                concept_labels=np.asarray(record.concept_labels, dtype=np.uint8),
                category=record.category,
                parts=tuple(record.parts),
                split=record.split,
            )
        )

    return Dataset(
        samples=tuple(samples),
        schema=manifest.concept_schema,
        num_categories=manifest.num_categories,
        image_size=manifest.image_size,
        source=manifest.source,
    )
