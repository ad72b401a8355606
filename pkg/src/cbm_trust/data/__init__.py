"""Datasets: synthetic generation, CUB ingestion, persistence and patch drop."""

from .cub import derive_attribute_part_map, load_cub_annotations, write_attribute_part_map
from .io import load_dataset, save_dataset
from .patch_drop import DropMode, apply_patch_drop, related_region
from .synthetic import generate_synthetic_dataset
from .types import (
    Concept,
    ConceptSchema,
    Dataset,
    ImageSample,
    Part,
    PartAnnotation,
    Split,
    concept_part_groups,
)

__all__ = [
    "Concept",
    "ConceptSchema",
    "Dataset",
    "DropMode",
    "ImageSample",
    "Part",
    "PartAnnotation",
    "Split",
    "apply_patch_drop",
    "concept_part_groups",
    "derive_attribute_part_map",
    "generate_synthetic_dataset",
    "load_cub_annotations",
    "load_dataset",
    "related_region",
    "save_dataset",
    "write_attribute_part_map",
]
