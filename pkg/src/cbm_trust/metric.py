"""Concept trustworthiness score.

For every test image that contains a concept, the concept's localization map is resized
to the image, a fixed-size box is centered on its maximum and the box is checked
against the ground-truth part. The score is the mean over concepts of the per-concept
containment rate.
"""

import logging
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field
from torch import nn

from .attribution import concept_cams
from .config import BoxSpec, CamMethod, ContainmentTarget
from .data.types import Dataset, ImageSample, samples_to_tensors
from .errors import EmptyDatasetError, LocalizationError, ShapeError
from .models import PrototypeCBM, VanillaCBM, top_n_prototypes
from .utils import Rect

logger = logging.getLogger(__name__)


def upsample_map(values: torch.Tensor, height: int, width: int) -> torch.Tensor:
    """Bilinear resize with corner-aligned sampling; (..., H_l, W_l) -> (..., height, width).

    Output pixel (i, j) samples the input at (i * (H_l - 1) / (height - 1),
    j * (W_l - 1) / (width - 1)).
    """
    values = torch.as_tensor(values)
    h_l, w_l = values.shape[-2:]
    if height < h_l or width < w_l:
        raise ShapeError(f"cannot upsample a {h_l}x{w_l} map down to {height}x{width}")
    lead = values.shape[:-2]
    flat = values.reshape(-1, 1, h_l, w_l)
    if not flat.is_floating_point():
        flat = flat.double()
    out = F.interpolate(flat, size=(height, width), mode="bilinear", align_corners=True)
    return out.reshape(*lead, height, width)


def corresponding_region(upsampled: torch.Tensor | np.ndarray, box: tuple[int, int]) -> Rect:
    """Box of size box = (H_b, W_b) centered on the map's maximum, shifted to fit the image.

    The first maximum in row-major order wins. The box covers rows
    [top, top + H_b - 1] with top = r0 - H_b // 2 before clamping.
    """
    arr = np.asarray(upsampled.detach().cpu() if isinstance(upsampled, torch.Tensor) else upsampled)
    h, w = arr.shape
    h_b, w_b = box
    if h_b > h or w_b > w:
        raise ShapeError(f"box {h_b}x{w_b} does not fit a {h}x{w} map")
    r0, c0 = divmod(int(np.argmax(arr)), w)
    top = min(max(r0 - h_b // 2, 0), h - h_b)
    left = min(max(c0 - w_b // 2, 0), w - w_b)
    return Rect(top, left, top + h_b - 1, left + w_b - 1)


def region_contains(box: Rect, target: Rect | tuple[float, float]) -> bool:
    """Closed containment of a point, or of all four corners of a rectangle."""
    if isinstance(target, Rect):
        return box.contains_rect(target)
    return box.contains_point(*target)


def ground_truth_target(sample: ImageSample, part_id: int, target: ContainmentTarget) -> Rect | tuple[float, float]:
    part = sample.part(part_id)
    if part is None or not part.visible:
        raise LocalizationError(f"{sample.sample_id}: part {part_id} is not annotated as visible")
    if ContainmentTarget(target) is ContainmentTarget.RECT:
        return part.rect
    return part.center


class Localizer(Protocol):
    """Produces (B, len(concepts), H_l, W_l) maps for a batch of samples."""

    description: str

    def __call__(self, samples: Sequence[ImageSample], images: torch.Tensor, concepts: list[int]) -> torch.Tensor: ...


class PrototypeLocalizer:
    """Concept maps as the mean of the Top-N prototype similarity maps."""

    def __init__(self, model: PrototypeCBM, top_n: int | None = None) -> None:
        self.model = model
        self.top_n = top_n or model.top_n
        self.description = f"prototype top-{self.top_n}"
        self._selected: dict[int, list[int]] = {}

    def prototypes_for(self, concept_id: int) -> list[int]:
        if concept_id not in self._selected:
            row = self.model.bank.concept_weights[concept_id]
            self._selected[concept_id] = top_n_prototypes(row, self.top_n)
        return self._selected[concept_id]

    @torch.no_grad()
    def __call__(self, samples: Sequence[ImageSample], images: torch.Tensor, concepts: list[int]) -> torch.Tensor:
        maps = self.model(images).maps
        return torch.stack([maps[:, self.prototypes_for(c)].mean(dim=1) for c in concepts], dim=1)


class CamLocalizer:
    """Grad-CAM / Grad-CAM++ maps of each concept logit."""

    def __init__(self, model: nn.Module, method: CamMethod | str = CamMethod.GRAD_CAM_PP) -> None:
        self.model = model
        self.method = CamMethod(method)
        self.description = self.method.value

    def __call__(self, samples: Sequence[ImageSample], images: torch.Tensor, concepts: list[int]) -> torch.Tensor:
        return torch.stack([concept_cams(self.model, images, c, self.method) for c in concepts], dim=1)


class ArrayLocalizer:
    """Precomputed maps keyed by sample id, each (C, H_l, W_l)."""

    description = "precomputed"

    def __init__(self, maps: dict[str, np.ndarray | torch.Tensor]) -> None:
        self.maps = {k: torch.as_tensor(v) for k, v in maps.items()}

    def __call__(self, samples: Sequence[ImageSample], images: torch.Tensor, concepts: list[int]) -> torch.Tensor:
        return torch.stack([self.maps[s.sample_id][concepts] for s in samples])


def localizer_for(model: nn.Module, cam_method: CamMethod | str = CamMethod.GRAD_CAM_PP) -> Localizer | None:
    """Native maps for the prototype CBM, CAMs for the vanilla CBM, None for the linear probe."""
    if isinstance(model, PrototypeCBM):
        return PrototypeLocalizer(model)
    if isinstance(model, VanillaCBM):
        return CamLocalizer(model, cam_method)
    return None


class ConceptTrust(BaseModel):
    concept_id: int
    label: str
    part_id: int
    images: int = Field(..., ge=1, description="|I_c|")
    contained: int = Field(..., ge=0)
    rate: float = Field(..., ge=0, le=1)


class BoxRecord(BaseModel):
    """One (image, concept) evaluation."""

    sample_id: str
    concept_id: int
    peak_row: int
    peak_col: int
    top: int
    left: int
    bottom: int
    right: int
    target_row: float
    target_col: float
    contained: bool


class TrustReport(BaseModel):
    """Per-concept containment rates and their mean S_concept."""

    score: float = Field(..., ge=0, le=1)
    concepts: list[ConceptTrust]
    excluded_concepts: list[int] = Field(default_factory=list, description="Concepts with no positive image")
    box: BoxSpec
    box_pixels: tuple[int, int]
    localization: str
    num_images: int

    def rate_of(self, concept_id: int) -> float:
        for c in self.concepts:
            if c.concept_id == concept_id:
                return c.rate
        raise KeyError(concept_id)

    def part_rates(self) -> dict[int, float]:
        """Mean containment rate per part."""
        by_part: dict[int, list[float]] = {}
        for c in self.concepts:
            by_part.setdefault(c.part_id, []).append(c.rate)
        return {pid: float(np.mean(rates)) for pid, rates in sorted(by_part.items())}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.model_dump() for c in self.concepts])

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2))
        return path


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield range(start, min(start + size, n))


def trust_score(
    localizer: Localizer,
    dataset: Dataset,
    box: BoxSpec | None = None,
    batch_size: int = 32,
    records: list[BoxRecord] | None = None,
) -> TrustReport:
    """S_concept of a localizer on every image of dataset.

    When records is a list, one BoxRecord per (image, concept) pair is appended to it.
    """
    box = box or BoxSpec()
    if len(dataset) == 0:
        raise EmptyDatasetError("trust score needs at least one image")
    h, w = dataset.image_size, dataset.image_size
    box_pixels = box.resolve(h, w)
    schema = dataset.schema
    counts = np.zeros(schema.num_concepts, dtype=np.int64)
    hits = np.zeros(schema.num_concepts, dtype=np.int64)

    for idx in _batches(len(dataset), batch_size):
        samples = [dataset[i] for i in idx]
        concepts = sorted({c for s in samples for c in s.present_concepts()})
        if not concepts:
            continue
        images, _, _ = samples_to_tensors(samples)
        try:
            maps = localizer(samples, images, concepts)
        except Exception as e:
            raise LocalizationError(
                f"localizer '{localizer.description}' failed on {samples[0].sample_id}..{samples[-1].sample_id}: {e}"
            ) from e
        if maps.shape[:2] != (len(samples), len(concepts)) or not torch.isfinite(maps).all():
            raise LocalizationError(
                f"localizer '{localizer.description}' returned {tuple(maps.shape)} maps with non-finite "
                f"values or the wrong shape for {len(samples)} images x {len(concepts)} concepts"
            )
        upsampled = upsample_map(maps.detach().double(), h, w).numpy()

        for i, sample in enumerate(samples):
            present = set(sample.present_concepts())
            for j, c in enumerate(concepts):
                if c not in present:
                    continue
                target = ground_truth_target(sample, schema.part_of(c), box.target)
                region = corresponding_region(upsampled[i, j], box_pixels)
                contained = region_contains(region, target)
                counts[c] += 1
                hits[c] += contained
                if records is not None:
                    peak = divmod(int(np.argmax(upsampled[i, j])), w)
                    point = target.center if isinstance(target, Rect) else target
                    records.append(
                        BoxRecord(
                            sample_id=sample.sample_id, concept_id=c,
                            peak_row=peak[0], peak_col=peak[1],
                            top=int(region.top), left=int(region.left),
                            bottom=int(region.bottom), right=int(region.right),
                            target_row=point[0], target_col=point[1],
                            contained=contained,
                        )
                    )

    evaluated = [c for c in range(schema.num_concepts) if counts[c] > 0]
    excluded = [c for c in range(schema.num_concepts) if counts[c] == 0]
    if not evaluated:
        raise EmptyDatasetError("no concept has a positive image in this dataset")
    if excluded:
        logger.info("Excluded %d concepts with no positive image", len(excluded))

    per_concept = [
        ConceptTrust(
            concept_id=c,
            label=schema.concepts[c].label,
            part_id=schema.part_of(c),
            images=int(counts[c]),
            contained=int(hits[c]),
            rate=float(hits[c] / counts[c]),
        )
        for c in evaluated
    ]
    return TrustReport(
        score=float(np.mean([c.rate for c in per_concept])),
        concepts=per_concept,
        excluded_concepts=excluded,
        box=box,
        box_pixels=box_pixels,
        localization=localizer.description,
        num_images=len(dataset),
    )


def save_box_records(records: list[BoxRecord], path: Path) -> Path:
    """CSV with one row per (image, concept) evaluation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([r.model_dump() for r in records]).to_csv(path, index=False)
    return path
