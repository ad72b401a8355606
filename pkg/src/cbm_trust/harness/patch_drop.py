"""Concept accuracy before and after dropping the image region of each part group."""

import logging

import numpy as np
import torch

from ..data.patch_drop import DEFAULT_DISK_FRACTION, DropMode, apply_patch_drop, related_region
from ..data.types import Dataset, ImageSample, samples_to_tensors
from ..errors import MissingAnnotationError
from ..models import StagedModel
from ..utils import derive_seed
from .records import GroupDrop, PatchDropReport

logger = logging.getLogger(__name__)

NO_DROP = "none"
DEFAULT_MODES = (NO_DROP, DropMode.RELATED.value, DropMode.RANDOM.value)


@torch.no_grad()
def _concept_probs(model: StagedModel, samples: list[ImageSample], batch_size: int) -> torch.Tensor:
    model.eval()
    chunks = []
    for start in range(0, len(samples), batch_size):
        images, _, _ = samples_to_tensors(samples[start : start + batch_size])
        probs = model(images).concept_probs
        if probs is None:
            raise TypeError(f"{type(model).__name__} does not predict concepts")
        chunks.append(probs)
    return torch.cat(chunks)


def patch_drop_experiment(
    model: StagedModel,
    dataset: Dataset,
    groups: list[list[int]] | None = None,
    modes: tuple[str, ...] = DEFAULT_MODES,
    seed: int = 0,
    variant: str = "",
    disk_fraction: float = DEFAULT_DISK_FRACTION,
    batch_size: int = 64,
) -> PatchDropReport:
    """Per-group concept accuracy with nothing, the group's part, or a random same-size region zeroed.

    Each group is evaluated on the images where its part is visible, over the group's
    concepts only. The aggregate pools every (image, concept) evaluation.
    """
    groups = groups if groups is not None else dataset.groups
    modes = tuple(NO_DROP if m == NO_DROP else DropMode(m).value for m in modes)
    if NO_DROP not in modes:
        modes = (NO_DROP, *modes)

    schema = dataset.schema
    correct = {m: 0 for m in modes}
    total = 0
    results = []
    for group in groups:
        part_id = schema.part_of(group[0])
        annotated = [s for s in dataset if s.part(part_id) is not None]
        if not annotated:
            raise MissingAnnotationError(f"no image annotates part {part_id} ({schema.part_name(part_id)})")
        visible = [s for s in annotated if s.part(part_id).visible]
        if not visible:
            logger.warning("Part %s is never visible; skipping its group", schema.part_name(part_id))
            continue

        labels = torch.from_numpy(np.stack([s.concept_labels[group] for s in visible])).bool()
        accuracy = {}
        for mode in modes:
            if mode == NO_DROP:
                samples = visible
            else:
                samples = [
                    apply_patch_drop(
                        s, related_region(s, part_id, disk_fraction), mode,
                        seed=derive_seed(seed, s.sample_id, part_id),
                    )
                    for s in visible
                ]
            probs = _concept_probs(model, samples, batch_size)[:, group]
            hits = (probs > 0.5) == labels
            accuracy[mode] = float(hits.double().mean())
            correct[mode] += int(hits.sum())
        total += labels.numel()
        results.append(
            GroupDrop(
                part_id=part_id,
                part_name=schema.part_name(part_id),
                concepts=list(group),
                images=len(visible),
                accuracy=accuracy,
            )
        )
        logger.info(
            "Part %s: %s", schema.part_name(part_id),
            ", ".join(f"{m} {a:.3f}" for m, a in accuracy.items()),
        )

    return PatchDropReport(
        variant=variant,
        groups=results,
        aggregate={m: correct[m] / total for m in modes} if total else {},
        seed=seed,
    )
