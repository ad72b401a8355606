"""Alignment diagnostics: feature equivariance and concept-center spread."""

import torch

from ..backbone import FeatureExtractor
from ..data.types import Dataset
from ..losses import CIA_TRANSFORMS, AugmentationTransform, check_partition, localization_center
from ..models import PrototypeCBM
from .records import GroupCenterStats


@torch.no_grad()
def equivariance_error(
    backbone: FeatureExtractor,
    images: torch.Tensor,
    transforms: tuple[AugmentationTransform, ...] = CIA_TRANSFORMS,
) -> dict[str, float]:
    """Mean over images and cells of ||f(Aug(x)) - Aug(f(x))||^2, per transform."""
    deep = backbone(images).deep
    errors = {}
    for aug in transforms:
        diff = backbone(aug(images)).deep - aug(deep)
        errors[aug.name] = float(diff.pow(2).sum(dim=-3).mean())
    return errors


@torch.no_grad()
def group_center_statistics(
    model: PrototypeCBM,
    dataset: Dataset,
    groups: list[list[int]] | None = None,
    batch_size: int = 64,
) -> GroupCenterStats:
    """Mean squared distance between centers of present concepts, same group vs different groups."""
    groups = groups if groups is not None else dataset.groups
    owner = check_partition(groups, dataset.schema.num_concepts)
    same = owner[:, None] == owner[None, :]
    off_diag = ~torch.eye(len(owner), dtype=torch.bool)

    within_sum = across_sum = 0.0
    within_n = across_n = 0
    for start in range(0, len(dataset), batch_size):
        images, labels, _ = dataset.tensors(list(range(start, min(start + batch_size, len(dataset)))))
        out = model(images)
        centers = localization_center(model.concept_maps(out).double())
        dist = (centers.unsqueeze(-2) - centers.unsqueeze(-3)).pow(2).sum(dim=-1)
        present = labels.bool()
        both = present.unsqueeze(-1) & present.unsqueeze(-2) & off_diag
        within, across = both & same, both & ~same
        within_sum += float(dist[within].sum())
        across_sum += float(dist[across].sum())
        within_n += int(within.sum())
        across_n += int(across.sum())

    return GroupCenterStats(
        within_group=within_sum / within_n if within_n else None,
        across_group=across_sum / across_n if across_n else None,
        images=len(dataset),
    )
