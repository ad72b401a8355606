"""Training objectives: concept, task, cross-layer, cross-image and prediction alignment.

Grids are channels first, (..., D, H, W); every loss accepts a leading batch dimension
and averages over it.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping

import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import GridTransformError, NonFiniteError, ShapeError

PROB_EPS = 1e-7

LOSS_COMPONENTS = ("concept", "task", "cla", "cia", "pa")


def concept_loss(concept_probs: torch.Tensor, labels: torch.Tensor, eps: float = PROB_EPS) -> torch.Tensor:
    """Mean binary cross-entropy over concepts (and images), probabilities clipped to [eps, 1 - eps]."""
    if concept_probs.shape != labels.shape:
        raise ShapeError(f"concept probs {tuple(concept_probs.shape)} vs labels {tuple(labels.shape)}")
    p = concept_probs.clamp(eps, 1 - eps)
    labels = labels.to(p.dtype)
    return -(labels * torch.log(p) + (1 - labels) * torch.log1p(-p)).mean()


def task_loss(class_logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Softmax cross-entropy, averaged over the batch."""
    if class_logits.ndim != 2 or targets.shape != class_logits.shape[:1]:
        raise ShapeError(f"class logits {tuple(class_logits.shape)} vs targets {tuple(targets.shape)}")
    k = class_logits.shape[1]
    if targets.numel() and (targets.min() < 0 or targets.max() >= k):
        raise ValueError(f"category labels must lie in [0, {k})")
    return F.cross_entropy(class_logits, targets.long())


# Cross-layer alignment


def space_to_depth_match(shallow: torch.Tensor, ratio: int) -> torch.Tensor:
    """(..., D_s, r*H, r*W) -> (..., r*r*D_s, H, W).

    Output cell (u, v) is the concatenation of the r x r source block in row-major block
    order: channel (di * r + dj) * D_s + d holds shallow[d, r*u + di, r*v + dj].
    """
    if ratio < 1 or int(ratio) != ratio:
        raise ShapeError(f"spatial ratio must be a positive integer, got {ratio}")
    r = int(ratio)
    *lead, d, h, w = shallow.shape
    if h % r or w % r:
        raise ShapeError(f"shallow grid {h}x{w} is not divisible by ratio {r}")
    n = len(lead)
    x = shallow.reshape(*lead, d, h // r, r, w // r, r)
    x = x.permute(*range(n), n + 2, n + 4, n, n + 1, n + 3)
    return x.reshape(*lead, r * r * d, h // r, w // r)


def depth_to_space(grid: torch.Tensor, ratio: int) -> torch.Tensor:
    """Inverse of space_to_depth_match."""
    r = int(ratio)
    *lead, c, h, w = grid.shape
    if c % (r * r):
        raise ShapeError(f"{c} channels cannot be split into {r}x{r} blocks")
    d = c // (r * r)
    n = len(lead)
    x = grid.reshape(*lead, r, r, d, h, w)
    x = x.permute(*range(n), n + 2, n + 3, n, n + 4, n + 1)
    return x.reshape(*lead, d, h * r, w * r)


def spatial_ratio(shallow_shape: torch.Size, deep_shape: torch.Size) -> int:
    """Integer r with H_s = r * H_d and W_s = r * W_d."""
    hs, ws = shallow_shape[-2:]
    hd, wd = deep_shape[-2:]
    if hs % hd or ws % wd or hs // hd != ws // wd:
        raise ShapeError(f"shallow grid {hs}x{ws} is not an integer multiple of deep grid {hd}x{wd}")
    return hs // hd


def enrich_multiscale(grid: torch.Tensor, level: int) -> torch.Tensor:
    """Concatenate every level x level window (stride 1): (..., D, H, W) -> (..., e*e*D, H-e+1, W-e+1).

    Window cells are concatenated in row-major order.
    """
    h, w = grid.shape[-2:]
    if not 1 <= level <= min(h, w):
        raise ShapeError(f"window level {level} does not fit a {h}x{w} grid")
    oh, ow = h - level + 1, w - level + 1
    return torch.cat(
        [grid[..., a : a + oh, b : b + ow] for a in range(level) for b in range(level)],
        dim=-3,
    )


def pairwise_similarity(rows: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of every pair of rows: (..., n, d) -> (..., n, n).

    Zero rows have zero similarity to everything, themselves included.
    """
    if rows.shape[-2] < 1:
        raise ShapeError("pairwise similarity needs at least one row")
    norms = rows.norm(dim=-1, keepdim=True)
    nonzero = norms > 0
    unit = torch.where(nonzero, rows / torch.where(nonzero, norms, torch.ones_like(norms)), torch.zeros_like(rows))
    return unit @ unit.transpose(-1, -2)


def _grid_rows(grid: torch.Tensor) -> torch.Tensor:
    """(..., D, H, W) -> (..., H*W, D) in row-major cell order."""
    return grid.flatten(-2).transpose(-1, -2)


def cla_loss(deep: torch.Tensor, shallow: torch.Tensor, levels: int, mean_normalize: bool = False) -> torch.Tensor:
    """(1/E) sum_e ||phi(enrich(z_d, e)) - Detach(phi(enrich(match(z_s), e)))||_F^2.

    No gradient reaches the shallow map.
    """
    if levels < 1:
        raise ShapeError(f"need at least one level, got {levels}")
    matched = space_to_depth_match(shallow.detach(), spatial_ratio(shallow.shape, deep.shape))
    total = deep.new_zeros(deep.shape[:-3])
    for e in range(1, levels + 1):
        phi_d = pairwise_similarity(_grid_rows(enrich_multiscale(deep, e)))
        phi_s = pairwise_similarity(_grid_rows(enrich_multiscale(matched, e))).detach()
        sq = (phi_d - phi_s).pow(2)
        total = total + (sq.mean(dim=(-2, -1)) if mean_normalize else sq.sum(dim=(-2, -1)))
    return (total / levels).mean()


# Cross-image alignment


class TransformKind(str, Enum):
    """Spatial augmentations that permute grid cells exactly."""
    IDENTITY = "identity"
    HFLIP = "hflip"
    VFLIP = "vflip"
    ROTATE = "rotate"


@dataclass(frozen=True)
class AugmentationTransform:
    """A flip or a rotation by a multiple of 90 degrees, applied to the last two dims."""

    kind: TransformKind = TransformKind.IDENTITY
    degrees: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TransformKind(self.kind))
        if self.kind is TransformKind.ROTATE:
            if self.degrees % 90:
                raise GridTransformError(f"rotation by {self.degrees} degrees is not a permutation of grid cells")
        elif self.degrees:
            raise GridTransformError(f"{self.kind.value} takes no angle")

    @classmethod
    def parse(cls, name: str) -> "AugmentationTransform":
        """'identity', 'hflip', 'vflip' or 'rot<degrees>' such as 'rot90'."""
        name = name.strip().lower()
        if name.startswith("rot"):
            try:
                degrees = int(name[3:])
            except ValueError as e:
                raise GridTransformError(f"unknown augmentation '{name}'") from e
            return cls(TransformKind.ROTATE, degrees)
        try:
            return cls(TransformKind(name))
        except ValueError as e:
            raise GridTransformError(f"unknown augmentation '{name}'") from e

    @property
    def name(self) -> str:
        if self.kind is TransformKind.ROTATE:
            return f"rot{self.degrees % 360}"
        return self.kind.value

    @property
    def quarter_turns(self) -> int:
        return (self.degrees // 90) % 4

    def check_grid(self, height: int, width: int) -> None:
        """Odd quarter turns only map a grid onto itself when it is square."""
        if self.kind is TransformKind.ROTATE and self.quarter_turns % 2 and height != width:
            raise GridTransformError(f"{self.name} does not map a {height}x{width} grid onto itself")

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        self.check_grid(*x.shape[-2:])
        if self.kind is TransformKind.HFLIP:
            return x.flip(-1)
        if self.kind is TransformKind.VFLIP:
            return x.flip(-2)
        if self.kind is TransformKind.ROTATE and self.quarter_turns:
            return torch.rot90(x, self.quarter_turns, dims=(-2, -1))
        return x


CIA_TRANSFORMS = tuple(
    AugmentationTransform.parse(n) for n in ("hflip", "vflip", "rot90", "rot180", "rot270")
)


def cia_loss(
    extract: Callable[[torch.Tensor], torch.Tensor],
    images: torch.Tensor,
    aug: AugmentationTransform,
    original: torch.Tensor | None = None,
    mean_normalize: bool = False,
) -> torch.Tensor:
    """||f(Aug(x)) - Detach(Aug(f(x)))||^2, averaged over the batch.

    extract maps images to deep maps; original, when given, is f(x) already computed.
    With mean_normalize the squared error is averaged over the D x H x W entries
    instead of summed.
    """
    if not isinstance(aug, AugmentationTransform):
        raise GridTransformError(f"unsupported augmentation {aug!r}")
    if original is None:
        original = extract(images)
    target = aug(original.detach())
    pred = extract(aug(images))
    if pred.shape != target.shape:
        raise ShapeError(f"augmented map {tuple(pred.shape)} vs transformed map {tuple(target.shape)}")
    sq = (pred - target).pow(2).flatten(-3)
    return (sq.mean(dim=-1) if mean_normalize else sq.sum(dim=-1)).mean()


# Prediction alignment


def localization_center(values: torch.Tensor) -> torch.Tensor:
    """k_c: coordinates weighted by relu(values) / sum(relu(values)); (..., H, W) -> (..., 2).

    All-nonpositive maps fall back to uniform weights.
    """
    h, w = values.shape[-2:]
    pos = torch.relu(values)
    total = pos.sum(dim=(-2, -1), keepdim=True)
    nonzero = total > 0
    weights = torch.where(
        nonzero,
        pos / torch.where(nonzero, total, torch.ones_like(total)),
        torch.full_like(values, 1.0 / (h * w)),
    )
    rows = torch.arange(h, dtype=values.dtype, device=values.device)
    cols = torch.arange(w, dtype=values.dtype, device=values.device)
    r = (weights.sum(dim=-1) * rows).sum(dim=-1)
    c = (weights.sum(dim=-2) * cols).sum(dim=-1)
    return torch.stack([r, c], dim=-1)


def check_partition(groups: list[list[int]], num_concepts: int) -> torch.Tensor:
    """Group index of every concept; each concept must sit in exactly one group."""
    owner = torch.full((num_concepts,), -1, dtype=torch.long)
    for i, group in enumerate(groups):
        for c in group:
            if not 0 <= c < num_concepts:
                raise ValueError(f"group {i} names unknown concept {c}")
            if owner[c] >= 0:
                raise ValueError(f"concept {c} appears in groups {int(owner[c])} and {i}")
            owner[c] = i
    missing = (owner < 0).nonzero().flatten().tolist()
    if missing:
        raise ValueError(f"concepts {missing} belong to no group")
    return owner


def default_div_margin(height: int, width: int) -> float:
    """delta = sqrt((H^2 + W^2) / 4), half the grid diagonal."""
    return math.sqrt((height**2 + width**2) / 4)


def pa_loss(
    concept_maps: torch.Tensor,
    present: torch.Tensor,
    groups: list[list[int]],
    margin: float | None = None,
    hinge: bool = True,
    pair_normalize: bool = False,
) -> torch.Tensor:
    """L_grp + L_div over the concepts present in each image.

    concept_maps is (B, C, H, W) or (C, H, W); present is the matching (B, C) / (C,)
    label mask. T is len(groups). L_grp pulls the centers of concepts sharing a group
    together; L_div pushes centers of different groups apart, hinged at margin**2 unless
    hinge is False.
    """
    single = concept_maps.ndim == 3
    if single:
        concept_maps, present = concept_maps.unsqueeze(0), present.unsqueeze(0)
    b, c, h, w = concept_maps.shape
    if present.shape != (b, c):
        raise ShapeError(f"present mask {tuple(present.shape)} vs maps {tuple(concept_maps.shape)}")
    owner = check_partition(groups, c).to(concept_maps.device)
    t = len(groups)

    centers = localization_center(concept_maps)
    dist = (centers.unsqueeze(-2) - centers.unsqueeze(-3)).pow(2).sum(dim=-1)
    active = present.bool()
    both = (active.unsqueeze(-1) & active.unsqueeze(-2)).to(dist.dtype)
    same = (owner[:, None] == owner[None, :]).to(dist.dtype)
    off_diag = 1 - torch.eye(c, dtype=dist.dtype, device=dist.device)

    grp_mask = both * same * off_diag
    grp_sum = (dist * grp_mask).sum(dim=(-2, -1))
    if pair_normalize:
        l_grp = grp_sum / grp_mask.sum(dim=(-2, -1)).clamp_min(1)
    else:
        l_grp = grp_sum / t

    if margin is None:
        margin = default_div_margin(h, w)
    capped = dist.clamp(max=margin**2) if hinge else dist
    l_div = -(capped * both * (1 - same)).sum(dim=(-2, -1)) / t**2

    return (l_grp + l_div).mean()


def total_loss(components: Mapping[str, torch.Tensor | float], weights: LossWeights) -> torch.Tensor:
    """Weighted sum of the named components; missing components count as zero."""
    unknown = set(components) - set(LOSS_COMPONENTS)
    if unknown:
        raise KeyError(f"unknown loss components {sorted(unknown)}")
    total = torch.zeros(())
    for name in LOSS_COMPONENTS:
        if name not in components:
            continue
        value = torch.as_tensor(components[name])
        if not torch.isfinite(value).all():
            raise NonFiniteError(name, f"loss component '{name}' is not finite ({float(value)})")
        total = total + getattr(weights, name) * value
    return total
