"""Zeroing image regions for the patch-drop ablation."""

import math
from enum import Enum

import numpy as np

from ..utils import Disk, PixelSet, Rect
from .types import ImageSample

Region = Rect | Disk | PixelSet

DEFAULT_DISK_FRACTION = 0.12


class DropMode(str, Enum):
    """Which region is zeroed."""
    RELATED = "related"
    RANDOM = "random"


def related_region(sample: ImageSample, part_id: int, disk_fraction: float = DEFAULT_DISK_FRACTION) -> Region | None:
    """Region of a part: its rectangle, or a disk around a point annotation.

    Returns None when the part is missing or not visible.
    """
    part = sample.part(part_id)
    if part is None or not part.visible:
        return None
    rect = part.rect
    if not rect.is_degenerate:
        return rect
    return Disk(part.center[0], part.center[1], disk_fraction * max(sample.height, sample.width))


def random_region_like(region: Region, height: int, width: int, rng: np.random.Generator) -> Region:
    """Region placed uniformly at random inside the image, zeroing as many pixels as region does.

    A disk becomes the pixels nearest a random center, as many as the disk covers after
    clipping to the image.
    """
    if isinstance(region, (Disk, PixelSet)):
        count = int(region.mask(height, width).sum())
        r = region.radius if isinstance(region, Disk) else math.sqrt(count / math.pi)
        lo_r, hi_r = (r, height - 1 - r) if 2 * r <= height - 1 else (0, height - 1)
        lo_c, hi_c = (r, width - 1 - r) if 2 * r <= width - 1 else (0, width - 1)
        return PixelSet.nearest(float(rng.uniform(lo_r, hi_r)), float(rng.uniform(lo_c, hi_c)), count, height, width)

    clipped = Rect(
        max(region.top, 0), max(region.left, 0),
        min(region.bottom, height - 1), min(region.right, width - 1),
    )
    rows, cols = clipped.pixel_size()
    if rows == 0 or cols == 0:
        return Rect(0, 0, -1, -1)
    top = int(rng.integers(0, height - rows + 1))
    left = int(rng.integers(0, width - cols + 1))
    return Rect(top, left, top + rows - 1, left + cols - 1)


def apply_patch_drop(
    sample: ImageSample,
    region: Region,
    mode: DropMode | str = DropMode.RELATED,
    seed: int = 0,
) -> ImageSample:
    """Copy of sample with the pixels of region (or an area-matched random region) set to zero.

    Regions are clipped to the image; the original sample is untouched.
    """
    mode = DropMode(mode)
    if mode is DropMode.RANDOM:
        region = random_region_like(region, sample.height, sample.width, np.random.default_rng(seed))
    mask = region.mask(sample.height, sample.width)
    pixels = sample.pixels.copy()
    pixels[mask] = 0
    return sample.with_pixels(pixels)
