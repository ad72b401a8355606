"""Seeding, hashing and pixel-geometry utilities.

Coordinates are (row, col) with the origin at the top-left pixel, everywhere.
"""

import hashlib
import math
import random
from dataclasses import dataclass

import numpy as np
import torch


def seed_everything(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def derive_seed(seed: int, *tags: int | str) -> int:
    """Derive a child seed from a parent seed and a sequence of tags.

    The result depends only on the arguments, so sub-streams (per sample, per epoch)
    stay stable when unrelated draws are added elsewhere.

    Example: derive_seed(7, "sample", 3) is the same on every platform.
    """
    digest = hashlib.sha256(repr((seed, *tags)).encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def sha256_bytes(*chunks: bytes) -> str:
    """Hex SHA-256 over the concatenation of chunks."""
    h = hashlib.sha256()
    for chunk in chunks:
        h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class Rect:
    """Axis-aligned closed rectangle [top, bottom] x [left, right] in pixels."""

    top: float
    left: float
    bottom: float
    right: float

    @classmethod
    def point(cls, row: float, col: float) -> "Rect":
        """Degenerate rectangle covering a single point."""
        return cls(row, col, row, col)

    @property
    def is_empty(self) -> bool:
        return self.bottom < self.top or self.right < self.left

    @property
    def is_degenerate(self) -> bool:
        return self.top == self.bottom and self.left == self.right

    @property
    def center(self) -> tuple[float, float]:
        return ((self.top + self.bottom) / 2, (self.left + self.right) / 2)

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def width(self) -> float:
        return self.right - self.left

    def contains_point(self, row: float, col: float) -> bool:
        """Closed-interval containment."""
        return self.top <= row <= self.bottom and self.left <= col <= self.right

    def contains_rect(self, other: "Rect") -> bool:
        """True when all four corners of `other` lie inside this rectangle."""
        return all(
            self.contains_point(r, c)
            for r in (other.top, other.bottom)
            for c in (other.left, other.right)
        )

    def mask(self, height: int, width: int) -> np.ndarray:
        """Boolean (height, width) mask of the integer pixels inside, clipped to the image."""
        rows = np.arange(height)[:, None]
        cols = np.arange(width)[None, :]
        return (
            (rows >= self.top) & (rows <= self.bottom)
            & (cols >= self.left) & (cols <= self.right)
        )

    def pixel_size(self) -> tuple[int, int]:
        """Number of integer rows and columns covered (before clipping)."""
        rows = math.floor(self.bottom) - math.ceil(self.top) + 1
        cols = math.floor(self.right) - math.ceil(self.left) + 1
        return max(rows, 0), max(cols, 0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.top, self.left, self.bottom, self.right)


@dataclass(frozen=True)
class Disk:
    """Closed disk of integer pixels with (r - r0)^2 + (c - c0)^2 <= radius^2."""

    center_row: float
    center_col: float
    radius: float

    def mask(self, height: int, width: int) -> np.ndarray:
        rows = np.arange(height)[:, None]
        cols = np.arange(width)[None, :]
        d2 = (rows - self.center_row) ** 2 + (cols - self.center_col) ** 2
        return d2 <= self.radius**2


@dataclass(frozen=True)
class PixelSet:
    """Explicit set of (row, col) pixels."""

    pixels: tuple[tuple[int, int], ...]

    @classmethod
    def nearest(cls, row: float, col: float, count: int, height: int, width: int) -> "PixelSet":
        """The count image pixels closest to (row, col); ties go to the lower flat index."""
        rows, cols = np.divmod(np.arange(height * width), width)
        d2 = (rows - row) ** 2 + (cols - col) ** 2
        keep = np.argsort(d2, kind="stable")[: max(count, 0)]
        return cls(tuple((int(rows[i]), int(cols[i])) for i in sorted(keep)))

    def mask(self, height: int, width: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        for r, c in self.pixels:
            if 0 <= r < height and 0 <= c < width:
                out[r, c] = True
        return out
