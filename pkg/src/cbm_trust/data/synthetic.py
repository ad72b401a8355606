"""Procedural part-annotated dataset.

Each object is a set of glyphs, one per part, laid out on a grid of cells and jittered
inside its cell. A part's attribute is its fill colour, and a category is one colour
choice per part. Part regions are the exact bounding boxes of the rendered glyphs.
"""

import logging
import math
from typing import Callable

import numpy as np
from PIL import Image, ImageColor, ImageDraw

from ..config import GeneratorSpec
from ..errors import GenerationError
from ..utils import derive_seed
from .types import Concept, ConceptSchema, Dataset, ImageSample, Part, PartAnnotation, Split

logger = logging.getLogger(__name__)

Box = tuple[int, int, int, int]  # x0, y0, x1, y1 (PIL order, inclusive)


def _circle(draw: ImageDraw.ImageDraw, box: Box) -> None:
    draw.ellipse(box, fill=255)


def _square(draw: ImageDraw.ImageDraw, box: Box) -> None:
    draw.rectangle(box, fill=255)


def _triangle(draw: ImageDraw.ImageDraw, box: Box) -> None:
    x0, y0, x1, y1 = box
    draw.polygon([((x0 + x1) / 2, y0), (x1, y1), (x0, y1)], fill=255)


def _diamond(draw: ImageDraw.ImageDraw, box: Box) -> None:
    x0, y0, x1, y1 = box
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    draw.polygon([(cx, y0), (x1, cy), (cx, y1), (x0, cy)], fill=255)


def _cross(draw: ImageDraw.ImageDraw, box: Box) -> None:
    x0, y0, x1, y1 = box
    t = max(1, (x1 - x0 + 1) // 3)
    cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
    draw.rectangle((cx - t // 2, y0, cx - t // 2 + t - 1, y1), fill=255)
    draw.rectangle((x0, cy - t // 2, x1, cy - t // 2 + t - 1), fill=255)


def _hexagon(draw: ImageDraw.ImageDraw, box: Box) -> None:
    x0, y0, x1, y1 = box
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    r = (x1 - x0) / 2
    points = [(cx + r * math.cos(math.pi / 3 * k), cy + r * math.sin(math.pi / 3 * k)) for k in range(6)]
    draw.polygon(points, fill=255)


GLYPHS: dict[str, Callable[[ImageDraw.ImageDraw, Box], None]] = {
    "circle": _circle,
    "square": _square,
    "triangle": _triangle,
    "diamond": _diamond,
    "cross": _cross,
    "hexagon": _hexagon,
}


def build_schema(spec: GeneratorSpec) -> ConceptSchema:
    """Concepts are ordered part by part, colour by colour."""
    parts = tuple(Part(part_id=i, name=p.name) for i, p in enumerate(spec.parts))
    concepts = []
    for i, p in enumerate(spec.parts):
        for color in p.colors:
            concepts.append(Concept(concept_id=len(concepts), part_id=i, label=f"{p.name}::{color}"))
    return ConceptSchema(concepts=tuple(concepts), parts=parts)


def layout_cell_size(spec: GeneratorSpec) -> tuple[int, int]:
    """Return (grid side g, cell side) of the part layout."""
    grid = math.ceil(math.sqrt(len(spec.parts)))
    return grid, spec.image_size // grid


def check_placement(spec: GeneratorSpec) -> None:
    """Raise GenerationError when parts cannot be placed without overlap."""
    grid, cell = layout_cell_size(spec)
    needed = spec.part_size + 2 * spec.jitter_radius
    if needed > cell:
        raise GenerationError(
            f"infeasible placement: part_size + 2 * jitter_radius = {needed} px exceeds the "
            f"layout cell of {cell} px ({len(spec.parts)} parts on a {grid}x{grid} grid "
            f"in a {spec.image_size} px image)"
        )


def sample_categories(spec: GeneratorSpec) -> list[tuple[int, ...]]:
    """Draw K distinct attribute tuples (one colour index per part)."""
    radix = [len(p.colors) for p in spec.parts]
    total = math.prod(radix)
    rng = np.random.default_rng(derive_seed(spec.seed, "categories"))
    codes = sorted(int(c) for c in rng.choice(total, size=spec.num_categories, replace=False))

    categories = []
    for code in codes:
        digits = []
        for base in reversed(radix):
            code, d = divmod(code, base)
            digits.append(d)
        categories.append(tuple(reversed(digits)))
    return categories


def _background(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """Grey base with oriented stripes and per-pixel noise, float HxWx3."""
    size = spec.image_size
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, math.pi)
    freq = rng.uniform(2, 6)
    phase = rng.uniform(0, 2 * math.pi)
    stripes = np.sin(2 * math.pi * freq * (rows * math.cos(theta) + cols * math.sin(theta)) / size + phase)
    noise = rng.uniform(-1, 1, size=(size, size, 3))
    amp = spec.background_noise
    base = 0.5 + amp * stripes[..., None] + amp * noise
    return np.clip(base, 0.0, 1.0)


def render_sample(
    spec: GeneratorSpec,
    attributes: tuple[int, ...],
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[PartAnnotation]]:
    """Render one object. Returns uint8 pixels and exact part annotations."""
    size = spec.image_size
    grid, cell = layout_cell_size(spec)
    s = spec.part_size
    j = spec.jitter_radius

    canvas = _background(spec, rng)
    annotations = []
    for part_id, (part, color_idx) in enumerate(zip(spec.parts, attributes)):
        cell_row, cell_col = divmod(part_id, grid)
        dr, dc = rng.integers(-j, j + 1, size=2) if j else (0, 0)
        top = cell_row * cell + (cell - s) // 2 + int(dr)
        left = cell_col * cell + (cell - s) // 2 + int(dc)

        mask_img = Image.new("L", (size, size), 0)
        GLYPHS[part.shape](ImageDraw.Draw(mask_img), (left, top, left + s - 1, top + s - 1))
        mask = np.asarray(mask_img) > 0

        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        region = (float(rows[0]), float(cols[0]), float(rows[-1]), float(cols[-1]))
        center = ((region[0] + region[2]) / 2, (region[1] + region[3]) / 2)

        rgb = np.asarray(ImageColor.getrgb(part.colors[color_idx])[:3], dtype=np.float64) / 255.0
        canvas[mask] = rgb
        annotations.append(PartAnnotation(part_id=part_id, center=center, region=region, visible=True))

    pixels = np.round(canvas * 255.0).astype(np.uint8)
    return pixels, annotations


def generate_synthetic_dataset(spec: GeneratorSpec) -> Dataset:
    """Generate the train and test splits described by spec.

    The result depends only on spec: each sample draws from its own generator seeded
    by (seed, split, category, index).
    """
    check_placement(spec)
    schema = build_schema(spec)
    categories = sample_categories(spec)
    offsets = np.cumsum([0] + [len(p.colors) for p in spec.parts])[:-1]

    samples = []
    for split, per_category in (
        (Split.TRAIN, spec.samples_per_category),
        (Split.TEST, spec.test_samples_per_category),
    ):
        for category, attributes in enumerate(categories):
            for index in range(per_category):
                rng = np.random.default_rng(derive_seed(spec.seed, split.value, category, index))
                pixels, parts = render_sample(spec, attributes, rng)
                labels = np.zeros(schema.num_concepts, dtype=np.uint8)
                labels[offsets + np.asarray(attributes)] = 1
                samples.append(
                    ImageSample(
                        sample_id=f"{split.value}-{category:03d}-{index:04d}",
                        pixels=pixels,
                        concept_labels=labels,
                        category=category,
                        parts=tuple(parts),
                        split=split,
                    )
                )

    logger.info(
        "Generated %d samples (C=%d, K=%d, seed=%d)",
        len(samples), schema.num_concepts, spec.num_categories, spec.seed,
    )
    return Dataset(
        samples=tuple(samples),
        schema=schema,
        num_categories=spec.num_categories,
        image_size=spec.image_size,
        source={"kind": "synthetic", "generator": spec.model_dump(mode="json")},
    )
