"""CUB-200-2011 format ingestion.

Files read under the dataset root (whitespace separated, one record per line):

    images.txt                                 <image_id> <relative path>
    bounding_boxes.txt                         <image_id> <x> <y> <w> <h>
    train_test_split.txt                       <image_id> <is_train>
    parts/part_locs.txt                        <image_id> <part_id> <x> <y> <visible>
    attributes/image_attribute_labels.txt      <image_id> <attribute_id> <is_present> <certainty> <time>
    attributes/attribute_part_map.txt          <attribute_id> <part_id>

Optional: image_class_labels.txt (<image_id> <class_id>; otherwise the class is the
numeric prefix of the image's directory, e.g. '001.Black_footed_Albatross'),
parts/parts.txt (<part_id> <name>) and attributes.txt or attributes/attributes.txt
(<attribute_id> <name>).

CUB stores (x, y); everything here is converted to (row, col) = (y, x).
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from PIL import Image

from ..errors import IngestionError
from .types import Concept, ConceptSchema, Dataset, ImageSample, Part, PartAnnotation, Split

logger = logging.getLogger(__name__)

CUB_PART_NAMES = {
    1: "back", 2: "beak", 3: "belly", 4: "breast", 5: "crown",
    6: "forehead", 7: "left eye", 8: "left leg", 9: "left wing", 10: "nape",
    11: "right eye", 12: "right leg", 13: "right wing", 14: "tail", 15: "throat",
}

# Attribute region (the text between 'has_' and the last '_<aspect>') -> part id.
# Head regions share the crown, paired parts use the left one: 10 concept groups.
REGION_TO_PART = {
    "back": 1, "bill": 2, "belly": 3, "breast": 4,
    "crown": 5, "forehead": 5, "head": 5, "nape": 5,
    "eye": 7, "leg": 8, "wing": 9,
    "tail": 14, "upper_tail": 14, "under_tail": 14,
    "throat": 15,
}

ATTRIBUTE_PART_MAP = "attributes/attribute_part_map.txt"


@dataclass(frozen=True)
class _Line:
    path: Path
    number: int
    fields: list[str]

    def get(self, index: int, convert: Callable[[str], object]):
        try:
            return convert(self.fields[index])
        except ValueError as e:
            raise IngestionError(f"cannot parse field {index + 1} '{self.fields[index]}'", self.path, self.number) from e


def _records(path: Path, n_fields: int | None, min_fields: int | None = None) -> Iterator[_Line]:
    """Yield non-empty lines split on whitespace, checking the field count."""
    if not path.exists():
        raise IngestionError("missing file", path)
    with path.open() as fh:
        for number, raw in enumerate(fh, 1):
            fields = raw.split()
            if not fields:
                continue
            if n_fields is not None and len(fields) != n_fields:
                raise IngestionError(f"expected {n_fields} fields, got {len(fields)}", path, number)
            if min_fields is not None and len(fields) < min_fields:
                raise IngestionError(f"expected at least {min_fields} fields, got {len(fields)}", path, number)
            yield _Line(path, number, fields)


def _named_records(path: Path) -> dict[int, str]:
    """Read '<id> <name with spaces>' lines."""
    names = {}
    for line in _records(path, None, min_fields=2):
        names[line.get(0, int)] = " ".join(line.fields[1:])
    return names


def derive_attribute_part_map(attribute_names: dict[int, str]) -> dict[int, int]:
    """Map CUB attribute ids to part ids from names like 'has_wing_color::blue'.

    Attributes about the whole bird (size, shape, primary colour, upper/under parts)
    are left out.
    """
    mapping = {}
    for attr_id, name in sorted(attribute_names.items()):
        aspect = name.split("::")[0].removeprefix("has_")
        region = aspect.rsplit("_", 1)[0] if "_" in aspect else aspect
        part = REGION_TO_PART.get(region)
        if part is not None:
            mapping[attr_id] = part
    return mapping


def write_attribute_part_map(root: Path) -> Path:
    """Derive attributes/attribute_part_map.txt from the attribute names file."""
    root = Path(root)
    names_path = _attribute_names_path(root)
    if names_path is None:
        raise IngestionError("missing attribute names (attributes.txt)", root / "attributes.txt")
    mapping = derive_attribute_part_map(_named_records(names_path))
    out = root / ATTRIBUTE_PART_MAP
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(f"{a} {p}\n" for a, p in sorted(mapping.items())))
    logger.info("Wrote %d part-related attributes to %s", len(mapping), out)
    return out


def _attribute_names_path(root: Path) -> Path | None:
    for candidate in (root / "attributes" / "attributes.txt", root / "attributes.txt"):
        if candidate.exists():
            return candidate
    return None


def _class_from_path(line: _Line, rel_path: str) -> int:
    prefix = rel_path.split("/")[0].split(".")[0]
    try:
        return int(prefix)
    except ValueError as e:
        raise IngestionError(
            f"no image_class_labels.txt and no numeric class prefix in '{rel_path}'",
            line.path, line.number,
        ) from e


def load_cub_annotations(root: Path, crop_to_bbox: bool = True, image_size: int = 224) -> Dataset:
    """Ingest a CUB-format directory into a Dataset.

    Only attributes listed in attributes/attribute_part_map.txt become concepts. Every
    image is resized to image_size x image_size, after cropping to its bounding box when
    crop_to_bbox is set; part coordinates follow the same transform.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError("dataset root is not a directory", root)
    for sub in ("attributes", "parts"):
        if not (root / sub).is_dir():
            raise IngestionError(f"missing directory '{sub}/'", root / sub)

    images: dict[int, str] = {}
    image_lines: dict[int, _Line] = {}
    for line in _records(root / "images.txt", 2):
        image_id = line.get(0, int)
        images[image_id] = line.fields[1]
        image_lines[image_id] = line

    def check_image(line: _Line) -> int:
        image_id = line.get(0, int)
        if image_id not in images:
            raise IngestionError(f"unknown image id {image_id}", line.path, line.number)
        return image_id

    bboxes = {}
    for line in _records(root / "bounding_boxes.txt", 5):
        bboxes[check_image(line)] = tuple(line.get(i, float) for i in range(1, 5))

    is_train = {}
    for line in _records(root / "train_test_split.txt", 2):
        is_train[check_image(line)] = line.get(1, int) == 1

    classes: dict[int, int] = {}
    labels_path = root / "image_class_labels.txt"
    if labels_path.exists():
        for line in _records(labels_path, 2):
            classes[check_image(line)] = line.get(1, int)
    else:
        for image_id, rel in images.items():
            classes[image_id] = _class_from_path(image_lines[image_id], rel)

    part_names = CUB_PART_NAMES
    parts_txt = root / "parts" / "parts.txt"
    if parts_txt.exists():
        part_names = _named_records(parts_txt)

    attr_part: dict[int, int] = {}
    for line in _records(root / ATTRIBUTE_PART_MAP, 2):
        part_id = line.get(1, int)
        if part_id not in part_names:
            raise IngestionError(f"unknown part id {part_id}", line.path, line.number)
        attr_part[line.get(0, int)] = part_id

    names_path = _attribute_names_path(root)
    attr_names = _named_records(names_path) if names_path else {}
    concept_of_attr = {attr: i for i, attr in enumerate(sorted(attr_part))}
    schema = ConceptSchema(
        concepts=tuple(
            Concept(
                concept_id=concept_of_attr[attr],
                part_id=attr_part[attr],
                label=attr_names.get(attr, f"attribute_{attr}"),
                source_id=attr,
            )
            for attr in sorted(attr_part)
        ),
        parts=tuple(Part(part_id=pid, name=name) for pid, name in sorted(part_names.items())),
    )

    locs: dict[int, dict[int, tuple[float, float, bool]]] = {i: {} for i in images}
    for line in _records(root / "parts" / "part_locs.txt", 5):
        image_id = check_image(line)
        part_id = line.get(1, int)
        if part_id not in part_names:
            raise IngestionError(f"unknown part id {part_id}", line.path, line.number)
        x, y = line.get(2, float), line.get(3, float)
        locs[image_id][part_id] = (y, x, line.get(4, int) == 1)

    max_attr = max(attr_names or attr_part, default=0)
    present: dict[int, set[int]] = {i: set() for i in images}
    for line in _records(root / "attributes" / "image_attribute_labels.txt", 5):
        image_id = check_image(line)
        attr = line.get(1, int)
        if not 1 <= attr <= max_attr:
            raise IngestionError(f"attribute id {attr} outside 1..{max_attr}", line.path, line.number)
        if line.get(2, int) == 1 and attr in concept_of_attr:
            present[image_id].add(concept_of_attr[attr])

    class_ids = sorted(set(classes.values()))
    category_of_class = {c: i for i, c in enumerate(class_ids)}

    samples = []
    cleared = 0
    for image_id in sorted(images):
        if image_id not in bboxes or image_id not in is_train:
            raise IngestionError(f"image {image_id} lacks a bounding box or split entry", root / "images.txt")
        pixels, annotations = _load_image(
            root / "images" / images[image_id], bboxes[image_id], locs[image_id], crop_to_bbox, image_size
        )
        visible = {a.part_id for a in annotations if a.visible}
        labels = np.zeros(schema.num_concepts, dtype=np.uint8)
        for c in sorted(present[image_id]):
            if schema.part_of(c) in visible:
                labels[c] = 1
            else:
                cleared += 1
        samples.append(
            ImageSample(
                sample_id=f"cub-{image_id:05d}",
                pixels=pixels,
                concept_labels=labels,
                category=category_of_class[classes[image_id]],
                parts=tuple(annotations),
                split=Split.TRAIN if is_train[image_id] else Split.TEST,
            )
        )

    if cleared:
        logger.warning("Cleared %d positive concept labels whose part is not visible", cleared)

    return Dataset(
        samples=tuple(samples),
        schema=schema,
        num_categories=len(class_ids),
        image_size=image_size,
        source={"kind": "cub", "root": str(root), "crop_to_bbox": crop_to_bbox},
    )


def transform_point(
    row: float, col: float, origin: tuple[float, float], scale: tuple[float, float]
) -> tuple[float, float]:
    """(point - origin) * scale, all in (row, col)."""
    return (row - origin[0]) * scale[0], (col - origin[1]) * scale[1]


def _load_image(
    path: Path,
    bbox: tuple[float, float, float, float],
    part_locs: dict[int, tuple[float, float, bool]],
    crop_to_bbox: bool,
    size: int,
) -> tuple[np.ndarray, list[PartAnnotation]]:
    if not path.exists():
        raise IngestionError("missing image file", path)
    with Image.open(path) as img:
        img = img.convert("RGB")
        if crop_to_bbox:
            x, y, w, h = bbox
            left, top = max(0.0, x), max(0.0, y)
            right, bottom = min(float(img.width), x + w), min(float(img.height), y + h)
            if right <= left or bottom <= top:
                raise IngestionError(f"bounding box {bbox} lies outside the {img.width}x{img.height} image", path)
        else:
            left, top, right, bottom = 0.0, 0.0, float(img.width), float(img.height)
        origin = (top, left)
        crop_h, crop_w = bottom - top, right - left
        img = img.resize((size, size), Image.Resampling.BILINEAR, box=(left, top, right, bottom))
        pixels = np.asarray(img, dtype=np.uint8).copy()

    scale = (size / crop_h, size / crop_w)
    annotations = []
    for part_id, (row, col, visible) in sorted(part_locs.items()):
        r, c = transform_point(row, col, origin, scale)
        if visible and not (0 <= r <= size - 1 and 0 <= c <= size - 1):
            visible = False
        if not visible:
            r, c = 0.0, 0.0
        annotations.append(PartAnnotation.point(part_id, r, c, visible=visible))
    return pixels, annotations
