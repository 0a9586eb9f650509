"""COCO-format ingestion and dataset-level scale statistics.

Reads instances JSON (images / annotations / categories) and flat results
JSON. Annotation boxes are fully cross-referenced on load; boxes that
overrun their image by at most 2 px (real COCO contains slight spills) are
clipped, larger overruns are kept as-is and reported as warnings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DatasetError, IntegrityError, ParseError
from .fusion import Detection
from .geometry import Box, ImageSize

BOUNDS_TOLERANCE_PX = 2.0


@dataclass(frozen=True)
class ImageRecord:
    id: int
    size: ImageSize
    file_name: str | None = None


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class Annotation:
    """One ground-truth instance; ``area`` is the COCO area field, which is
    mask-derived and may be well below the box area."""

    id: int
    image_id: int
    category_id: int
    box: Box
    area: float
    iscrowd: bool = False


class Dataset:
    """Immutable, cross-referenced view of a COCO instances file."""

    def __init__(
        self,
        images: Sequence[ImageRecord],
        annotations: Sequence[Annotation],
        categories: Sequence[Category],
        warnings: Sequence[str] = (),
    ):
        self.images = tuple(images)
        self.annotations = tuple(annotations)
        self.categories = tuple(categories)
        self.warnings = tuple(warnings)
        self.image_by_id: dict[int, ImageRecord] = {im.id: im for im in self.images}
        self.category_by_id: dict[int, Category] = {c.id: c for c in self.categories}
        self.annotations_by_image: dict[int, list[Annotation]] = {}
        for a in self.annotations:
            self.annotations_by_image.setdefault(a.image_id, []).append(a)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.images == other.images
            and self.annotations == other.annotations
            and self.categories == other.categories
        )

    def __repr__(self):
        return (f"Dataset(images={len(self.images)}, annotations={len(self.annotations)}, "
                f"categories={len(self.categories)})")


def from_coco_dict(doc: Mapping) -> Dataset:
    """Build a Dataset from a parsed COCO instances dictionary."""
    warnings: list[str] = []
    images = []
    for im in doc.get("images", []):
        try:
            size = ImageSize(int(im["width"]), int(im["height"]))
        except (KeyError, ValueError) as exc:
            raise IntegrityError(f"image {im.get('id')!r}: {exc}") from exc
        images.append(ImageRecord(id=int(im["id"]), size=size, file_name=im.get("file_name")))
    image_by_id = {im.id: im for im in images}

    categories = [Category(id=int(c["id"]), name=str(c.get("name", ""))) for c in doc.get("categories", [])]
    cat_ids = {c.id for c in categories}

    annotations = []
    for ann in doc.get("annotations", []):
        ann_id = ann.get("id")
        image_id = int(ann["image_id"])
        category_id = int(ann["category_id"])
        if image_id not in image_by_id:
            raise IntegrityError(f"annotation {ann_id} references missing image id {image_id}")
        if category_id not in cat_ids:
            raise IntegrityError(f"annotation {ann_id} references missing category id {category_id}")
        x, y, w, h = (float(v) for v in ann["bbox"])
        size = image_by_id[image_id].size
        overrun = max(0.0 - x, 0.0 - y, x + w - size.width, y + h - size.height, 0.0)
        if overrun > BOUNDS_TOLERANCE_PX:
            warnings.append(
                f"annotation {ann_id} overruns image {image_id} bounds by {overrun:.1f} px"
            )
        elif overrun > 0.0:
            x2 = min(x + w, float(size.width))
            y2 = min(y + h, float(size.height))
            x, y = max(x, 0.0), max(y, 0.0)
            w, h = x2 - x, y2 - y
        iscrowd = bool(ann.get("iscrowd", 0))
        area = float(ann.get("area", w * h))
        if area <= 0 and not iscrowd:
            warnings.append(f"annotation {ann_id} has non-positive area {area}")
        annotations.append(
            Annotation(id=int(ann_id), image_id=image_id, category_id=category_id,
                       box=Box(x, y, w, h), area=area, iscrowd=iscrowd)
        )
    return Dataset(images, annotations, categories, warnings)


def to_coco_dict(ds: Dataset) -> dict:
    return {
        "images": [
            {"id": im.id, "width": im.size.width, "height": im.size.height,
             **({"file_name": im.file_name} if im.file_name else {})}
            for im in ds.images
        ],
        "annotations": [
            {"id": a.id, "image_id": a.image_id, "category_id": a.category_id,
             "bbox": list(a.box.as_xywh()), "area": a.area, "iscrowd": int(a.iscrowd)}
            for a in ds.annotations
        ],
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
    }


def _load_json(path: str | Path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON at offset {exc.pos}: {exc.msg}", offset=exc.pos) from exc
    except OSError as exc:
        raise DatasetError(f"{path}: {exc.strerror or exc}") from exc


def load_dataset(path: str | Path) -> Dataset:
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a COCO instances object, got {type(doc).__name__}")
    return from_coco_dict(doc)


def load_results(path: str | Path) -> list[Detection]:
    """Flat COCO results array -> Detection list."""
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise ParseError(f"{path}: expected a COCO results array, got {type(doc).__name__}")
    return [detection_from_result(entry) for entry in doc]


def detection_from_result(entry: Mapping) -> Detection:
    x, y, w, h = (float(v) for v in entry["bbox"])
    return Detection(
        box=Box(x, y, w, h),
        score=float(entry["score"]),
        class_id=int(entry["category_id"]),
        image_id=int(entry["image_id"]),
        source_level=entry.get("level"),
    )


def detection_to_result(d: Detection) -> dict:
    out = {
        "image_id": d.image_id,
        "category_id": d.class_id,
        "bbox": [d.box.x, d.box.y, d.box.w, d.box.h],
        "score": d.score,
    }
    if d.source_level is not None:
        out["level"] = d.source_level
    return out


def save_results(dets: Iterable[Detection], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump([detection_to_result(d) for d in dets], f)


@dataclass(frozen=True)
class ScaleStats:
    """Distribution of per-instance scale relative to the image."""

    scales: np.ndarray  # sqrt(instance area / image area), one per non-crowd instance
    quantiles: Mapping[int, float]
    histogram: tuple[float, ...]  # fractions over 100 equal bins spanning [0, 1]
    warnings: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "instances": int(len(self.scales)),
            "quantiles": {str(k): v for k, v in sorted(self.quantiles.items())},
            "histogram": list(self.histogram),
            "warnings": list(self.warnings),
        }


def scale_stats(
    ds: Dataset,
    use_box_area: bool = False,
    percentiles: Sequence[int] = (10, 50, 90),
    bins: int = 100,
) -> ScaleStats:
    """Relative-scale distribution over all non-crowd instances.

    Relative scale is sqrt(area / image area); ``use_box_area`` switches
    the numerator from the mask-based area field to the box area w*h.
    Scales above 1 are reported as warnings, not clipped away.
    """
    scales = []
    warnings = []
    for a in ds.annotations:
        if a.iscrowd:
            continue
        area = a.box.area if use_box_area else a.area
        if area <= 0:
            warnings.append(f"annotation {a.id}: non-positive area, skipped")
            continue
        image = ds.image_by_id[a.image_id]
        rel = math.sqrt(area / image.size.area)
        if rel > 1.0:
            warnings.append(f"annotation {a.id}: relative scale {rel:.3f} exceeds 1")
        scales.append(rel)
    if not scales:
        raise DatasetError("dataset has no usable non-crowd instances for scale statistics")
    arr = np.asarray(scales)
    quantiles = {p: float(np.percentile(arr, p, method="linear")) for p in percentiles}
    counts, _ = np.histogram(np.clip(arr, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    histogram = tuple(float(c) / len(arr) for c in counts)
    return ScaleStats(arr, quantiles, histogram, tuple(warnings))
