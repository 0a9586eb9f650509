"""Axis-aligned box arithmetic underpinning every other module.

Boxes are stored as (x, y, w, h) in the COCO bbox convention with
continuous real coordinates. The canonical "object size" scalar is
``side = sqrt(w * h)``, the side of the equal-area square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle: top-left corner plus width and height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box sides must be non-negative, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def side(self) -> float:
        """Side of the equal-area square, the size scalar used by validity logic."""
        return math.sqrt(self.w * self.h)

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class ImageSize:
    """Integer raster dimensions, both strictly positive."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def shorter(self) -> int:
        return min(self.width, self.height)

    @property
    def longer(self) -> int:
        return max(self.width, self.height)


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 when the union has zero area."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def scale_box(b: Box, factor: float) -> Box:
    """Map a box between coordinate frames by an isotropic factor > 0."""
    if factor <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return Box(b.x * factor, b.y * factor, b.w * factor, b.h * factor)


def clip_box(b: Box, size: ImageSize) -> Box:
    """Intersect a box with the image; disjoint boxes collapse to zero area
    at the clamped position."""
    x1 = min(max(b.x, 0.0), size.width)
    y1 = min(max(b.y, 0.0), size.height)
    x2 = min(max(b.x2, 0.0), size.width)
    y2 = min(max(b.y2, 0.0), size.height)
    return Box(x1, y1, max(0.0, x2 - x1), max(0.0, y2 - y1))


def boxes_to_array(boxes: Iterable[Box] | np.ndarray) -> np.ndarray:
    """(N, 4) float64 xywh array from boxes; passes arrays through."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ValueError(f"expected (N, 4) box array, got shape {arr.shape}")
        return arr
    return np.array([b.as_xywh() for b in boxes], dtype=np.float64).reshape(-1, 4)


def array_to_boxes(arr: np.ndarray) -> list[Box]:
    return [Box(float(x), float(y), float(w), float(h)) for x, y, w, h in arr]


def intersection_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(N, M) intersection areas between two xywh arrays."""
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[None, :, 0], b[None, :, 1]
    bx2, by2 = bx1 + b[None, :, 2], by1 + b[None, :, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    return iw * ih


def iou_matrix(a: np.ndarray | Sequence[Box], b: np.ndarray | Sequence[Box]) -> np.ndarray:
    """(N, M) IoU between two box collections; zero-area unions give 0."""
    a = boxes_to_array(a)
    b = boxes_to_array(b)
    inter = intersection_matrix(a, b)
    area_a = (a[:, 2] * a[:, 3])[:, None]
    area_b = (b[:, 2] * b[:, 3])[None, :]
    union = area_a + area_b - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out
