"""Dense anchor grids and ground-truth matching statistics.

Anchors use the area-preserving aspect parameterization (w = s*sqrt(r),
h = s/sqrt(r)) so "scale" always means side-of-equal-area-square, the same
size scalar the validity ranges use. Anchors are deliberately not clipped
to the image: clipping would change the IoU statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import Box, ImageSize, array_to_boxes, boxes_to_array, iou_matrix

# The widened scale set for proposal generation. The canonical baseline is
# five octaves from 32; the improved variant extends one octave on each end.
BASELINE_SCALES: tuple[float, ...] = (32, 64, 128, 256, 512)
IMPROVED_SCALES: tuple[float, ...] = (16, 32, 64, 128, 256, 512, 1024)


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple[float, ...] = BASELINE_SCALES
    aspect_ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    stride: int = 16

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if any(s <= 0 for s in self.scales):
            raise ValueError(f"anchor scales must be positive, got {self.scales}")
        if list(self.scales) != sorted(set(self.scales)):
            raise ValueError(f"anchor scales must be strictly increasing, got {self.scales}")

    @property
    def per_cell(self) -> int:
        return len(self.scales) * len(self.aspect_ratios)


def anchor_array(cfg: AnchorConfig, image: ImageSize) -> np.ndarray:
    """(N, 4) xywh anchors, one per (grid cell, scale, ratio).

    Cells are centered at (i*stride + stride/2, j*stride + stride/2) for a
    floor(width/stride) x floor(height/stride) grid.
    """
    nx = image.width // cfg.stride
    ny = image.height // cfg.stride
    if nx < 1 or ny < 1:
        raise ValueError(f"image {image.width}x{image.height} smaller than stride {cfg.stride}")
    cx = (np.arange(nx) * cfg.stride + cfg.stride / 2.0)
    cy = (np.arange(ny) * cfg.stride + cfg.stride / 2.0)
    gx, gy = np.meshgrid(cx, cy)  # (ny, nx)
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)  # row-major over the grid

    shapes = np.array(
        [(s * math.sqrt(r), s / math.sqrt(r)) for s in cfg.scales for r in cfg.aspect_ratios],
        dtype=np.float64,
    )  # (per_cell, 2) as (w, h)

    k = len(shapes)
    n = len(centers)
    out = np.empty((n * k, 4), dtype=np.float64)
    wh = np.tile(shapes, (n, 1))
    ctr = np.repeat(centers, k, axis=0)
    out[:, 0] = ctr[:, 0] - wh[:, 0] / 2.0
    out[:, 1] = ctr[:, 1] - wh[:, 1] / 2.0
    out[:, 2] = wh[:, 0]
    out[:, 3] = wh[:, 1]
    return out


def generate_anchors(cfg: AnchorConfig, image: ImageSize) -> list[Box]:
    return array_to_boxes(anchor_array(cfg, image))


@dataclass(frozen=True)
class MatchReport:
    """Per-GT best anchor overlap and the fraction matched per threshold."""

    total_gt: int
    max_ious: np.ndarray  # (total_gt,)
    thresholds: tuple[float, ...]

    @property
    def fraction_matched(self) -> dict[float, float | None]:
        if self.total_gt == 0:
            return {t: None for t in self.thresholds}
        return {t: float(np.mean(self.max_ious >= t)) for t in self.thresholds}

    def histogram(self, bins: int = 20) -> list[dict]:
        counts, edges = np.histogram(self.max_ious, bins=bins, range=(0.0, 1.0))
        total = max(self.total_gt, 1)
        return [
            {"lo": float(edges[i]), "hi": float(edges[i + 1]), "fraction": counts[i] / total}
            for i in range(bins)
        ]

    def merge(self, other: "MatchReport") -> "MatchReport":
        """Associative combine for per-image parallel evaluation."""
        if self.thresholds != other.thresholds:
            raise ValueError("cannot merge reports with different thresholds")
        return MatchReport(
            total_gt=self.total_gt + other.total_gt,
            max_ious=np.concatenate([self.max_ious, other.max_ious]),
            thresholds=self.thresholds,
        )

    def to_json_dict(self) -> dict:
        return {
            "total_gt": self.total_gt,
            "fractions": {f"{t:g}": v for t, v in self.fraction_matched.items()},
            "histogram": self.histogram(),
        }


DEFAULT_THRESHOLDS: tuple[float, ...] = (0.5, 0.7)


def match_stats(
    gts: Sequence[Box] | np.ndarray,
    anchors: Sequence[Box] | np.ndarray,
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
) -> MatchReport:
    """Best-anchor IoU per ground truth; both inputs in the same frame."""
    thresholds = tuple(thresholds)
    gt_arr = boxes_to_array(gts)
    if len(gt_arr) == 0:
        return MatchReport(0, np.empty(0), thresholds)
    anchor_arr = boxes_to_array(anchors)
    if len(anchor_arr) == 0:
        best = np.zeros(len(gt_arr))
    else:
        best = iou_matrix(gt_arr, anchor_arr).max(axis=1)
    return MatchReport(len(gt_arr), best, thresholds)
