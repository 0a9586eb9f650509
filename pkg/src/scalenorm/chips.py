"""Randomized greedy chip sampling.

High-resolution training only needs pixels around small objects, so each
image is reduced to a near-minimal set of fixed-size square chips that
together contain every target object. Each greedy round draws a batch of
random chip positions, keeps the candidate containing the most
still-uncovered targets, and repeats until nothing is left to cover.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .geometry import Box, ImageSize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChipConfig:
    """Chip geometry and sampling behaviour.

    ``cover_side_max`` bounds which objects count as targets (scaled-frame
    side strictly below the cutoff); None covers every object. Coverage
    means full containment by default; "center" only requires the object
    center inside the chip.
    """

    chip_size: int = 1000
    candidates_per_round: int = 50
    cover_side_max: float | None = None
    containment: str = "full"
    rng_seed: int = 0

    def __post_init__(self):
        if self.chip_size < 1:
            raise ValueError(f"chip_size must be >= 1, got {self.chip_size}")
        if self.candidates_per_round < 1:
            raise ValueError(f"candidates_per_round must be >= 1, got {self.candidates_per_round}")
        if self.containment not in ("full", "center"):
            raise ValueError(f"containment must be 'full' or 'center', got {self.containment!r}")


@dataclass(frozen=True)
class ChipSet:
    """Selected chips plus, per chip, the target ids it newly covered."""

    chips: tuple[Box, ...]
    covered: tuple[tuple[Hashable, ...], ...]
    skipped: tuple[Hashable, ...]  # targets too large for any chip
    image: ImageSize

    @property
    def covered_ids(self) -> set:
        return {oid for group in self.covered for oid in group}


def _containment(chips_xy: np.ndarray, cw: int, ch: int, boxes: np.ndarray, mode: str) -> np.ndarray:
    """(n_chips, n_boxes) bool: does chip at (x, y) cover each box."""
    x = chips_xy[:, 0:1]
    y = chips_xy[:, 1:2]
    if mode == "center":
        cx = boxes[None, :, 0] + boxes[None, :, 2] / 2.0
        cy = boxes[None, :, 1] + boxes[None, :, 3] / 2.0
        return (cx >= x) & (cy >= y) & (cx <= x + cw) & (cy <= y + ch)
    return (
        (boxes[None, :, 0] >= x)
        & (boxes[None, :, 1] >= y)
        & (boxes[None, :, 0] + boxes[None, :, 2] <= x + cw)
        & (boxes[None, :, 1] + boxes[None, :, 3] <= y + ch)
    )


def sample_chips(
    objects: Sequence[tuple[Hashable, Box]],
    image: ImageSize,
    cfg: ChipConfig,
    rng: np.random.Generator | None = None,
) -> ChipSet:
    """Greedy randomized cover of all target objects by square chips.

    Chips never protrude: candidate top-left corners are integer positions
    drawn uniformly over the region where the chip fits, and an image
    smaller than the chip in a dimension makes the chip span that whole
    dimension. When a round's best candidate covers nothing (possible when
    the remaining targets are far from all draws), a fallback chip centered
    on the first uncovered target is emitted, so termination is guaranteed.
    Output is bit-identical for a fixed seed.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    cw = min(cfg.chip_size, image.width)
    ch = min(cfg.chip_size, image.height)

    max_x = image.width - cw
    max_y = image.height - ch

    def _anchor_pos(box: Box) -> tuple[int, int] | None:
        if cfg.containment == "center":
            fx = int(np.clip(math.floor(box.x + box.w / 2.0 - cw / 2.0), 0, max_x))
            fy = int(np.clip(math.floor(box.y + box.h / 2.0 - ch / 2.0), 0, max_y))
            return fx, fy
        # largest integer top-left corner still containing the box, or None
        # when no integer chip position can contain it (side within 1 px of
        # the chip size can leave no integer slot)
        fx = math.floor(min(box.x, max_x))
        fy = math.floor(min(box.y, max_y))
        if fx < max(0.0, box.x2 - cw) or fy < max(0.0, box.y2 - ch):
            return None
        return max(fx, 0), max(fy, 0)

    target_ids: list[Hashable] = []
    target_boxes: list[Box] = []
    anchor_pos: list[tuple[int, int]] = []
    skipped: list[Hashable] = []
    for oid, box in objects:
        if cfg.cover_side_max is not None and box.side >= cfg.cover_side_max:
            continue
        pos = _anchor_pos(box)
        if pos is None:
            logger.warning("object %r (%.1fx%.1f) does not fit a %dx%d chip; excluded from cover",
                           oid, box.w, box.h, cw, ch)
            skipped.append(oid)
            continue
        target_ids.append(oid)
        target_boxes.append(box)
        anchor_pos.append(pos)

    chips: list[Box] = []
    covered_groups: list[tuple[Hashable, ...]] = []
    remaining = np.arange(len(target_ids))
    boxes_arr = np.array([b.as_xywh() for b in target_boxes], dtype=np.float64).reshape(-1, 4)

    while len(remaining):
        xs = rng.integers(0, max_x + 1, size=cfg.candidates_per_round)
        ys = rng.integers(0, max_y + 1, size=cfg.candidates_per_round)
        cand = np.stack([xs, ys], axis=1).astype(np.float64)
        cover = _containment(cand, cw, ch, boxes_arr[remaining], cfg.containment)
        counts = cover.sum(axis=1)
        # ties break by smallest (x, y) for determinism
        order = np.lexsort((cand[:, 1], cand[:, 0], -counts))
        best = order[0]
        if counts[best] == 0:
            # fall back to a position known to contain the first uncovered
            # target, so each round retires at least one object
            fx, fy = anchor_pos[remaining[0]]
            cand_best = np.array([[fx, fy]], dtype=np.float64)
            cover_best = _containment(cand_best, cw, ch, boxes_arr[remaining], cfg.containment)[0]
            cover_best[0] = True
        else:
            cand_best = cand[best : best + 1]
            cover_best = cover[best]
        newly = remaining[cover_best]
        chips.append(Box(float(cand_best[0, 0]), float(cand_best[0, 1]), float(cw), float(ch)))
        covered_groups.append(tuple(target_ids[i] for i in newly))
        remaining = remaining[~cover_best]

    return ChipSet(tuple(chips), tuple(covered_groups), tuple(skipped), image)


def chip_efficiency(chips: ChipSet | Sequence[Box], image: ImageSize) -> float:
    """Union area of the chips as a fraction of the image area."""
    boxes = chips.chips if isinstance(chips, ChipSet) else tuple(chips)
    if not boxes:
        return 0.0
    xs = sorted({v for b in boxes for v in (b.x, b.x2)})
    ys = sorted({v for b in boxes for v in (b.y, b.y2)})
    union = 0.0
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            cx = (xs[i] + xs[i + 1]) / 2.0
            cy = (ys[j] + ys[j + 1]) / 2.0
            if any(b.x <= cx <= b.x2 and b.y <= cy <= b.y2 for b in boxes):
                union += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j])
    return union / image.area
