"""Detection combination: NMS, soft-NMS, cross-scale fusion, ensemble averaging.

Suppression runs once, on the pooled detections from all pyramid levels,
after each level's output has been rescaled to the original frame and
filtered by that level's valid range. All operations are deterministic:
score ties break by box coordinates lexicographically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import AlignmentError
from .geometry import Box, boxes_to_array, iou_matrix, scale_box
from .pyramid import PyramidPlan
from .validity import SnipConfig, filter_detections


@dataclass(frozen=True)
class Detection:
    """Scored class box; ``class_scores`` optionally carries the full
    per-category score vector for ensemble averaging."""

    box: Box
    score: float
    class_id: int = 0
    image_id: int = 0
    source_level: str | None = None
    class_scores: Mapping[int, float] | None = field(default=None, compare=True)

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score must lie in [0, 1], got {self.score}")


def _sort_key(box_arr: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Indices ordering by score descending, box xywh ascending on ties."""
    return np.lexsort((box_arr[:, 3], box_arr[:, 2], box_arr[:, 1], box_arr[:, 0], -scores))


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Classic greedy suppression within one (image, class) partition.

    Keeps the highest-scoring box, drops everything overlapping it strictly
    above the threshold, and repeats on the remainder. Scores are unchanged
    and the output is score-descending.
    """
    if len(dets) <= 1:
        return list(dets)
    boxes = boxes_to_array([d.box for d in dets])
    scores = np.array([d.score for d in dets])
    order = _sort_key(boxes, scores)
    keep: list[int] = []
    while len(order):
        head = order[0]
        keep.append(int(head))
        if len(order) == 1:
            break
        rest = order[1:]
        ious = iou_matrix(boxes[head : head + 1], boxes[rest])[0]
        order = rest[ious <= iou_threshold]
    return [dets[i] for i in keep]


@dataclass(frozen=True)
class SoftNmsParams:
    """Decay method and its parameters; ``score_floor`` prunes the tail."""

    method: str = "gaussian"  # "linear" | "gaussian" | "hard"
    sigma: float = 0.5
    iou_threshold: float = 0.3
    score_floor: float = 0.001

    def __post_init__(self):
        if self.method not in ("linear", "gaussian", "hard"):
            raise ValueError(f"unknown soft-NMS method {self.method!r}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValueError(f"iou_threshold must lie in (0, 1), got {self.iou_threshold}")
        if not 0.0 <= self.score_floor < 1.0:
            raise ValueError(f"score_floor must lie in [0, 1), got {self.score_floor}")


def soft_nms(dets: Sequence[Detection], p: SoftNmsParams) -> list[Detection]:
    """Score-decay suppression within one (image, class) partition.

    Iteratively promotes the current best detection, rescales every
    remaining score by the decay rule against it (linear: s*(1-iou) above
    the threshold; gaussian: s*exp(-iou^2/sigma); hard: zero above the
    threshold), and prunes scores below the floor. Survivors keep their
    final, decayed scores; scores never increase.
    """
    if not dets:
        return []
    boxes = boxes_to_array([d.box for d in dets])
    scores = np.array([d.score for d in dets], dtype=np.float64)
    alive = np.arange(len(dets))
    picked: list[tuple[int, float]] = []
    while len(alive):
        local = _sort_key(boxes[alive], scores[alive])[0]
        head = alive[local]
        picked.append((int(head), float(scores[head])))
        alive = np.delete(alive, local)
        if not len(alive):
            break
        ious = iou_matrix(boxes[head : head + 1], boxes[alive])[0]
        if p.method == "gaussian":
            scores[alive] *= np.exp(-(ious**2) / p.sigma)
        elif p.method == "linear":
            over = ious > p.iou_threshold
            scores[alive[over]] *= 1.0 - ious[over]
        else:  # hard
            scores[alive[ious > p.iou_threshold]] = 0.0
        alive = alive[scores[alive] >= p.score_floor]
    out = [replace(dets[i], score=s) for i, s in picked]
    out.sort(key=lambda d: (-d.score, d.box.x, d.box.y, d.box.w, d.box.h))
    return out


def _partitions(dets: Sequence[Detection]) -> list[list[Detection]]:
    groups: dict[tuple[int, int], list[Detection]] = {}
    for d in dets:
        groups.setdefault((d.image_id, d.class_id), []).append(d)
    return [groups[k] for k in sorted(groups)]


def fuse_scales(
    per_level: Mapping[str, Sequence[Detection]],
    plan: PyramidPlan,
    cfg: SnipConfig,
    p: SoftNmsParams,
) -> list[Detection]:
    """Combine per-level detections into final original-frame detections.

    Each level's detections arrive in that level's scaled coordinates, are
    mapped back by 1/factor, and pass the level's valid range; the pooled
    survivors then undergo soft-NMS independently per (image, class).
    """
    pool: list[Detection] = []
    for level in sorted(per_level):
        lvl = plan.level(level)  # raises ConfigurationError for unknown levels
        rescaled = [
            replace(d, box=scale_box(d.box, 1.0 / lvl.factor), source_level=level)
            for d in per_level[level]
        ]
        pool.extend(filter_detections(rescaled, level, cfg))
    fused: list[Detection] = []
    for group in _partitions(pool):
        fused.extend(soft_nms(group, p))
    return fused


def ensemble_average(per_model: Sequence[Sequence[Detection]]) -> list[Detection]:
    """Average aligned per-proposal predictions across models.

    All models must report the same number of detections in the same
    proposal order. Scores and box coordinates average componentwise; the
    class comes from the argmax of the averaged per-class score vectors
    when every model supplies them, and otherwise must agree across models.
    """
    if not per_model:
        return []
    n = len(per_model[0])
    if any(len(m) != n for m in per_model):
        raise AlignmentError(f"models report different detection counts: {[len(m) for m in per_model]}")
    out: list[Detection] = []
    for i in range(n):
        preds = [m[i] for m in per_model]
        score = sum(d.score for d in preds) / len(preds)
        box = Box(
            sum(d.box.x for d in preds) / len(preds),
            sum(d.box.y for d in preds) / len(preds),
            sum(d.box.w for d in preds) / len(preds),
            sum(d.box.h for d in preds) / len(preds),
        )
        if all(d.class_scores is not None for d in preds):
            keys = set(preds[0].class_scores)
            if any(set(d.class_scores) != keys for d in preds):
                raise AlignmentError(f"per-class score keys disagree at proposal {i}")
            avg = {k: sum(d.class_scores[k] for d in preds) / len(preds) for k in keys}
            class_id = min(avg, key=lambda k: (-avg[k], k))
            class_scores = avg
        else:
            classes = {d.class_id for d in preds}
            if len(classes) > 1:
                raise AlignmentError(
                    f"proposal {i} has conflicting classes {sorted(classes)} "
                    "and no per-class scores to arbitrate"
                )
            class_id = preds[0].class_id
            class_scores = None
        out.append(Detection(box=box, score=score, class_id=class_id,
                             image_id=preds[0].image_id, class_scores=class_scores))
    return out
