"""COCO-protocol detection metrics and proposal recall.

Implements the published COCO evaluation procedure: greedy score-ordered
matching with at most one detection per ground truth, crowd regions as
ignore-matches (overlap measured as intersection over detection area),
101-point interpolated precision, averages over the 10 IoU thresholds
0.50:0.05:0.95, and a cap of 100 detections per image and category.
Undefined quantities (no ground truth in a bin) are reported as None,
never as 0, so they cannot corrupt summary averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .coco import Dataset
from .errors import IntegrityError
from .fusion import Detection
from .geometry import boxes_to_array, intersection_matrix

IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS: np.ndarray = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class SizeBins:
    """Area bins (small/medium/large) for AP plus side-length bins for recall.

    Area-bin membership uses the annotation's ``area`` field in original
    pixels; bins are half-open [lo, hi) so they partition (0, inf).
    """

    small_max: float = 32.0**2
    medium_max: float = 96.0**2
    side_edges: tuple[float, ...] = (25.0, 50.0, 100.0)

    def area_ranges(self) -> dict[str, tuple[float, float]]:
        return {
            "all": (0.0, math.inf),
            "small": (0.0, self.small_max),
            "medium": (self.small_max, self.medium_max),
            "large": (self.medium_max, math.inf),
        }

    def side_ranges(self) -> dict[str, tuple[float, float]]:
        edges = (0.0, *self.side_edges, math.inf)
        out = {}
        for lo, hi in zip(edges[:-1], edges[1:]):
            name = f"{lo:g}-{hi:g}" if math.isfinite(hi) else f">{lo:g}"
            out[name] = (lo, hi)
        return out


DEFAULT_BINS = SizeBins()


@dataclass(frozen=True)
class EvalReport:
    """AP summary; values in [0, 1], None where undefined."""

    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None
    per_class: Mapping[int, float | None] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "ap": self.ap, "ap50": self.ap50, "ap75": self.ap75,
            "ap_small": self.ap_small, "ap_medium": self.ap_medium, "ap_large": self.ap_large,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
        }


@dataclass(frozen=True)
class RecallReport:
    """Proposal recall at a fixed per-image budget."""

    ar: float | None
    ar50: float | None
    ar75: float | None
    recall_at_50: Mapping[str, float | None]
    budget: int
    total_gt: int

    def to_json_dict(self) -> dict:
        return {
            "ar": self.ar, "ar50": self.ar50, "ar75": self.ar75,
            "recall_at_50": dict(self.recall_at_50),
            "budget": self.budget, "total_gt": self.total_gt,
        }


def _det_sort(dets: Sequence[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: (-d.score, d.box.x, d.box.y, d.box.w, d.box.h))


def _iou_vs_gt(dt_boxes: np.ndarray, gt_boxes: np.ndarray, gt_crowd: np.ndarray) -> np.ndarray:
    """IoU matrix where crowd ground truths use intersection / detection area."""
    inter = intersection_matrix(dt_boxes, gt_boxes)
    dt_area = (dt_boxes[:, 2] * dt_boxes[:, 3])[:, None]
    gt_area = (gt_boxes[:, 2] * gt_boxes[:, 3])[None, :]
    union = dt_area + gt_area - inter
    denom = np.where(gt_crowd[None, :], dt_area, union)
    out = np.zeros_like(inter)
    np.divide(inter, denom, out=out, where=denom > 0)
    return out


def _match_group(
    ious: np.ndarray,
    gt_ignore: np.ndarray,
    gt_crowd: np.ndarray,
    thresholds: Sequence[float],
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy matching for one (image, category, area-bin) group.

    Returns (matched, ignored) boolean arrays of shape (T, n_dt). Ground
    truths are visited non-ignored first; a detection takes the available
    ground truth of highest IoU above the threshold, can still match an
    already-taken crowd region, and stops considering ignored ground truths
    once it holds a normal match.
    """
    n_dt, n_gt = ious.shape
    order = np.argsort(gt_ignore, kind="stable")
    matched = np.zeros((len(thresholds), n_dt), dtype=bool)
    ignored = np.zeros((len(thresholds), n_dt), dtype=bool)
    for ti, t in enumerate(thresholds):
        gt_taken = np.full(n_gt, -1)
        for d in range(n_dt):
            best_iou = min(t, 1.0 - 1e-10)
            m = -1
            for g in order:
                if gt_taken[g] >= 0 and not gt_crowd[g]:
                    continue
                if m > -1 and not gt_ignore[m] and gt_ignore[g]:
                    break
                if ious[d, g] < best_iou:
                    continue
                best_iou = ious[d, g]
                m = g
            if m == -1:
                continue
            gt_taken[m] = d
            matched[ti, d] = True
            ignored[ti, d] = gt_ignore[m]
    return matched, ignored


def _average_precision(
    scores: np.ndarray,
    box_keys: np.ndarray,
    matched: np.ndarray,
    ignored: np.ndarray,
    npig: int,
) -> np.ndarray:
    """101-point interpolated AP per threshold for one (class, bin) cell."""
    n_t = matched.shape[0]
    aps = np.zeros(n_t)
    order = np.lexsort((box_keys[:, 3], box_keys[:, 2], box_keys[:, 1], box_keys[:, 0], -scores))
    for ti in range(n_t):
        keep = ~ignored[ti, order]
        tp = np.cumsum(matched[ti, order][keep])
        fp = np.cumsum(~matched[ti, order][keep])
        if len(tp) == 0:
            aps[ti] = 0.0
            continue
        recall = tp / npig
        precision = tp / np.maximum(tp + fp, 1e-12)
        # monotone envelope from the right, then sample at the recall grid
        for i in range(len(precision) - 1, 0, -1):
            precision[i - 1] = max(precision[i - 1], precision[i])
        idx = np.searchsorted(recall, RECALL_POINTS, side="left")
        q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
        aps[ti] = float(q.mean())
    return aps


def _check_references(ds: Dataset, dets: Sequence[Detection]) -> None:
    for d in dets:
        if d.image_id not in ds.image_by_id:
            raise IntegrityError(f"detection references unknown image id {d.image_id}")
        if d.class_id not in ds.category_by_id:
            raise IntegrityError(f"detection references unknown category id {d.class_id}")


def evaluate_detections(
    ds: Dataset,
    dets: Sequence[Detection],
    bins: SizeBins = DEFAULT_BINS,
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
    max_dets: int = 100,
) -> EvalReport:
    """Full COCO-style AP report over a dataset and its detections."""
    _check_references(ds, dets)
    thresholds = tuple(iou_thresholds)
    area_ranges = bins.area_ranges()

    dt_by_group: dict[tuple[int, int], list[Detection]] = {}
    for d in dets:
        dt_by_group.setdefault((d.class_id, d.image_id), []).append(d)
    gt_by_group: dict[tuple[int, int], list] = {}
    for a in ds.annotations:
        gt_by_group.setdefault((a.category_id, a.image_id), []).append(a)

    cat_ids = sorted(ds.category_by_id)
    bin_names = list(area_ranges)
    # per (cat, bin): accumulated detection records and non-ignored GT count
    acc: dict[tuple[int, str], dict] = {
        (c, b): {"scores": [], "keys": [], "matched": [], "ignored": [], "npig": 0}
        for c in cat_ids for b in bin_names
    }

    groups = sorted(set(dt_by_group) | set(gt_by_group))
    for cat, img in groups:
        dts = _det_sort(dt_by_group.get((cat, img), []))[:max_dets]
        gts = gt_by_group.get((cat, img), [])
        dt_boxes = boxes_to_array([d.box for d in dts])
        gt_boxes = boxes_to_array([g.box for g in gts])
        gt_crowd = np.array([bool(g.iscrowd) for g in gts], dtype=bool)
        gt_area = np.array([g.area for g in gts], dtype=np.float64)
        dt_area = dt_boxes[:, 2] * dt_boxes[:, 3] if len(dts) else np.empty(0)
        ious = _iou_vs_gt(dt_boxes, gt_boxes, gt_crowd) if len(dts) and len(gts) else np.zeros((len(dts), len(gts)))

        for bin_name in bin_names:
            lo, hi = area_ranges[bin_name]
            gt_ignore = gt_crowd | (gt_area < lo) | (gt_area >= hi)
            matched, ignored = _match_group(ious, gt_ignore, gt_crowd, thresholds)
            dt_out = (dt_area < lo) | (dt_area >= hi)
            ignored |= (~matched) & dt_out[None, :]
            cell = acc[(cat, bin_name)]
            cell["scores"].append(np.array([d.score for d in dts]))
            cell["keys"].append(dt_boxes)
            cell["matched"].append(matched)
            cell["ignored"].append(ignored)
            cell["npig"] += int(np.sum(~gt_ignore))

    # per (cat, bin, threshold) APs; None where the bin holds no ground truth
    ap_cell: dict[tuple[int, str], np.ndarray | None] = {}
    for key, cell in acc.items():
        if cell["npig"] == 0:
            ap_cell[key] = None
            continue
        scores = np.concatenate(cell["scores"]) if cell["scores"] else np.empty(0)
        keys = np.concatenate(cell["keys"]) if cell["keys"] else np.empty((0, 4))
        matched = np.concatenate(cell["matched"], axis=1) if cell["matched"] else np.zeros((len(thresholds), 0), dtype=bool)
        ignored = np.concatenate(cell["ignored"], axis=1) if cell["ignored"] else np.zeros((len(thresholds), 0), dtype=bool)
        ap_cell[key] = _average_precision(scores, keys, matched, ignored, cell["npig"])

    def mean_over(bin_name: str, t_index: int | None = None) -> float | None:
        vals = []
        for c in cat_ids:
            cell = ap_cell[(c, bin_name)]
            if cell is None:
                continue
            vals.append(cell.mean() if t_index is None else cell[t_index])
        return float(np.mean(vals)) if vals else None

    per_class = {
        c: (None if ap_cell[(c, "all")] is None else float(ap_cell[(c, "all")].mean()))
        for c in cat_ids
    }
    t50 = thresholds.index(0.5) if 0.5 in thresholds else None
    t75 = thresholds.index(0.75) if 0.75 in thresholds else None
    return EvalReport(
        ap=mean_over("all"),
        ap50=mean_over("all", t50) if t50 is not None else None,
        ap75=mean_over("all", t75) if t75 is not None else None,
        ap_small=mean_over("small"),
        ap_medium=mean_over("medium"),
        ap_large=mean_over("large"),
        per_class=per_class,
    )


def evaluate_proposals(
    ds: Dataset,
    proposals: Sequence[Detection],
    budget: int,
    bins: SizeBins = DEFAULT_BINS,
    iou_thresholds: Sequence[float] = IOU_THRESHOLDS,
) -> RecallReport:
    """Class-agnostic recall of the top-``budget`` proposals per image.

    Recall at threshold t is the fraction of non-crowd ground truths whose
    best kept proposal reaches IoU >= t; AR averages recall over the
    standard thresholds. Side-length bins report recall at 0.5 only.
    """
    if budget <= 0:
        raise ValueError(f"proposal budget must be positive, got {budget}")
    for p in proposals:
        if p.image_id not in ds.image_by_id:
            raise IntegrityError(f"proposal references unknown image id {p.image_id}")

    by_image: dict[int, list[Detection]] = {}
    for p in proposals:
        by_image.setdefault(p.image_id, []).append(p)

    gts = [a for a in ds.annotations if not a.iscrowd]
    best = np.zeros(len(gts))
    sides = np.array([math.sqrt(a.area) for a in gts])
    gt_index: dict[int, list[int]] = {}
    for i, a in enumerate(gts):
        gt_index.setdefault(a.image_id, []).append(i)

    for image_id, idxs in gt_index.items():
        kept = _det_sort(by_image.get(image_id, []))[:budget]
        if not kept:
            continue
        gt_boxes = boxes_to_array([gts[i].box for i in idxs])
        pr_boxes = boxes_to_array([p.box for p in kept])
        inter = intersection_matrix(gt_boxes, pr_boxes)
        union = (gt_boxes[:, 2] * gt_boxes[:, 3])[:, None] + (pr_boxes[:, 2] * pr_boxes[:, 3])[None, :] - inter
        ious = np.zeros_like(inter)
        np.divide(inter, union, out=ious, where=union > 0)
        best[idxs] = ious.max(axis=1)

    def recall_at(t: float, mask: np.ndarray | None = None) -> float | None:
        sel = best if mask is None else best[mask]
        return float(np.mean(sel >= t)) if len(sel) else None

    thresholds = tuple(iou_thresholds)
    if len(gts):
        ar = float(np.mean([recall_at(t) for t in thresholds]))
    else:
        ar = None
    side_recall = {
        name: recall_at(0.5, (sides >= lo) & (sides < hi))
        for name, (lo, hi) in bins.side_ranges().items()
    }
    return RecallReport(
        ar=ar,
        ar50=recall_at(0.5),
        ar75=recall_at(0.75),
        recall_at_50=side_recall,
        budget=budget,
        total_gt=len(gts),
    )
