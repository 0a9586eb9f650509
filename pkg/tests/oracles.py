"""Independent brute-force oracles used to cross-check the analytic paths.

Nothing here shares code with the package: IoU is counted pixel by pixel
on a rasterized grid, matching and interpolation are literal re-readings
of the evaluation protocol, and the chip-cover optimum is an exhaustive
set-cover search over a breakpoint grid.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def raster_iou(a: tuple, b: tuple) -> float:
    """Pixel-count IoU for integer xywh boxes via boolean grid fill."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    x0 = min(ax, bx)
    y0 = min(ay, by)
    w = max(ax + aw, bx + bw) - x0 + 1
    h = max(ay + ah, by + bh) - y0 + 1
    ga = np.zeros((h, w), dtype=bool)
    gb = np.zeros((h, w), dtype=bool)
    ga[ay - y0 : ay - y0 + ah, ax - x0 : ax - x0 + aw] = True
    gb[by - y0 : by - y0 + bh, bx - x0 : bx - x0 + bw] = True
    union = np.count_nonzero(ga | gb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ga & gb) / union


# --- evaluation oracle -----------------------------------------------------

def _iou_xywh(d, g, crowd: bool) -> float:
    ix = min(d[0] + d[2], g[0] + g[2]) - max(d[0], g[0])
    iy = min(d[1] + d[3], g[1] + g[3]) - max(d[1], g[1])
    inter = max(ix, 0.0) * max(iy, 0.0)
    denom = d[2] * d[3] if crowd else d[2] * d[3] + g[2] * g[3] - inter
    return inter / denom if denom > 0 else 0.0


def exhaustive_ap(
    gts_by_image: dict,
    dets_by_image: dict,
    thresholds,
    area_range=(0.0, math.inf),
    max_dets: int = 100,
):
    """AP per threshold for ONE category, by literal protocol re-reading.

    gts_by_image: image_id -> list of (xywh, area, iscrowd)
    dets_by_image: image_id -> list of (xywh, score)
    Returns (aps, npig); aps is None when the bin holds no ground truth.
    """
    lo, hi = area_range
    records = {t: [] for t in thresholds}
    npig = 0
    images = sorted(set(gts_by_image) | set(dets_by_image))
    for img in images:
        gts = gts_by_image.get(img, [])
        dets = sorted(dets_by_image.get(img, []),
                      key=lambda d: (-d[1], d[0][0], d[0][1], d[0][2], d[0][3]))[:max_dets]
        gt_ignore = [bool(crowd) or area < lo or area >= hi for (_, area, crowd) in gts]
        npig += sum(1 for ig in gt_ignore if not ig)
        order = sorted(range(len(gts)), key=lambda i: gt_ignore[i])
        for t in thresholds:
            taken = set()
            for box, score in dets:
                best, best_iou = -1, min(t, 1 - 1e-10)
                for g in order:
                    crowd = bool(gts[g][2])
                    if g in taken and not crowd:
                        continue
                    if best > -1 and not gt_ignore[best] and gt_ignore[g]:
                        break
                    iou = _iou_xywh(box, gts[g][0], crowd)
                    if iou < best_iou:
                        continue
                    best, best_iou = g, iou
                if best == -1:
                    det_out = box[2] * box[3] < lo or box[2] * box[3] >= hi
                    records[t].append((score, box, False, det_out))
                else:
                    taken.add(best)
                    records[t].append((score, box, True, gt_ignore[best]))
    if npig == 0:
        return None, 0
    aps = []
    for t in thresholds:
        rows = sorted(records[t], key=lambda r: (-r[0], r[1][0], r[1][1], r[1][2], r[1][3]))
        kept = [r for r in rows if not r[3]]
        tp = fp = 0
        points = []  # (recall, precision) after each detection
        for _, _, matched, _ in kept:
            tp += matched
            fp += not matched
            points.append((tp / npig, tp / (tp + fp)))
        ap = 0.0
        for r in np.linspace(0, 1, 101):
            best = max((p for rc, p in points if rc >= r), default=0.0)
            ap += best / 101.0
        aps.append(ap)
    return aps, npig


def exhaustive_recall(gts_by_image: dict, props_by_image: dict, budget: int, threshold: float):
    """Fraction of ground truths reached by a kept proposal at IoU >= t."""
    hit = total = 0
    for img, gts in gts_by_image.items():
        props = sorted(props_by_image.get(img, []),
                       key=lambda d: (-d[1], d[0][0], d[0][1], d[0][2], d[0][3]))[:budget]
        for gbox, _, crowd in gts:
            if crowd:
                continue
            total += 1
            if any(_iou_xywh(p, gbox, False) >= threshold for p, _ in props):
                hit += 1
    return hit / total if total else None


# --- chip cover oracle -----------------------------------------------------

def min_chip_cover(boxes, image_w: int, image_h: int, chip: int) -> int:
    """Exact minimum number of chip positions containing every box.

    Candidate corner coordinates come from the per-box containment
    intervals: a chip at x contains box i iff x in [x2_i - cw, x_i], so
    some optimum uses only interval endpoints (clamped to the image).
    """
    cw = min(chip, image_w)
    ch = min(chip, image_h)
    max_x, max_y = image_w - cw, image_h - ch

    def candidates(lo_edge, hi_edge, max_pos):
        vals = set()
        for lo, hi in zip(lo_edge, hi_edge):
            vals.add(min(max(math.floor(hi), 0), max_pos))
            vals.add(min(max(math.ceil(max(lo, 0.0)), 0), max_pos))
        return sorted(vals)

    xs = candidates([b[0] + b[2] - cw for b in boxes], [b[0] for b in boxes], max_x)
    ys = candidates([b[1] + b[3] - ch for b in boxes], [b[1] for b in boxes], max_y)

    covers = []
    for x, y in itertools.product(xs, ys):
        covered = frozenset(
            i for i, b in enumerate(boxes)
            if b[0] >= x and b[1] >= y and b[0] + b[2] <= x + cw and b[1] + b[3] <= y + ch
        )
        if covered:
            covers.append(covered)
    covers = sorted(set(covers), key=lambda s: (-len(s), sorted(s)))
    # drop dominated candidate sets
    pruned = []
    for s in covers:
        if not any(s < t for t in pruned):
            pruned.append(s)
    everything = frozenset(range(len(boxes)))
    if not everything:
        return 0
    for k in range(1, len(boxes) + 1):
        for combo in itertools.combinations(pruned, k):
            union = frozenset().union(*combo)
            if union == everything:
                return k
    raise AssertionError("uncoverable fixture passed to min_chip_cover")
