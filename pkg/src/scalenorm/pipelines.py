"""Dataset-level orchestration shared by the CLI and the HTTP service.

Per-image work fans out to a bounded thread pool; every merge is keyed and
sorted by image id, so the parallelism degree never changes output bytes.
"""

from __future__ import annotations

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from threading import Lock
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

import numpy as np

from .anchors import AnchorConfig, MatchReport, anchor_array, match_stats
from .chips import ChipConfig, chip_efficiency, sample_chips
from .coco import Dataset, detection_to_result, scale_stats
from .configfile import ToolkitConfig
from .errors import IntegrityError
from .evaluation import SizeBins, evaluate_detections, evaluate_proposals
from .fusion import Detection, SoftNmsParams, fuse_scales
from .geometry import ImageSize, boxes_to_array, clip_box, scale_box
from .pyramid import ResolutionSpec, build_plan, scale_factor
from .simulate import compare_protocols, default_protocols
from .synthetic import PopulationConfig
from .validity import SnipConfig, box_validity, judge_box

T = TypeVar("T")
R = TypeVar("R")


def map_per_image(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Order-preserving map over work items with a bounded worker pool."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --- stats ---------------------------------------------------------------

def run_stats(ds: Dataset, use_box_area: bool = False) -> dict:
    return scale_stats(ds, use_box_area=use_box_area).to_json_dict()


def stats_histogram_csv(stats: Mapping) -> str:
    lines = ["bin_low,bin_high,fraction"]
    hist = stats["histogram"]
    for i, frac in enumerate(hist):
        lines.append(f"{i / len(hist):.2f},{(i + 1) / len(hist):.2f},{frac:.6f}")
    return "\n".join(lines) + "\n"


# --- plan ----------------------------------------------------------------

def run_plan(image: ImageSize, specs: Sequence[ResolutionSpec]) -> dict:
    return build_plan(image, specs).to_json_dict()


def run_plan_dataset(ds: Dataset, specs: Sequence[ResolutionSpec]) -> list[dict]:
    return [
        {"image_id": im.id, **build_plan(im.size, specs).to_json_dict()}
        for im in sorted(ds.images, key=lambda im: im.id)
    ]


# --- anchors -------------------------------------------------------------

def run_anchors(
    ds: Dataset,
    spec: ResolutionSpec,
    cfg: AnchorConfig,
    thresholds: Sequence[float] = (0.5, 0.7),
    jobs: int = 1,
) -> MatchReport:
    """Best-anchor statistics over a dataset rescaled to one resolution.

    Anchor grids depend only on the scaled raster, so they are shared
    through a bounded LRU cache: real datasets have a long tail of distinct
    rasters and an unbounded cache would hold gigabytes of anchors.
    """
    thresholds = tuple(thresholds)
    cache: OrderedDict[tuple[int, int], np.ndarray] = OrderedDict()
    cache_lock = Lock()

    def anchors_for(size: ImageSize) -> np.ndarray:
        key = (size.width, size.height)
        with cache_lock:
            if key in cache:
                cache.move_to_end(key)
                return cache[key]
        grid = anchor_array(cfg, size)
        with cache_lock:
            cache[key] = grid
            while len(cache) > 64:
                cache.popitem(last=False)
        return grid

    def per_image(im) -> MatchReport:
        anns = [a for a in ds.annotations_by_image.get(im.id, []) if not a.iscrowd]
        if not anns:
            return MatchReport(0, np.empty(0), thresholds)
        f = scale_factor(im.size, spec)
        scaled = ImageSize(max(1, round(im.size.width * f)), max(1, round(im.size.height * f)))
        gt = boxes_to_array([a.box for a in anns]) * f
        return match_stats(gt, anchors_for(scaled), thresholds)

    images = sorted(ds.images, key=lambda im: im.id)
    reports = map_per_image(per_image, images, jobs)
    merged = MatchReport(0, np.empty(0), thresholds)
    for r in reports:
        merged = merged.merge(r)
    return merged


# --- chips ---------------------------------------------------------------

def run_chips(
    ds: Dataset,
    spec: ResolutionSpec,
    cfg: ChipConfig,
    snip: SnipConfig,
    cover: str = "level-valid",
    seed: int = 0,
    jobs: int = 1,
) -> tuple[list[dict], dict]:
    """Chips for every image with at least one target; returns per-image
    rows (sorted by image id) and a summary with the mean chips per image.

    ``cover='level-valid'`` targets the objects whose original side falls in
    the classifier range of the sampled level (the objects this level
    trains on); ``'all'`` targets every object.
    """
    level_range = snip.rcn_range(spec.key) if cover == "level-valid" else None

    def per_image(im) -> dict | None:
        anns = [a for a in ds.annotations_by_image.get(im.id, []) if not a.iscrowd]
        if level_range is not None:
            anns = [a for a in anns if box_validity(a.box, level_range)]
        if not anns:
            return None
        f = scale_factor(im.size, spec)
        scaled = ImageSize(max(1, round(im.size.width * f)), max(1, round(im.size.height * f)))
        # raster rounding can leave sub-pixel overhangs on boundary boxes
        objects = [(a.id, clip_box(scale_box(a.box, f), scaled)) for a in anns]
        chip_set = sample_chips(objects, scaled, cfg, rng=np.random.default_rng((seed, im.id)))
        return {
            "image_id": im.id,
            "chips": [{"x": b.x, "y": b.y, "w": b.w, "h": b.h} for b in chip_set.chips],
            "covered": [list(group) for group in chip_set.covered],
            "skipped": list(chip_set.skipped),
            "efficiency": chip_efficiency(chip_set, scaled),
        }

    images = sorted(ds.images, key=lambda im: im.id)
    rows = [r for r in map_per_image(per_image, images, jobs) if r is not None]
    counts = [len(r["chips"]) for r in rows]
    summary = {
        "images": len(ds.images),
        "images_with_targets": len(rows),
        "total_chips": int(sum(counts)),
        "mean_chips_per_image": (float(np.mean(counts)) if counts else 0.0),
        "mean_efficiency": (float(np.mean([r["efficiency"] for r in rows])) if rows else 0.0),
    }
    return rows, summary


# --- filter --------------------------------------------------------------

def run_filter(ds: Dataset, snip: SnipConfig, branch: str = "rcn") -> list[dict]:
    """One validity verdict per (annotation, configured level), as rows."""
    ranges = snip.rcn_ranges if branch == "rcn" else snip.rpn_ranges
    levels = sorted(ranges, key=lambda k: ResolutionSpec.from_key(k))
    rows = []
    for a in sorted(ds.annotations, key=lambda a: a.id):
        for level in levels:
            v = judge_box(a.id, a.box, level, ranges[level])
            rows.append(v.to_json_dict())
    return rows


# --- fuse ----------------------------------------------------------------

def run_fuse(
    ds: Dataset,
    per_level: Mapping[str, Sequence[Detection]],
    specs: Sequence[ResolutionSpec],
    snip: SnipConfig,
    soft: SoftNmsParams,
) -> list[Detection]:
    """Group per-level detections by image, fuse against each image's plan."""
    image_ids: set[int] = set()
    by_image: dict[int, dict[str, list[Detection]]] = {}
    for level, dets in per_level.items():
        for d in dets:
            if d.image_id not in ds.image_by_id:
                raise IntegrityError(f"detection references unknown image id {d.image_id}")
            by_image.setdefault(d.image_id, {}).setdefault(level, []).append(d)
            image_ids.add(d.image_id)
    fused: list[Detection] = []
    for image_id in sorted(image_ids):
        plan = build_plan(ds.image_by_id[image_id].size, specs)
        fused.extend(fuse_scales(by_image[image_id], plan, snip, soft))
    return fused


def detections_to_results(dets: Iterable[Detection]) -> list[dict]:
    return [detection_to_result(d) for d in dets]


# --- eval ----------------------------------------------------------------

def run_eval(ds: Dataset, dets: Sequence[Detection], bins: SizeBins, max_dets: int = 100) -> dict:
    return evaluate_detections(ds, dets, bins, max_dets=max_dets).to_json_dict()


def run_proposal_eval(ds: Dataset, proposals: Sequence[Detection], budget: int, bins: SizeBins) -> dict:
    return evaluate_proposals(ds, proposals, budget, bins).to_json_dict()


def _fmt(v: float | None) -> str:
    return " n/a" if v is None else f"{100.0 * v:5.1f}"


def eval_table(report: Mapping) -> str:
    """Fixed-order human-readable AP table, values x100 at one decimal."""
    head = f"{'AP':>6} {'AP50':>6} {'AP75':>6} {'APs':>6} {'APm':>6} {'APl':>6}"
    row = " ".join(
        f"{_fmt(report[k]):>6}" for k in ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large")
    )
    return head + "\n" + row


def recall_table(report: Mapping) -> str:
    bins = report["recall_at_50"]
    head_bins = " ".join(f"{name:>8}" for name in bins)
    row_bins = " ".join(f"{_fmt(v):>8}" for v in bins.values())
    head = f"{'AR':>6} {'AR50':>6} {'AR75':>6} " + head_bins
    row = f"{_fmt(report['ar']):>6} {_fmt(report['ar50']):>6} {_fmt(report['ar75']):>6} " + row_bins
    return head + "\n" + row


# --- simulate ------------------------------------------------------------

def run_simulate(
    config: ToolkitConfig,
    population: Dataset | PopulationConfig | None = None,
    seed: int = 0,
    protocol_names: Sequence[str] | None = None,
) -> list[dict]:
    names = [n.lower() for n in (protocol_names or config.simulation.protocols)]
    known = {p.name: p for p in default_protocols()}
    unknown = [n for n in names if n not in known]
    if unknown:
        from .errors import ConfigurationError
        raise ConfigurationError(f"unknown protocol(s) {unknown}; available: {sorted(known)}")
    protocols = [known[n] for n in names]
    if population is None:
        population = config.population_config()
    reports = compare_protocols(
        protocols=protocols,
        qm=config.quality.to_quality_model(),
        population=population,
        seed=seed,
        params=config.simulation.to_params(),
    )
    return [r.to_json_dict() for r in reports]


def simulate_table(rows: Sequence[Mapping]) -> str:
    head = " | ".join(f"{r['protocol']:>10}" for r in rows)
    vals = " | ".join(f"{100.0 * r['score']:>10.1f}" for r in rows)
    return head + "\n" + vals
