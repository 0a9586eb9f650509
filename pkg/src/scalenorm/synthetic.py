"""Synthetic COCO-like dataset generation.

Produces annotation-only datasets whose instance statistics mirror large
real-world detection benchmarks, so dataset-scale behaviour can be checked
without shipping gigabytes of annotations. Calibration targets:

- relative scale sqrt(area / image area) per instance: log-normal with
  median 0.106 and 10th/90th percentiles near 0.024 / 0.472;
- best-anchor overlap of ground truth at the (800, 1200) resolution with
  the 15-anchor baseline grid: roughly 30% of instances at IoU >= 0.7 and
  about 58% at IoU >= 0.5;
- images predominantly 640 px on the long side, instance counts per image
  heavily overdispersed (mean ~7), a ~1% crowd fraction.

Box aspect ratios are a three-component mixture: a portrait mode around
0.5 (people), a boxy core around 1, and an elongated tail (poles, skis,
occlusion slivers) that is far more common among small instances. The
size-aspect coupling is what separates the two anchor-match fractions;
independent aspects cannot reproduce both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coco import Annotation, Category, Dataset, ImageRecord
from .geometry import Box, ImageSize

# (width, height, sampling weight): common benchmark rasters, mostly
# landscape 640-wide with a portrait minority.
IMAGE_SIZE_POOL: tuple[tuple[int, int, float], ...] = (
    (640, 480, 0.38),
    (640, 427, 0.20),
    (640, 425, 0.07),
    (640, 360, 0.05),
    (612, 612, 0.04),
    (500, 375, 0.06),
    (480, 640, 0.08),
    (427, 640, 0.07),
    (375, 500, 0.03),
    (640, 512, 0.02),
)


@dataclass(frozen=True)
class PopulationConfig:
    """Generative parameters, calibrated per the module docstring."""

    images: int = 2000
    rel_scale_log_median: float = math.log(0.106)
    rel_scale_log_sd: float = 1.159
    # aspect mixture: portrait mode, boxy core, elongated tail
    portrait_fraction: float = 0.40
    portrait_aspect_log_mean: float = -0.69
    portrait_aspect_log_sd: float = 0.20
    core_aspect_log_sd: float = 0.30
    elongated_fraction_small: float = 0.66
    elongated_fraction_other: float = 0.10
    small_rel_cutoff: float = 0.082
    elongated_aspect_log_mean: float = 1.9
    elongated_aspect_log_sd: float = 0.45
    # spatial clustering: objects co-occur around a few scene anchors
    cluster_fraction: float = 0.8
    cluster_spread: float = 0.10  # gaussian sd as a fraction of the image dimension
    clusters_mean: float = 1.0
    cluster_center_beta: float = 2.0  # centers drawn Beta(b, b) per axis, biased inward
    # instance counts and annotation plumbing
    mean_instances: float = 7.3
    instances_dispersion: float = 1.3  # negative-binomial shape; lower = heavier tail
    crowd_fraction: float = 0.01
    categories: int = 80
    mask_fill_lo: float = 0.28  # mask area / box area
    mask_fill_hi: float = 0.72

    def __post_init__(self):
        if self.images < 1:
            raise ValueError("need at least one image")
        if not 0 < self.mask_fill_lo <= self.mask_fill_hi <= 1:
            raise ValueError("mask fill bounds must satisfy 0 < lo <= hi <= 1")


def _draw_log_aspect(rng: np.random.Generator, rel: float, cfg: PopulationConfig) -> float:
    elongated = (
        cfg.elongated_fraction_small if rel < cfg.small_rel_cutoff else cfg.elongated_fraction_other
    )
    u = rng.random()
    if u < elongated:
        mag = abs(rng.normal(cfg.elongated_aspect_log_mean, cfg.elongated_aspect_log_sd))
        return mag if rng.random() < 0.5 else -mag
    if u < elongated + cfg.portrait_fraction:
        return rng.normal(cfg.portrait_aspect_log_mean, cfg.portrait_aspect_log_sd)
    return rng.normal(0.0, cfg.core_aspect_log_sd)


def generate_dataset(cfg: PopulationConfig = PopulationConfig(), seed: int = 0) -> Dataset:
    """Draw a synthetic dataset; bit-identical for a fixed seed."""
    rng = np.random.default_rng(seed)
    sizes = np.array([(w, h) for w, h, _ in IMAGE_SIZE_POOL])
    weights = np.array([p for _, _, p in IMAGE_SIZE_POOL])
    weights = weights / weights.sum()

    categories = [Category(id=k + 1, name=f"class_{k + 1:02d}") for k in range(cfg.categories)]
    cat_weights = 1.0 / np.arange(1, cfg.categories + 1) ** 0.9
    cat_weights /= cat_weights.sum()

    images: list[ImageRecord] = []
    annotations: list[Annotation] = []
    ann_id = 1
    for image_id in range(1, cfg.images + 1):
        w, h = sizes[rng.choice(len(sizes), p=weights)]
        size = ImageSize(int(w), int(h))
        images.append(ImageRecord(id=image_id, size=size))

        p = cfg.instances_dispersion / (cfg.instances_dispersion + cfg.mean_instances)
        count = min(int(rng.negative_binomial(cfg.instances_dispersion, p)), 80)
        n_clusters = 1 + int(rng.poisson(cfg.clusters_mean))
        cluster_xy = rng.beta(cfg.cluster_center_beta, cfg.cluster_center_beta, size=(n_clusters, 2))
        for _ in range(count):
            rel = float(np.exp(rng.normal(cfg.rel_scale_log_median, cfg.rel_scale_log_sd)))
            if rel > 0.85:
                # whole-image objects pile up just below 1 instead of being
                # redistributed, which would squash the upper quantiles
                rel = float(rng.uniform(0.85, 0.98))
            area = rel * rel * size.area  # the mask-style area field
            fill = float(rng.uniform(cfg.mask_fill_lo, cfg.mask_fill_hi))
            box_area = area / fill
            if box_area > size.area:
                box_area = float(size.area)
                area = box_area * fill
            aspect = min(max(math.exp(_draw_log_aspect(rng, rel, cfg)), 0.05), 20.0)
            # squeeze aspect into the feasible band so large boxes keep
            # their area instead of being truncated at the raster edge
            aspect = min(max(aspect, box_area / size.height**2), size.width**2 / box_area)
            bw = min(math.sqrt(box_area * aspect), float(size.width))
            bh = min(math.sqrt(box_area / aspect), float(size.height))
            if rng.random() < cfg.cluster_fraction:
                c = cluster_xy[int(rng.integers(n_clusters))]
                x = c[0] * size.width + rng.normal(0.0, cfg.cluster_spread * size.width)
                y = c[1] * size.height + rng.normal(0.0, cfg.cluster_spread * size.height)
                x = float(np.clip(x - bw / 2.0, 0.0, size.width - bw))
                y = float(np.clip(y - bh / 2.0, 0.0, size.height - bh))
            else:
                x = float(rng.uniform(0.0, size.width - bw))
                y = float(rng.uniform(0.0, size.height - bh))
            annotations.append(
                Annotation(
                    id=ann_id,
                    image_id=image_id,
                    category_id=int(rng.choice(cfg.categories, p=cat_weights)) + 1,
                    box=Box(round(x, 2), round(y, 2), round(bw, 2), round(bh, 2)),
                    area=round(area, 2),
                    iscrowd=bool(rng.random() < cfg.crowd_fraction),
                )
            )
            ann_id += 1
    return Dataset(images, annotations, categories)
