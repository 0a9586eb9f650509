"""Pyramid planning: per-image rescale factors for (shorter-side, max-side) targets.

A resolution target like (800, 1200) means "rescale so the shorter side
reaches 800 pixels unless the longer side would exceed 1200". Scaling is
always isotropic, so object aspect statistics are unchanged across levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ConfigurationError
from .geometry import ImageSize


@dataclass(frozen=True, order=True)
class ResolutionSpec:
    """Target pair: shorter-side goal and a cap on the maximum side."""

    shorter: int
    max_side: int

    def __post_init__(self):
        if not (0 < self.shorter <= self.max_side):
            raise ValueError(f"need 0 < shorter <= max_side, got ({self.shorter}, {self.max_side})")

    @property
    def key(self) -> str:
        """Canonical level id, e.g. '800x1200'."""
        return f"{self.shorter}x{self.max_side}"

    @classmethod
    def from_key(cls, key: str) -> "ResolutionSpec":
        try:
            shorter, max_side = key.split("x")
            return cls(int(shorter), int(max_side))
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"bad resolution key {key!r}, expected '<shorter>x<max_side>'") from exc


# The three-level configuration used throughout as the default pyramid.
DEFAULT_SPECS: tuple[ResolutionSpec, ...] = (
    ResolutionSpec(480, 800),
    ResolutionSpec(800, 1200),
    ResolutionSpec(1400, 2000),
)


def scale_factor(image: ImageSize, spec: ResolutionSpec) -> float:
    """Isotropic factor mapping the image onto the target; may upsample."""
    return min(spec.shorter / image.shorter, spec.max_side / image.longer)


def _round_px(v: float) -> int:
    # half-up rounding, clamped so degenerate factors still give a raster
    return max(1, int(math.floor(v + 0.5)))


@dataclass(frozen=True)
class PyramidLevel:
    spec: ResolutionSpec
    factor: float
    scaled_size: ImageSize

    @property
    def key(self) -> str:
        return self.spec.key


@dataclass(frozen=True)
class PyramidPlan:
    """Ordered pyramid levels for one image, ascending by shorter-side target."""

    image: ImageSize
    levels: tuple[PyramidLevel, ...]

    def level(self, key: str) -> PyramidLevel:
        for lvl in self.levels:
            if lvl.key == key:
                return lvl
        raise ConfigurationError(f"level {key!r} is not part of this plan "
                                 f"(levels: {[l.key for l in self.levels]})")

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(lvl.key for lvl in self.levels)

    def to_json_dict(self) -> dict:
        return {
            "image": {"width": self.image.width, "height": self.image.height},
            "levels": [
                {
                    "shorter": lvl.spec.shorter,
                    "max_side": lvl.spec.max_side,
                    "factor": lvl.factor,
                    "scaled_width": lvl.scaled_size.width,
                    "scaled_height": lvl.scaled_size.height,
                }
                for lvl in self.levels
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "PyramidPlan":
        image = ImageSize(doc["image"]["width"], doc["image"]["height"])
        levels = tuple(
            PyramidLevel(
                spec=ResolutionSpec(entry["shorter"], entry["max_side"]),
                factor=float(entry["factor"]),
                scaled_size=ImageSize(entry["scaled_width"], entry["scaled_height"]),
            )
            for entry in doc["levels"]
        )
        return cls(image=image, levels=levels)


def build_plan(image: ImageSize, specs: Iterable[ResolutionSpec] = DEFAULT_SPECS) -> PyramidPlan:
    """One level per spec, sorted ascending by shorter-side target."""
    ordered = sorted(specs, key=lambda s: (s.shorter, s.max_side))
    if not ordered:
        raise ValueError("at least one resolution spec is required")
    levels = []
    for spec in ordered:
        f = scale_factor(image, spec)
        scaled = ImageSize(_round_px(image.width * f), _round_px(image.height * f))
        levels.append(PyramidLevel(spec=spec, factor=f, scaled_size=scaled))
    return PyramidPlan(image=image, levels=tuple(levels))
