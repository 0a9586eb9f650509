"""One sectioned JSON config file driving every command.

Every default is pre-filled with the reference settings (the three-level
pyramid, the [0,80] / [40,160] / [120,inf] classifier ranges, 0.3 anchor
invalidation IoU, 1000 px chips with 50 candidates per round, the
32..512 / stride-16 anchor baseline), so an empty config file reproduces
the canonical pipeline.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator

from . import anchors as anchors_mod
from . import chips as chips_mod
from . import evaluation, fusion, simulate, synthetic
from .errors import ConfigurationError
from .pyramid import DEFAULT_SPECS, ResolutionSpec
from .validity import DEFAULT_RCN_RANGES, DEFAULT_RPN_RANGES, SnipConfig, ValidRange


def _range_to_json(r: ValidRange) -> list:
    return [r.lo, None if math.isinf(r.hi) else r.hi]


class PyramidSection(BaseModel):
    specs: list[tuple[int, int]] = Field(default_factory=lambda: [(s.shorter, s.max_side) for s in DEFAULT_SPECS])

    def to_specs(self) -> tuple[ResolutionSpec, ...]:
        return tuple(ResolutionSpec(s, m) for s, m in self.specs)


class ValiditySection(BaseModel):
    rcn_ranges: dict[str, tuple[float, Optional[float]]] = Field(
        default_factory=lambda: {k: tuple(_range_to_json(v)) for k, v in DEFAULT_RCN_RANGES.items()})
    rpn_ranges: dict[str, tuple[float, Optional[float]]] = Field(
        default_factory=lambda: {k: tuple(_range_to_json(v)) for k, v in DEFAULT_RPN_RANGES.items()})
    anchor_invalidate_iou: float = 0.3
    proposal_label_iou: float = 0.5

    def to_snip_config(self) -> SnipConfig:
        return SnipConfig(
            rcn_ranges={k: ValidRange.from_json(v) for k, v in self.rcn_ranges.items()},
            rpn_ranges={k: ValidRange.from_json(v) for k, v in self.rpn_ranges.items()},
            anchor_invalidate_iou=self.anchor_invalidate_iou,
            proposal_label_iou=self.proposal_label_iou,
        )


class AnchorsSection(BaseModel):
    scales: list[float] = Field(default_factory=lambda: list(anchors_mod.BASELINE_SCALES))
    improved_scales: list[float] = Field(default_factory=lambda: list(anchors_mod.IMPROVED_SCALES))
    aspect_ratios: list[float] = [0.5, 1.0, 2.0]
    stride: int = 16
    thresholds: list[float] = [0.5, 0.7]
    spec: tuple[int, int] = (800, 1200)

    def to_anchor_config(self, improved: bool = False) -> anchors_mod.AnchorConfig:
        return anchors_mod.AnchorConfig(
            scales=tuple(self.improved_scales if improved else self.scales),
            aspect_ratios=tuple(self.aspect_ratios),
            stride=self.stride,
        )


class ChipsSection(BaseModel):
    chip_size: int = 1000
    candidates_per_round: int = 50
    cover_side_max: Optional[float] = None
    containment: str = "full"
    cover: str = "level-valid"  # or "all": which objects the chips must contain
    spec: tuple[int, int] = (1400, 2000)

    @field_validator("cover")
    @classmethod
    def _check_cover(cls, v):
        if v not in ("level-valid", "all"):
            raise ValueError(f"cover must be 'level-valid' or 'all', got {v!r}")
        return v

    def to_chip_config(self, rng_seed: int = 0) -> chips_mod.ChipConfig:
        return chips_mod.ChipConfig(
            chip_size=self.chip_size,
            candidates_per_round=self.candidates_per_round,
            cover_side_max=self.cover_side_max,
            containment=self.containment,
            rng_seed=rng_seed,
        )


class SoftNmsSection(BaseModel):
    method: str = "gaussian"
    sigma: float = 0.5
    iou_threshold: float = 0.3
    score_floor: float = 0.001

    def to_params(self) -> fusion.SoftNmsParams:
        return fusion.SoftNmsParams(self.method, self.sigma, self.iou_threshold, self.score_floor)


class EvalSection(BaseModel):
    small_max_area: float = 32.0**2
    medium_max_area: float = 96.0**2
    side_edges: list[float] = [25.0, 50.0, 100.0]
    max_dets: int = 100
    proposal_budget: int = 900

    def to_bins(self) -> evaluation.SizeBins:
        return evaluation.SizeBins(self.small_max_area, self.medium_max_area, tuple(self.side_edges))


class QualitySection(BaseModel):
    preset: Optional[str] = None  # overrides the numeric fields when set
    pretrain_side: float = 224.0
    peak_quality: float = 0.9
    low_decay: float = 0.35
    high_decay: float = 0.35

    @field_validator("preset")
    @classmethod
    def _check_preset(cls, v):
        if v is not None and v not in simulate.QUALITY_PRESETS:
            raise ValueError(f"unknown quality preset {v!r}; available: {sorted(simulate.QUALITY_PRESETS)}")
        return v

    def to_quality_model(self) -> simulate.QualityModel:
        if self.preset is not None:
            return simulate.QUALITY_PRESETS[self.preset]
        return simulate.QualityModel(self.pretrain_side, self.peak_quality, self.low_decay, self.high_decay)


class SimulationSection(BaseModel):
    bucket_share: float = 0.55
    mass_halfsat: float = 1.0
    population_images: int = 500
    protocols: list[str] = Field(default_factory=lambda: list(simulate.PROTOCOL_ORDER))

    def to_params(self) -> simulate.SimulationParams:
        return simulate.SimulationParams(bucket_share=self.bucket_share, mass_halfsat=self.mass_halfsat)


class ToolkitConfig(BaseModel):
    """Top-level sectioned configuration with reference defaults."""

    pyramid: PyramidSection = Field(default_factory=PyramidSection)
    validity: ValiditySection = Field(default_factory=ValiditySection)
    anchors: AnchorsSection = Field(default_factory=AnchorsSection)
    chips: ChipsSection = Field(default_factory=ChipsSection)
    soft_nms: SoftNmsSection = Field(default_factory=SoftNmsSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    quality: QualitySection = Field(default_factory=QualitySection)
    simulation: SimulationSection = Field(default_factory=SimulationSection)

    @classmethod
    def load(cls, path: str | Path | None) -> "ToolkitConfig":
        if path is None:
            return cls()
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: malformed config JSON: {exc.msg} at offset {exc.pos}") from exc
        except OSError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        try:
            return cls.model_validate(doc)
        except Exception as exc:
            raise ConfigurationError(f"{path}: invalid config: {exc}") from exc

    def population_config(self, images: int | None = None) -> synthetic.PopulationConfig:
        return synthetic.PopulationConfig(images=images or self.simulation.population_images)
