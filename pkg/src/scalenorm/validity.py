"""Size-validity gating for pyramid training and inference.

Each pyramid level trains and tests only on objects whose original-image
size falls inside that level's valid range, so every object is handled at
the scale(s) that place it near the backbone's pre-training resolution.
Validity is always measured on the original-frame box, never the rescaled
one, and range bounds are inclusive at both ends: that is the only reading
under which adjacent default ranges overlap by exactly 40 pixels.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence, TypeVar

import numpy as np

from .errors import ConfigurationError
from .geometry import Box, boxes_to_array, iou_matrix


@dataclass(frozen=True)
class ValidRange:
    """Closed interval [lo, hi] of original-image side lengths; hi may be inf."""

    lo: float
    hi: float

    def __post_init__(self):
        if self.lo < 0:
            raise ValueError(f"range lower bound must be >= 0, got {self.lo}")
        if not self.lo < self.hi:
            raise ValueError(f"range must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, side: float) -> bool:
        return self.lo <= side <= self.hi

    def to_json(self) -> list:
        return [self.lo, None if math.isinf(self.hi) else self.hi]

    @classmethod
    def from_json(cls, pair) -> "ValidRange":
        lo, hi = pair
        return cls(float(lo), math.inf if hi in (None, "inf") else float(hi))


# Classifier-branch ranges for the default three-level pyramid.
DEFAULT_RCN_RANGES: Mapping[str, ValidRange] = {
    "480x800": ValidRange(120, math.inf),
    "800x1200": ValidRange(40, 160),
    "1400x2000": ValidRange(0, 80),
}

# Proposal-branch ranges. Only the (800,1200) value is prescribed ([0,160],
# wider than the classifier's because even a one-pixel feature can seed a
# proposal); the outer levels default to the classifier ranges.
DEFAULT_RPN_RANGES: Mapping[str, ValidRange] = {
    "480x800": ValidRange(120, math.inf),
    "800x1200": ValidRange(0, 160),
    "1400x2000": ValidRange(0, 80),
}


@dataclass(frozen=True)
class SnipConfig:
    """Per-level valid ranges plus the two gating IoU thresholds."""

    rcn_ranges: Mapping[str, ValidRange] = field(default_factory=lambda: dict(DEFAULT_RCN_RANGES))
    rpn_ranges: Mapping[str, ValidRange] = field(default_factory=lambda: dict(DEFAULT_RPN_RANGES))
    anchor_invalidate_iou: float = 0.3
    proposal_label_iou: float = 0.5

    def __post_init__(self):
        for name, v in (("anchor_invalidate_iou", self.anchor_invalidate_iou),
                        ("proposal_label_iou", self.proposal_label_iou)):
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")

    def rcn_range(self, level: str) -> ValidRange:
        return self._lookup(self.rcn_ranges, level, "rcn")

    def rpn_range(self, level: str) -> ValidRange:
        return self._lookup(self.rpn_ranges, level, "rpn")

    @staticmethod
    def _lookup(ranges: Mapping[str, ValidRange], level: str, kind: str) -> ValidRange:
        try:
            return ranges[level]
        except KeyError:
            raise ConfigurationError(
                f"no {kind} valid range configured for level {level!r} "
                f"(configured: {sorted(ranges)})"
            ) from None


class Reason(str, enum.Enum):
    IN_RANGE = "in-range"
    BELOW_RANGE = "below-range"
    ABOVE_RANGE = "above-range"
    NEAR_INVALID_GT = "near-invalid-gt"


@dataclass(frozen=True)
class ValidityVerdict:
    """Auditable record of one validity decision at one pyramid level."""

    subject_id: int | str
    level: str
    side: float
    valid: bool
    reason: Reason

    def to_json_dict(self) -> dict:
        return {
            "id": self.subject_id,
            "level": self.level,
            "side": self.side,
            "valid": self.valid,
            "reason": self.reason.value,
        }


def box_validity(b: Box, r: ValidRange) -> bool:
    """True iff the box's original-frame side length lies inside the range."""
    return r.contains(b.side)


def judge_box(subject_id, b: Box, level: str, r: ValidRange) -> ValidityVerdict:
    side = b.side
    if side < r.lo:
        return ValidityVerdict(subject_id, level, side, False, Reason.BELOW_RANGE)
    if side > r.hi:
        return ValidityVerdict(subject_id, level, side, False, Reason.ABOVE_RANGE)
    return ValidityVerdict(subject_id, level, side, True, Reason.IN_RANGE)


class _HasBox(Protocol):
    box: Box


class _HasBoxAndClass(Protocol):
    box: Box
    category_id: int


@dataclass(frozen=True)
class ProposalLabel:
    """Assigned class (None = background) plus gradient-participation flag."""

    label: int | None
    valid: bool
    max_iou: float


def label_proposals(
    proposals: Sequence[Box],
    gts: Sequence[_HasBoxAndClass],
    level: str,
    cfg: SnipConfig,
) -> list[ProposalLabel]:
    """Label each proposal by its max-IoU ground truth and flag validity.

    Labels use ALL ground truths, in-range or not; the size range only
    decides the ``valid`` flag (whether the proposal participates in
    gradients), never the class assignment. Both inputs must be in the
    original coordinate frame.
    """
    r = cfg.rcn_range(level)
    if not proposals:
        return []
    if not gts:
        return [ProposalLabel(None, box_validity(p, r), 0.0) for p in proposals]
    ious = iou_matrix(proposals, [g.box for g in gts])
    best = ious.argmax(axis=1)
    out = []
    for i, p in enumerate(proposals):
        top = float(ious[i, best[i]])
        label = gts[best[i]].category_id if top >= cfg.proposal_label_iou else None
        out.append(ProposalLabel(label, box_validity(p, r), top))
    return out


def invalidate_anchors(
    anchors: Sequence[Box] | np.ndarray,
    invalid_gts: Sequence[Box] | np.ndarray,
    cfg: SnipConfig,
) -> np.ndarray:
    """Boolean exclusion mask: anchors overlapping any invalid ground truth
    strictly above the threshold are cut out of training.

    Anchors and invalid ground truths must share the scaled frame of the
    level under consideration.
    """
    anchors = boxes_to_array(anchors)
    mask = np.zeros(len(anchors), dtype=bool)
    invalid_gts = boxes_to_array(invalid_gts)
    if len(invalid_gts) == 0 or len(anchors) == 0:
        return mask
    best = iou_matrix(anchors, invalid_gts).max(axis=1)
    return best > cfg.anchor_invalidate_iou


def anchor_verdicts(
    anchors: Sequence[Box] | np.ndarray,
    invalid_gts: Sequence[Box] | np.ndarray,
    level: str,
    cfg: SnipConfig,
) -> list[ValidityVerdict]:
    """Per-anchor audit records for the exclusion mask."""
    arr = boxes_to_array(anchors)
    mask = invalidate_anchors(arr, invalid_gts, cfg)
    sides = np.sqrt(arr[:, 2] * arr[:, 3])
    return [
        ValidityVerdict(i, level, float(sides[i]),
                        not excluded,
                        Reason.NEAR_INVALID_GT if excluded else Reason.IN_RANGE)
        for i, excluded in enumerate(mask)
    ]


D = TypeVar("D", bound=_HasBox)


def filter_detections(dets: Sequence[D], level: str, cfg: SnipConfig) -> list[D]:
    """Keep detections (original frame) whose size is valid at the level; order preserved."""
    r = cfg.rcn_range(level)
    return [d for d in dets if box_validity(d.box, r)]
