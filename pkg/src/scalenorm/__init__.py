"""scalenorm: scale-aware image-pyramid toolkit for object detection.

Plans image pyramids, decides which objects are size-valid at each
resolution, samples training chips around small objects, fuses multi-scale
detections, evaluates against the COCO protocol, and compares training
protocols on a synthetic resolution-quality oracle.
"""

from .geometry import Box, ImageSize, clip_box, iou, scale_box
from .pyramid import DEFAULT_SPECS, PyramidPlan, ResolutionSpec, build_plan, scale_factor
from .validity import (DEFAULT_RCN_RANGES, DEFAULT_RPN_RANGES, SnipConfig, ValidRange,
                       box_validity, filter_detections, invalidate_anchors, label_proposals)
from .anchors import AnchorConfig, MatchReport, generate_anchors, match_stats
from .chips import ChipConfig, ChipSet, chip_efficiency, sample_chips
from .fusion import Detection, SoftNmsParams, ensemble_average, fuse_scales, nms, soft_nms
from .evaluation import EvalReport, RecallReport, SizeBins, evaluate_detections, evaluate_proposals
from .coco import Annotation, Dataset, load_dataset, load_results, save_results, scale_stats
from .simulate import (Protocol, QualityModel, SimReport, SimulationParams,
                       compare_protocols, default_protocols, simulate_protocol)
from .synthetic import PopulationConfig, generate_dataset

__version__ = "0.1.0"
