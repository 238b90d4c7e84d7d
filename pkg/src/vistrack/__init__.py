"""Video instance segmentation evaluation and tracking-by-detection toolkit."""

from .ablation import format_ablation_table, run_ablation
from .assoc import (
    CueWeights,
    TrackerConfig,
    TrackerState,
    assign_probabilities,
    combined_score,
    finalize,
    nms,
    step,
    track_video,
)
from .baselines import SeqConfig, iou_tracker_plus, seq_tracker
from .errors import (
    ConfigError,
    DimensionError,
    EvaluationError,
    MalformedRleError,
    ReferentialError,
    SchemaError,
    VistrackError,
)
from .io import (
    CategorySet,
    Detection,
    DetectionSet,
    FrameDetections,
    GroundTruth,
    InstanceTrack,
    VideoMeta,
    load_detections,
    load_ground_truth,
    load_results,
    save_detections,
    save_ground_truth,
    save_results,
)
from .mask import Box, RleMask, box_iou, mask_iou, rle_decode, rle_encode, tight_box
from .metrics import EvalConfig, EvalReport, evaluate, match_category, st_iou
from .synth import SynthConfig, generate, identity_oracle, image_oracle

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CategorySet",
    "ConfigError",
    "CueWeights",
    "Detection",
    "DetectionSet",
    "DimensionError",
    "EvalConfig",
    "EvalReport",
    "EvaluationError",
    "FrameDetections",
    "GroundTruth",
    "InstanceTrack",
    "MalformedRleError",
    "ReferentialError",
    "RleMask",
    "SchemaError",
    "SeqConfig",
    "SynthConfig",
    "TrackerConfig",
    "TrackerState",
    "VideoMeta",
    "VistrackError",
    "assign_probabilities",
    "box_iou",
    "combined_score",
    "evaluate",
    "finalize",
    "format_ablation_table",
    "generate",
    "identity_oracle",
    "image_oracle",
    "iou_tracker_plus",
    "load_detections",
    "load_ground_truth",
    "load_results",
    "mask_iou",
    "match_category",
    "nms",
    "rle_decode",
    "rle_encode",
    "run_ablation",
    "save_detections",
    "save_ground_truth",
    "save_results",
    "seq_tracker",
    "st_iou",
    "step",
    "tight_box",
    "track_video",
]
