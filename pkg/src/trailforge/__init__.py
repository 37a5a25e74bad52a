"""Motion trails for image sequences from a stationary camera."""

from .background import BackgroundEstimator, WindowSpec, pixel_background, sliding_background
from .config import PipelineConfig
from .deshake import DeshakeConfig, Deshaker, OffsetTrace, frame_offset, measure_trace, stabilize
from .exceptions import ConfigError, DeshakeError, FrameIOError, StageError, TrailforgeError
from .ghosts import GhostDetector, GhostThresholds, GhostVerdict, ObjectStats, flag_ghosts, object_stats
from .imaging import (
    Offset2D,
    Rect,
    color_distance,
    geometric_median,
    rgb_to_ycc,
    to_grayscale,
    translate_crop,
)
from .pipeline import run
from .segmentation import ForegroundSegmenter, LabelMap, SegmentationConfig, label_components, segment_frame
from .trails import FadeProfile, RenderConfig, TrailRenderer, composite_pixel, fade_weight, render_sequence

__version__ = "0.1.0"

__all__ = [
    "BackgroundEstimator",
    "ConfigError",
    "DeshakeConfig",
    "DeshakeError",
    "Deshaker",
    "FadeProfile",
    "ForegroundSegmenter",
    "FrameIOError",
    "GhostDetector",
    "GhostThresholds",
    "GhostVerdict",
    "LabelMap",
    "ObjectStats",
    "Offset2D",
    "OffsetTrace",
    "PipelineConfig",
    "Rect",
    "RenderConfig",
    "SegmentationConfig",
    "StageError",
    "TrailRenderer",
    "TrailforgeError",
    "WindowSpec",
    "color_distance",
    "composite_pixel",
    "fade_weight",
    "flag_ghosts",
    "frame_offset",
    "geometric_median",
    "label_components",
    "measure_trace",
    "object_stats",
    "pixel_background",
    "render_sequence",
    "rgb_to_ycc",
    "run",
    "segment_frame",
    "sliding_background",
    "stabilize",
    "to_grayscale",
    "translate_crop",
]
