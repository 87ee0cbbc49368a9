"""Joint detection and tracking of small targets in paired visible/thermal video
with a heterogeneous graph transformer."""

from .association import Box, Detection, hungarian, iou
from .graph import HeteroGraph, build_graph
from .metrics import MetricsReport, evaluate
from .model import HgtTrackNet, ModelConfig
from .tracker import Tracker, TrackerConfig, run_tracker

__all__ = [
    "Box",
    "Detection",
    "HeteroGraph",
    "HgtTrackNet",
    "MetricsReport",
    "ModelConfig",
    "Tracker",
    "TrackerConfig",
    "build_graph",
    "evaluate",
    "hungarian",
    "iou",
    "run_tracker",
]

__version__ = "0.1.0"
