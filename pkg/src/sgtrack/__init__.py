"""RGB-thermal object tracking with graph-learned patch and modality weights."""

from .dataset_io import BoundingBox, FramePair, SyntheticConfig, generate_synthetic
from .graph_learning import SolverConfig, solve_joint
from .tracker import SGTracker, TrackerParams

__all__ = ["BoundingBox", "FramePair", "SGTracker", "SolverConfig", "SyntheticConfig",
           "TrackerParams", "generate_synthetic", "solve_joint"]
