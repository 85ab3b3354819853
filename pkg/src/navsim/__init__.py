"""navsim: map-less 2D navigation simulator, SAC meta-skill trainer, and
dimension-variable skill transfer for circular robots of arbitrary radius
and velocity bounds."""

from .dvst import TransferCase, TransferContext, TransferResult, oracle_transfer, transfer_observation, transfer_policy, wrap_policy
from .env import (
    CurriculumTracker, EnvConfig, EpisodeStatus, LidarConfig, NavEnv, Observation,
    PreprocessConfig, RewardConfig, observe, preprocess, reward,
)
from .vehicle import ArcSegment, DimensionalConfig, Pose, VelocityCommand, arc_of, step_pose, wrap_angle
from .world import (
    Circle, LayoutError, Polygon, Rect, WorldLayout, cast_ray, cast_rays,
    circle_collides, load_layout, resolve_layout, sample_free_pose, save_layout,
)

__version__ = "0.1.0"

__all__ = [
    "ArcSegment", "Circle", "CurriculumTracker", "DimensionalConfig", "EnvConfig",
    "EpisodeStatus", "LayoutError", "LidarConfig", "NavEnv", "Observation", "Polygon",
    "Pose", "PreprocessConfig", "Rect", "RewardConfig", "TransferCase", "TransferContext",
    "TransferResult", "VelocityCommand", "WorldLayout", "arc_of", "cast_ray", "cast_rays",
    "circle_collides", "load_layout", "observe", "oracle_transfer", "preprocess",
    "resolve_layout", "reward", "sample_free_pose", "save_layout", "step_pose",
    "transfer_observation", "transfer_policy", "wrap_angle", "wrap_policy",
]
