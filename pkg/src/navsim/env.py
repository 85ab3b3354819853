"""Episodic navigation environment: observations, reward shaping, termination, curriculum.

The robot observes a lidar scan (optionally passed through a reciprocal map
that expands near-range structure), the goal position in its own frame, and
its previous velocity command.  Episodes end on goal arrival, collision, or a
step cap; a tracker advances the training curriculum once the recent success
rate is high enough.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .vehicle import DimensionalConfig, Pose, VelocityCommand, step_pose, wrap_angle
from .world import WorldLayout, cast_rays, circle_collides, sample_free_pose


@dataclass(frozen=True)
class LidarConfig:
    n_beams: int = 540
    fov: float = 1.5 * math.pi
    d_min: float = 0.05
    d_max: float = 30.0

    def __post_init__(self):
        if self.n_beams < 2:
            raise ValueError(f"n_beams must be >= 2, got {self.n_beams}")
        if not (0 < self.fov <= 2 * math.pi):
            raise ValueError(f"fov must be in (0, 2*pi], got {self.fov}")
        if not (0 <= self.d_min < self.d_max):
            raise ValueError(f"require 0 <= d_min < d_max, got [{self.d_min}, {self.d_max}]")


@dataclass(frozen=True)
class PreprocessConfig:
    """Reciprocal distance map 1/(d - c_d); disabled means raw distances pass through."""

    c_d: float = 0.0
    enabled: bool = True

    def validate_against(self, lidar: LidarConfig) -> None:
        # c_d below the sensor minimum keeps the map finite and decreasing on range.
        if self.enabled and self.c_d >= lidar.d_min:
            raise ValueError(f"c_d ({self.c_d}) must be < lidar d_min ({lidar.d_min})")


@dataclass(frozen=True)
class RewardConfig:
    r_success: float = 20.0
    r_collision: float = -20.0
    c1: float = 10.0
    c2: float = 0.05

    def __post_init__(self):
        if not (self.r_success > 0 > self.r_collision):
            raise ValueError("require r_success > 0 > r_collision")
        if self.c1 <= 0 or self.c2 < 0:
            raise ValueError("require c1 > 0 and c2 >= 0")


class EpisodeStatus(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not EpisodeStatus.RUNNING


@dataclass(frozen=True)
class Observation:
    """Controller input: processed scan, goal in robot frame, current velocities.

    raw_scan always holds the unprocessed distances; scan equals raw_scan when
    preprocessing is disabled.  radius echoes the active robot's radius so
    radius-aware baselines can include it in their input vector.
    """

    scan: np.ndarray
    raw_scan: np.ndarray
    goal_dist: float
    goal_angle: float
    v: float
    omega: float
    radius: float

    def vector(self, include_radius: bool = False) -> np.ndarray:
        tail = [self.goal_dist, self.goal_angle, self.v, self.omega]
        if include_radius:
            tail.append(self.radius)
        return np.concatenate([self.scan, np.array(tail, dtype=float)])


def preprocess(d, cfg: PreprocessConfig):
    """Reciprocal map on distances; errors below the map's domain edge c_d."""
    if not cfg.enabled:
        return d
    arr = np.asarray(d, dtype=float)
    if np.any(arr <= cfg.c_d):
        raise ValueError(f"distance {arr.min()} not above c_d={cfg.c_d}")
    out = 1.0 / (arr - cfg.c_d)
    return float(out) if np.isscalar(d) or arr.ndim == 0 else out


def beam_angles(lidar: LidarConfig) -> np.ndarray:
    """Beam offsets relative to the heading, evenly spread across the fov."""
    if lidar.fov >= 2 * math.pi:
        return np.linspace(-math.pi, math.pi, lidar.n_beams, endpoint=False)
    return np.linspace(-lidar.fov / 2, lidar.fov / 2, lidar.n_beams)


def observe(
    layout: WorldLayout,
    pose: Pose,
    goal: tuple[float, float],
    cmd_prev: VelocityCommand,
    lidar: LidarConfig,
    pp: PreprocessConfig,
    radius: float,
) -> Observation:
    """Assemble the robot's observation at a pose (propagates ray-cast errors)."""
    angles = pose.theta + beam_angles(lidar)
    raw = cast_rays(layout, pose.position, angles, lidar.d_min, lidar.d_max)
    dx, dy = goal[0] - pose.x, goal[1] - pose.y
    return Observation(
        scan=preprocess(raw, pp),
        raw_scan=raw,
        goal_dist=math.hypot(dx, dy),
        goal_angle=wrap_angle(math.atan2(dy, dx) - pose.theta),
        v=cmd_prev.v,
        omega=cmd_prev.omega,
        radius=radius,
    )


def reward(d_g_t: float, d_g_t1: float, status: EpisodeStatus, cfg: RewardConfig) -> float:
    """Sparse success/collision terms plus dense progress shaping with a time penalty."""
    if status is EpisodeStatus.SUCCESS:
        return cfg.r_success
    if status is EpisodeStatus.COLLISION:
        return cfg.r_collision
    return cfg.c1 * (d_g_t - d_g_t1) - cfg.c2


@dataclass(frozen=True)
class EnvConfig:
    lidar: LidarConfig = field(default_factory=LidarConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    dt: float = 0.2
    max_steps: int = 400
    goal_radius: float = 0.3

    def __post_init__(self):
        if self.dt <= 0 or self.max_steps < 1 or self.goal_radius <= 0:
            raise ValueError(f"invalid EnvConfig: {self}")
        self.preprocess.validate_against(self.lidar)


class NavEnv:
    """Single-robot episodic navigation in one room.

    Mutable per-episode state lives here; the layout itself is immutable and
    may be shared across environments.  Collision is evaluated before goal
    arrival when one step would trigger both.
    """

    def __init__(
        self,
        layout: WorldLayout,
        cfg: EnvConfig,
        robot: DimensionalConfig,
        rng: int | np.random.Generator | None = None,
    ):
        self.layout = layout
        self.cfg = cfg
        self.robot = robot
        self.rng = np.random.default_rng(rng)
        self.pose: Pose | None = None
        self.goal: tuple[float, float] | None = None
        self.status = EpisodeStatus.TIMEOUT  # no episode yet; reset() is required
        self.steps = 0
        self._cmd_prev = VelocityCommand(0.0, 0.0)

    def set_layout(self, layout: WorldLayout) -> None:
        """Swap the active room mid-episode (sudden-obstacle experiments)."""
        self.layout = layout

    def set_robot(self, robot: DimensionalConfig) -> None:
        self.robot = robot

    def reset(
        self,
        start: tuple[float, float] | None = None,
        goal: tuple[float, float] | None = None,
        heading: float | None = None,
    ) -> Observation:
        if start is None:
            start = sample_free_pose(self.layout, self.robot.radius, self.rng)
        if heading is None:
            heading = float(self.rng.uniform(-math.pi, math.pi))
        if goal is None:
            min_sep = 2 * self.cfg.goal_radius
            while True:
                goal = sample_free_pose(self.layout, self.cfg.goal_radius, self.rng)
                if math.dist(goal, start) > min_sep:
                    break
        self.pose = Pose(start[0], start[1], heading)
        self.goal = (float(goal[0]), float(goal[1]))
        self.status = EpisodeStatus.RUNNING
        self.steps = 0
        self._cmd_prev = VelocityCommand(0.0, 0.0)
        return self._observe()

    def _observe(self) -> Observation:
        return observe(
            self.layout, self.pose, self.goal, self._cmd_prev,
            self.cfg.lidar, self.cfg.preprocess, self.robot.radius,
        )

    def step(self, action: VelocityCommand) -> tuple[Observation, float, EpisodeStatus]:
        if self.status.terminal:
            raise RuntimeError("step() on a terminated episode; call reset() first")
        eps = 1e-9
        if not (-eps <= action.v <= self.robot.v_max + eps) or abs(action.omega) > self.robot.omega_max + eps:
            raise ValueError(f"action {action} outside bounds of {self.robot}")

        d_before = math.dist(self.pose.position, self.goal)
        self.pose = step_pose(self.pose, action, self.cfg.dt)
        self.steps += 1
        d_after = math.dist(self.pose.position, self.goal)

        if circle_collides(self.layout, self.pose.position, self.robot.radius):
            self.status = EpisodeStatus.COLLISION
        elif d_after < self.cfg.goal_radius:
            self.status = EpisodeStatus.SUCCESS
        elif self.steps >= self.cfg.max_steps:
            self.status = EpisodeStatus.TIMEOUT
        else:
            self.status = EpisodeStatus.RUNNING

        r = reward(d_before, d_after, self.status, self.cfg.reward)
        self._cmd_prev = action
        return self._observe(), r, self.status


class CurriculumTracker:
    """Window of recent episode outcomes driving stage advancement.

    Advances one stage as soon as the window is full and at least 90% of it
    succeeded; the window resets on advance and the stage index never moves
    backwards.
    """

    WINDOW = 50
    THRESHOLD = 0.9

    def __init__(self, n_stages: int, window: int = WINDOW, threshold: float = THRESHOLD):
        if n_stages < 1:
            raise ValueError("need at least one stage")
        self.n_stages = n_stages
        self.window = window
        self.threshold = threshold
        self.stage = 0
        self.outcomes: deque[bool] = deque(maxlen=window)

    @property
    def success_rate(self) -> float:
        if not self.outcomes:
            return 0.0
        return sum(self.outcomes) / len(self.outcomes)

    def update(self, outcome: EpisodeStatus) -> bool:
        """Record a terminal outcome; returns True when the stage advanced."""
        if not outcome.terminal:
            raise ValueError("curriculum update requires a terminal outcome")
        self.outcomes.append(outcome is EpisodeStatus.SUCCESS)
        if (
            len(self.outcomes) == self.window
            and self.success_rate >= self.threshold
            and self.stage + 1 < self.n_stages
        ):
            self.stage += 1
            self.outcomes.clear()
            return True
        return False
