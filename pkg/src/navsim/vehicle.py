"""Differential-drive kinematics: exact constant-twist integration and arc descriptors.

Commanded velocities are held constant over each control cycle, so the robot
center traces a circular arc (straight line when omega = 0).  Linear velocity
is forward-only: v in [0, v_max].  Positive omega turns counter-clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = math.remainder(theta, math.tau)
    return r + math.tau if r <= -math.pi else r


@dataclass(frozen=True)
class DimensionalConfig:
    """Radius and velocity bounds of a circular robot: the quantities transfer varies."""

    radius: float
    v_max: float
    omega_max: float

    def __post_init__(self):
        if self.radius <= 0 or self.v_max <= 0 or self.omega_max <= 0:
            raise ValueError(f"radius and velocity bounds must be > 0, got {self}")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class VelocityCommand:
    v: float
    omega: float


ARC_REGULAR = "regular"
ARC_STRAIGHT = "straight"
ARC_SPIN = "spin"
ARC_HALT = "halt"


@dataclass(frozen=True)
class ArcSegment:
    """One-cycle trajectory descriptor: arc length and signed curvature.

    curvature is omega/v for a regular arc, 0.0 for straight motion, and None
    for the degenerate spin/halt variants (zero-length trajectory).
    """

    kind: str
    length: float
    curvature: float | None

    @property
    def turn_radius(self) -> float:
        """Signed radius 1/curvature; +inf for straight motion."""
        if self.kind == ARC_STRAIGHT:
            return math.inf
        if self.curvature is None:
            raise ValueError(f"{self.kind} arc has no turn radius")
        return 1.0 / self.curvature


def step_pose(p: Pose, cmd: VelocityCommand, dt: float) -> Pose:
    """Advance a pose by holding (v, omega) constant for dt seconds (exact arc)."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    v, w = cmd.v, cmd.omega
    if w == 0.0:
        return Pose(p.x + v * dt * math.cos(p.theta), p.y + v * dt * math.sin(p.theta), p.theta)
    theta1 = p.theta + w * dt
    r = v / w
    return Pose(
        p.x + r * (math.sin(theta1) - math.sin(p.theta)),
        p.y - r * (math.cos(theta1) - math.cos(p.theta)),
        theta1,
    )


def arc_of(cmd: VelocityCommand, dt: float) -> ArcSegment:
    """Describe the one-cycle trajectory of a command as an arc segment."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if cmd.v < 0:
        raise ValueError(f"forward-only robot: v must be >= 0, got {cmd.v}")
    if cmd.v == 0.0:
        kind = ARC_HALT if cmd.omega == 0.0 else ARC_SPIN
        return ArcSegment(kind, 0.0, None)
    if cmd.omega == 0.0:
        return ArcSegment(ARC_STRAIGHT, cmd.v * dt, 0.0)
    return ArcSegment(ARC_REGULAR, cmd.v * dt, cmd.omega / cmd.v)
