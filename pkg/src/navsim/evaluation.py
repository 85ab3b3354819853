"""Evaluation harness: score metric, goal courses, dimension sweeps, layout-swap runs, plots.

Reports are written as CSV; trajectory figures are rendered with matplotlib
to SVG files alongside the delimited output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch
from matplotlib import patches

from .env import EnvConfig, EpisodeStatus, NavEnv, Observation
from .vehicle import DimensionalConfig, Pose, VelocityCommand
from .world import Circle, Polygon, Rect, WorldLayout

COLLISION_SCORE = -2.0
SUCCESS_BASE = 2.0
STEP_COST = 0.001


def score(outcome: EpisodeStatus, steps: int) -> float:
    """Episode score: success earns 2 - 0.001*steps, collision and timeout earn -2.

    The flat failure penalty keeps an early crash from outscoring a late one.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if outcome is EpisodeStatus.RUNNING:
        raise ValueError("score is defined only for terminal outcomes")
    if outcome is EpisodeStatus.SUCCESS:
        return SUCCESS_BASE - STEP_COST * steps
    return COLLISION_SCORE


@dataclass(frozen=True)
class ScoreRecord:
    outcome: EpisodeStatus
    steps: int

    @property
    def value(self) -> float:
        return score(self.outcome, self.steps)


@dataclass
class TrajectoryLog:
    """Time-ordered episode record; replaying commands from poses[0] reproduces poses."""

    poses: list[Pose] = field(default_factory=list)
    commands: list[VelocityCommand] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    statuses: list[EpisodeStatus] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "theta", "v", "omega", "reward", "status"])
            for t, p in enumerate(self.poses):
                if t < len(self.commands):
                    cmd, r, st = self.commands[t], self.rewards[t], self.statuses[t]
                    w.writerow([t, repr(p.x), repr(p.y), repr(p.theta),
                                repr(cmd.v), repr(cmd.omega), repr(r), st.value])
                else:
                    w.writerow([t, repr(p.x), repr(p.y), repr(p.theta), "", "", "", ""])

    @property
    def xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.poses])


Controller = "callable(Observation) -> VelocityCommand"


def make_policy_controller(policy, amap, include_radius: bool = False):
    """Deterministic controller over a trained policy network."""

    def controller(obs: Observation) -> VelocityCommand:
        x = torch.as_tensor(
            obs.vector(include_radius=include_radius), dtype=torch.float32
        ).unsqueeze(0)
        with torch.no_grad():
            a = policy.act(x)
        return amap.denormalize(a.squeeze(0).numpy())

    return controller


def run_episode(
    env: NavEnv,
    controller,
    start: tuple[float, float] | None = None,
    goal: tuple[float, float] | None = None,
    heading: float | None = None,
    on_step=None,
) -> tuple[TrajectoryLog, EpisodeStatus]:
    """Run one episode to termination, recording the trajectory."""
    obs = env.reset(start=start, goal=goal, heading=heading)
    log = TrajectoryLog(metadata={
        "layout": env.layout.name,
        "radius": env.robot.radius,
        "v_max": env.robot.v_max,
        "omega_max": env.robot.omega_max,
        "goal": list(env.goal),
    })
    log.poses.append(env.pose)
    status = env.status
    while not status.terminal:
        cmd = controller(obs)
        obs, r, status = env.step(cmd)
        log.commands.append(cmd)
        log.rewards.append(r)
        log.statuses.append(status)
        log.poses.append(env.pose)
        if on_step is not None:
            on_step(env, log)
    return log, status


# ---------------------------------------------------------------------------
# Goal-course protocol


@dataclass(frozen=True)
class LegRecord:
    goal: tuple[float, float]
    outcome: EpisodeStatus
    steps: int
    log: TrajectoryLog


def run_goal_course(
    layout: WorldLayout,
    env_cfg: EnvConfig,
    robot: DimensionalConfig,
    controller,
    start: tuple[float, float] = (0.0, 0.0),
) -> list[LegRecord]:
    """Drive the layout's goal points in sequence with deterministic actions.

    Each leg starts where the previous one ended; after a failed leg the robot
    is placed at that leg's goal facing the next one, so every goal point is
    attempted exactly once.
    """
    if not layout.goal_points:
        raise ValueError(f"layout '{layout.name}' has no goal points")
    env = NavEnv(layout, env_cfg, robot)
    legs: list[LegRecord] = []
    pos = start
    heading = 0.0
    for i, goal in enumerate(layout.goal_points):
        log, status = run_episode(env, controller, start=pos, goal=goal, heading=heading)
        legs.append(LegRecord(goal=tuple(goal), outcome=status, steps=env.steps, log=log))
        if status is EpisodeStatus.SUCCESS:
            pos = env.pose.position
            heading = env.pose.theta
        else:
            pos = tuple(goal)
            nxt = layout.goal_points[(i + 1) % len(layout.goal_points)]
            heading = math.atan2(nxt[1] - goal[1], nxt[0] - goal[0])
    return legs


def eval_random_episodes(
    layout: WorldLayout,
    env_cfg: EnvConfig,
    robot: DimensionalConfig,
    controller,
    n_episodes: int,
    seed: int,
) -> float:
    """Success fraction over randomly spawned episodes with deterministic actions."""
    env = NavEnv(layout, env_cfg, robot, rng=np.random.default_rng(seed))
    successes = 0
    for _ in range(n_episodes):
        _, status = run_episode(env, controller)
        successes += status is EpisodeStatus.SUCCESS
    return successes / n_episodes


# ---------------------------------------------------------------------------
# Dimension sweep


@dataclass(frozen=True)
class SweepSpec:
    radii: tuple[float, ...]
    bounds: tuple[tuple[float, float], ...]  # (v_max, omega_max) variants
    layout: WorldLayout
    start: tuple[float, float]
    goal: tuple[float, float]

    def __post_init__(self):
        if any(r <= 0 for r in self.radii) or list(self.radii) != sorted(set(self.radii)):
            raise ValueError("radii must be positive and strictly increasing")
        if not self.bounds:
            raise ValueError("need at least one (v_max, omega_max) variant")


def default_sweep_radii() -> tuple[float, ...]:
    """Twelve radii from 0.2 m to 0.75 m in 0.05 m steps."""
    return tuple(round(0.2 + 0.05 * i, 2) for i in range(12))


@dataclass(frozen=True)
class SweepResult:
    radius: float
    v_max: float
    omega_max: float
    outcome: EpisodeStatus
    steps: int
    score: float
    log: TrajectoryLog


def run_sweep(spec: SweepSpec, controller_factory, env_cfg: EnvConfig) -> list[SweepResult]:
    """One deterministic episode per (radius, bounds) configuration.

    controller_factory(DimensionalConfig) must build a controller for that
    robot; each configuration gets a fresh environment on the sweep layout.
    """
    results = []
    for radius in spec.radii:
        for v_max, omega_max in spec.bounds:
            robot = DimensionalConfig(radius, v_max, omega_max)
            controller = controller_factory(robot)
            env = NavEnv(spec.layout, env_cfg, robot)
            heading = math.atan2(spec.goal[1] - spec.start[1], spec.goal[0] - spec.start[0])
            log, status = run_episode(
                env, controller, start=spec.start, goal=spec.goal, heading=heading
            )
            results.append(SweepResult(
                radius=radius, v_max=v_max, omega_max=omega_max,
                outcome=status, steps=env.steps, score=score(status, env.steps), log=log,
            ))
    return results


def write_sweep_csv(results: list[SweepResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "v_max", "omega_max", "outcome", "steps", "score"])
        for r in results:
            w.writerow([repr(r.radius), repr(r.v_max), repr(r.omega_max),
                        r.outcome.value, r.steps, repr(r.score)])


# ---------------------------------------------------------------------------
# Sudden-obstacle runs (mid-episode layout swaps)


@dataclass(frozen=True)
class SwapTrigger:
    """Swap to the next layout once the robot comes within radius of a position."""

    at: tuple[float, float]
    radius: float = 0.3


def run_dynamic(
    layouts: list[WorldLayout],
    triggers: list[SwapTrigger],
    controller,
    env_cfg: EnvConfig,
    robot: DimensionalConfig,
    start: tuple[float, float],
    goal: tuple[float, float],
    heading: float | None = None,
) -> TrajectoryLog:
    """Single episode across a layout sequence; trigger k advances to layouts[k+1]."""
    if len(triggers) != len(layouts) - 1:
        raise ValueError(f"{len(layouts)} layouts need {len(layouts) - 1} triggers")
    env = NavEnv(layouts[0], env_cfg, robot)
    state = {"next": 0}
    swaps: list[int] = []

    def on_step(env_, log_):
        i = state["next"]
        if i < len(triggers):
            trig = triggers[i]
            if math.dist(env_.pose.position, trig.at) <= trig.radius:
                env_.set_layout(layouts[i + 1])
                swaps.append(len(log_.commands))
                state["next"] = i + 1

    if heading is None:
        heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
    log, _ = run_episode(env, controller, start=start, goal=goal, heading=heading, on_step=on_step)
    log.metadata["swaps"] = swaps
    return log


# ---------------------------------------------------------------------------
# Plotting


def _draw_layout(ax, layout: WorldLayout) -> None:
    hw, hh = layout.half_extent
    ax.add_patch(patches.Rectangle((-hw, -hh), layout.width, layout.height,
                                   fill=False, edgecolor="black", linewidth=1.5))
    for ob in layout.obstacles:
        if isinstance(ob, Circle):
            ax.add_patch(patches.Circle(ob.center, ob.radius, color="0.55"))
        elif isinstance(ob, Rect):
            x0, y0, _, _ = ob.extent()
            ax.add_patch(patches.Rectangle((x0, y0), ob.size[0], ob.size[1], color="0.55"))
        elif isinstance(ob, Polygon):
            ax.add_patch(patches.Polygon(np.array(ob.vertices), closed=True, color="0.55"))


def emit_plot(
    logs: list[TrajectoryLog],
    layout: WorldLayout,
    path: str | Path,
    title: str | None = None,
) -> Path:
    """Render trajectories over the room to an SVG file; one polyline per log."""
    if not logs:
        raise ValueError("emit_plot needs at least one trajectory log")
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_layout(ax, layout)
    cmap = plt.get_cmap("tab10")
    for i, log in enumerate(logs):
        xy = log.xy
        label = "R={:.2f} v≤{:.2f} |ω|≤{:.2f}".format(
            log.metadata.get("radius", float("nan")),
            log.metadata.get("v_max", float("nan")),
            log.metadata.get("omega_max", float("nan")),
        )
        line, = ax.plot(xy[:, 0], xy[:, 1], color=cmap(i % 10), linewidth=1.4, label=label)
        line.set_gid(f"trajectory-{i}")
        ax.plot(xy[0, 0], xy[0, 1], "o", color=cmap(i % 10), markersize=5)
        goal = log.metadata.get("goal")
        if goal is not None:
            ax.plot(goal[0], goal[1], "r*", markersize=10)
        for s in log.metadata.get("swaps", []):
            ax.plot(xy[s, 0], xy[s, 1], "kx", markersize=8)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path
