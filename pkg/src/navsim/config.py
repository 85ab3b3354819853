"""Run configuration: dataclasses plus JSON loading with field-path diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .env import EnvConfig, LidarConfig, PreprocessConfig, RewardConfig
from .nets import NetConfig
from .vehicle import DimensionalConfig


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    alpha: float = 0.2
    l2: float = 1e-4
    lr_policy: float = 3e-4
    lr_critic: float = 3e-4
    tau: float = 0.005
    batch_size: int = 128
    buffer_capacity: int = 200_000
    total_steps: int = 200_000
    bootstrap_episodes: int = 100
    eval_every: int = 2000
    policy_delay: int = 2
    radius_input: bool = False
    radius_range: tuple[float, float] = (0.2, 0.5)

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError(f"sac.gamma: must be in [0, 1], got {self.gamma}")
        if self.alpha <= 0:
            raise ConfigError(f"sac.alpha: must be > 0, got {self.alpha}")
        if self.l2 < 0:
            raise ConfigError(f"sac.l2: must be >= 0, got {self.l2}")
        if self.tau <= 0 or self.tau > 1:
            raise ConfigError(f"sac.tau: must be in (0, 1], got {self.tau}")
        if self.policy_delay < 1:
            raise ConfigError(f"sac.policy_delay: must be >= 1, got {self.policy_delay}")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigError("sac.buffer_capacity: must be >= sac.batch_size >= 1")
        if self.eval_every < 1 or self.total_steps < 1:
            raise ConfigError("sac.total_steps and sac.eval_every must be >= 1")
        if self.radius_range[0] <= 0 or self.radius_range[1] < self.radius_range[0]:
            raise ConfigError(f"sac.radius_range: bad interval {self.radius_range}")


@dataclass(frozen=True)
class PidConfig:
    k_heading: float = 2.0
    k_linear: float = 1.0
    obstacle_stop: float = 0.5

    def __post_init__(self):
        if self.k_heading <= 0 or self.k_linear <= 0:
            raise ConfigError("pid gains must be > 0")
        if self.obstacle_stop < 0:
            raise ConfigError("pid.obstacle_stop must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    robot: DimensionalConfig = field(default_factory=lambda: DimensionalConfig(0.2, 0.6, math.pi / 2))
    env: EnvConfig = field(default_factory=EnvConfig)
    net: NetConfig = field(default_factory=NetConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    pid: PidConfig = field(default_factory=PidConfig)
    curriculum: tuple[str, ...] = ("env0", "env1", "env2", "env3")
    dynamic: dict | None = None

    def __post_init__(self):
        if not self.curriculum:
            raise ConfigError("curriculum: needs at least one layout name")
        if self.net.arch != "mlp":
            if self.net.n_beams != self.env.lidar.n_beams:
                raise ConfigError(
                    f"net.n_beams ({self.net.n_beams}) must match "
                    f"env.lidar.n_beams ({self.env.lidar.n_beams})"
                )
            if self.net.include_radius != self.sac.radius_input:
                raise ConfigError(
                    "net.include_radius must match sac.radius_input "
                    f"({self.net.include_radius} vs {self.sac.radius_input})"
                )


def _build(cls, data: dict, path: str, tuple_fields: tuple[str, ...] = ()):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    import dataclasses

    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
    kwargs = dict(data)
    for key in tuple_fields:
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def train_config_from_dict(data: dict) -> TrainConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root: expected a JSON object")
    env_d = dict(data.get("env", {}))
    env_kwargs = {}
    if "lidar" in env_d:
        env_kwargs["lidar"] = _build(LidarConfig, env_d.pop("lidar"), "env.lidar")
    if "preprocess" in env_d:
        env_kwargs["preprocess"] = _build(PreprocessConfig, env_d.pop("preprocess"), "env.preprocess")
    if "reward" in env_d:
        env_kwargs["reward"] = _build(RewardConfig, env_d.pop("reward"), "env.reward")
    for key in ("dt", "max_steps", "goal_radius"):
        if key in env_d:
            env_kwargs[key] = env_d.pop(key)
    if env_d:
        raise ConfigError(f"env.{next(iter(env_d))}: unknown field")
    try:
        env_cfg = EnvConfig(**env_kwargs)
    except ValueError as exc:
        raise ConfigError(f"env: {exc}") from exc

    kwargs: dict = {"env": env_cfg}
    if "robot" in data:
        kwargs["robot"] = _build(DimensionalConfig, data["robot"], "robot")
    if "net" in data:
        kwargs["net"] = _build(
            NetConfig, data["net"], "net", tuple_fields=("conv_channels", "conv_strides", "hidden")
        )
    if "sac" in data:
        kwargs["sac"] = _build(SacConfig, data["sac"], "sac", tuple_fields=("radius_range",))
    if "pid" in data:
        kwargs["pid"] = _build(PidConfig, data["pid"], "pid")
    if "curriculum" in data:
        cur = data["curriculum"]
        if not isinstance(cur, list) or not all(isinstance(n, str) for n in cur):
            raise ConfigError("curriculum: expected a list of layout names")
        kwargs["curriculum"] = tuple(cur)
    if "dynamic" in data:
        kwargs["dynamic"] = data["dynamic"]
    known = {"robot", "env", "net", "sac", "pid", "curriculum", "dynamic"}
    for key in data:
        if key not in known:
            raise ConfigError(f"{key}: unknown top-level field")
    return TrainConfig(**kwargs)


def load_train_config(path: str | Path) -> TrainConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from exc
    return train_config_from_dict(data)


def config_to_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    return d


def desk_train_config() -> TrainConfig:
    """Small-scale defaults that train on a desktop CPU in minutes."""
    lidar = LidarConfig(n_beams=60, fov=1.5 * math.pi, d_min=0.05, d_max=30.0)
    return TrainConfig(
        env=EnvConfig(lidar=lidar),
        net=NetConfig(arch="dense", n_beams=60, dense_beams=60, hidden=(256, 256)),
        sac=SacConfig(total_steps=200_000, bootstrap_episodes=100, eval_every=2000),
        curriculum=("empty8",),
    )
