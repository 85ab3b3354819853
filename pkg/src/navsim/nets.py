"""Policy and twin-critic networks for the navigation agent.

The scan is encoded either by a small 1D conv stack or by mean-pooling down
to a fixed beam count followed by dense layers; the encoding is concatenated
with the goal/velocity extras (and the action, for critics).  The stochastic
policy is a tanh-squashed Gaussian over the normalized 2D action; an affine
ActionMap converts between normalized actions and real velocity commands.
Weights round-trip through a versioned JSON container of little-endian
float32 tensors.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .vehicle import DimensionalConfig, VelocityCommand

WEIGHTS_FORMAT = 1
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class NetConfig:
    """Shared architecture description for the policy and both critics.

    arch "conv" runs the conv stack over the full scan, "dense" mean-pools the
    scan to dense_beams first, and "mlp" treats the whole observation vector
    as an opaque input of width mlp_obs_dim (used by unit-scale tasks).
    """

    arch: str = "conv"
    n_beams: int = 540
    extras: int = 4
    include_radius: bool = False
    conv_channels: tuple[int, int] = (16, 16)
    conv_kernel: int = 5
    conv_strides: tuple[int, int] = (2, 2)
    dense_beams: int = 60
    hidden: tuple[int, ...] = (256, 256)
    act_dim: int = 2
    mlp_obs_dim: int | None = None
    activation: str = "relu"  # "tanh" keeps every layer smooth for finite-difference checks

    def __post_init__(self):
        if self.arch not in ("conv", "dense", "mlp"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.arch == "mlp" and not self.mlp_obs_dim:
            raise ValueError("arch 'mlp' requires mlp_obs_dim")

    @property
    def obs_dim(self) -> int:
        if self.arch == "mlp":
            return int(self.mlp_obs_dim)
        return self.n_beams + self.extras + (1 if self.include_radius else 0)


class _ScanSplit(nn.Module):
    """Splits an observation vector into (scan, extras) and encodes the scan."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        if cfg.arch == "mlp":
            self.out_dim = cfg.obs_dim
            return
        n_extra = cfg.extras + (1 if cfg.include_radius else 0)
        self.n_extra = n_extra
        if cfg.arch == "conv":
            k = cfg.conv_kernel
            c1, c2 = cfg.conv_channels
            s1, s2 = cfg.conv_strides
            self.conv = nn.Sequential(
                nn.Conv1d(1, c1, k, stride=s1), nn.ReLU(),
                nn.Conv1d(c1, c2, k, stride=s2), nn.ReLU(),
            )
            n1 = (cfg.n_beams - k) // s1 + 1
            n2 = (n1 - k) // s2 + 1
            self.out_dim = c2 * n2 + n_extra
        else:
            if cfg.n_beams % cfg.dense_beams != 0:
                raise ValueError(
                    f"dense arch needs n_beams ({cfg.n_beams}) divisible by "
                    f"dense_beams ({cfg.dense_beams})"
                )
            self.pool = cfg.n_beams // cfg.dense_beams
            self.out_dim = cfg.dense_beams + n_extra

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        if self.cfg.arch == "mlp":
            return obs
        scan = obs[:, : self.cfg.n_beams]
        extras = obs[:, self.cfg.n_beams:]
        if self.cfg.arch == "conv":
            feat = self.conv(scan.unsqueeze(1)).flatten(1)
        else:
            feat = scan.reshape(scan.shape[0], -1, self.pool).mean(dim=2)
        return torch.cat([feat, extras], dim=1)


def _mlp(
    in_dim: int, hidden: tuple[int, ...], out_dim: int | None = None, activation: str = "relu"
) -> nn.Sequential:
    act = nn.ReLU if activation == "relu" else nn.Tanh
    layers: list[nn.Module] = []
    d = in_dim
    for h in hidden:
        layers += [nn.Linear(d, h), act()]
        d = h
    if out_dim is not None:
        layers.append(nn.Linear(d, out_dim))
    return nn.Sequential(*layers)


def squashed_gaussian_log_prob(
    z: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor
) -> torch.Tensor:
    """log-density of a = tanh(z) where z ~ N(mean, exp(log_std)), summed over dims.

    Uses the exact change-of-variables term log(1 - tanh(z)^2) rewritten as
    2*(log 2 - z - softplus(-2z)) for numerical stability at large |z|.
    """
    std = log_std.exp()
    gauss = -0.5 * (((z - mean) / std) ** 2 + 2 * log_std + math.log(2 * math.pi))
    correction = 2.0 * (math.log(2.0) - z - F.softplus(-2.0 * z))
    return (gauss - correction).sum(dim=-1)


class PolicyNet(nn.Module):
    """Squashed-Gaussian policy head over the shared observation encoder."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = _ScanSplit(cfg)
        self.trunk = _mlp(self.encoder.out_dim, cfg.hidden, activation=cfg.activation)
        self.mean_head = nn.Linear(cfg.hidden[-1], cfg.act_dim)
        self.log_std_head = nn.Linear(cfg.hidden[-1], cfg.act_dim)
        # Near-zero initial actions keep early exploration gentle.
        for head in (self.mean_head, self.log_std_head):
            with torch.no_grad():
                head.weight.mul_(0.01)
                head.bias.zero_()

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.trunk(self.encoder(obs))
        mean = self.mean_head(h)
        log_std = self.log_std_head(h).clamp(LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def sample(
        self,
        obs: torch.Tensor,
        generator: torch.Generator | None = None,
        noise: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Reparameterized action sample and its log-probability."""
        mean, log_std = self(obs)
        if noise is None:
            noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        z = mean + log_std.exp() * noise
        return torch.tanh(z), squashed_gaussian_log_prob(z, mean, log_std)

    def act(self, obs: torch.Tensor) -> torch.Tensor:
        """Deterministic action: the squashed mean."""
        mean, _ = self(obs)
        return torch.tanh(mean)


class CriticNet(nn.Module):
    """Q(s, a): scan encoding concatenated with extras and the normalized action."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = _ScanSplit(cfg)
        self.trunk = _mlp(self.encoder.out_dim + cfg.act_dim, cfg.hidden, 1, activation=cfg.activation)

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        return self.trunk(torch.cat([self.encoder(obs), action], dim=1)).squeeze(-1)


@dataclass(frozen=True)
class PolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray
    action: np.ndarray
    log_prob: float


def policy_forward(
    policy: PolicyNet,
    obs_vec: np.ndarray,
    mode: str = "deterministic",
    generator: torch.Generator | None = None,
) -> PolicyOutput:
    """Inference-time forward pass over a single observation vector."""
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"mode must be deterministic|stochastic, got {mode!r}")
    x = torch.as_tensor(obs_vec, dtype=torch.float32).reshape(1, -1)
    if x.shape[1] != policy.cfg.obs_dim:
        raise ValueError(f"observation width {x.shape[1]} != expected {policy.cfg.obs_dim}")
    with torch.no_grad():
        mean, log_std = policy(x)
        if mode == "stochastic":
            action, logp = policy.sample(x, generator=generator)
        else:
            z = mean
            action = torch.tanh(mean)
            logp = squashed_gaussian_log_prob(z, mean, log_std)
    return PolicyOutput(
        mean=mean.squeeze(0).numpy(),
        log_std=log_std.squeeze(0).numpy(),
        action=action.squeeze(0).numpy(),
        log_prob=float(logp.squeeze(0)),
    )


# ---------------------------------------------------------------------------
# Action normalization


@dataclass(frozen=True)
class ActionMap:
    """Affine bijection between normalized actions in [-1, 1]^2 and (v, omega)."""

    low: tuple[float, float]
    high: tuple[float, float]

    def __post_init__(self):
        if not all(h > l for l, h in zip(self.low, self.high)):
            raise ValueError(f"ActionMap must be strictly increasing per dim, got {self}")

    @classmethod
    def from_bounds(cls, robot: DimensionalConfig, v_low: float = 0.0) -> "ActionMap":
        return cls((v_low, -robot.omega_max), (robot.v_max, robot.omega_max))

    def denormalize(self, a) -> VelocityCommand:
        a = np.asarray(a, dtype=float)
        if np.any(np.abs(a) > 1.0 + 1e-12):
            raise ValueError(f"normalized action {a} outside [-1, 1]")
        lo = np.array(self.low)
        hi = np.array(self.high)
        out = lo + (np.clip(a, -1.0, 1.0) + 1.0) * 0.5 * (hi - lo)
        return VelocityCommand(float(out[0]), float(out[1]))

    def normalize(self, cmd: VelocityCommand) -> np.ndarray:
        lo = np.array(self.low)
        hi = np.array(self.high)
        raw = np.array([cmd.v, cmd.omega], dtype=float)
        return (raw - lo) * 2.0 / (hi - lo) - 1.0


# ---------------------------------------------------------------------------
# Weights container


class WeightsError(ValueError):
    """Weight file is malformed or does not match the requested architecture."""


def _encode_tensor(t: torch.Tensor) -> dict:
    arr = np.ascontiguousarray(t.detach().numpy().astype("<f4"))
    return {
        "shape": list(arr.shape),
        "dtype": "<f4",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode_tensor(spec: dict) -> np.ndarray:
    if spec.get("dtype") != "<f4":
        raise WeightsError(f"unsupported tensor dtype {spec.get('dtype')!r}")
    raw = base64.b64decode(spec["data"])
    return np.frombuffer(raw, dtype="<f4").reshape(spec["shape"]).copy()


def save_weights(
    path: str | Path,
    modules: dict[str, nn.Module],
    cfg: NetConfig,
    meta: dict | None = None,
) -> None:
    """Serialize named modules into a versioned JSON container."""
    tensors = {}
    for role, mod in modules.items():
        for name, p in mod.state_dict().items():
            tensors[f"{role}.{name}"] = _encode_tensor(p)
    payload = {
        "format": WEIGHTS_FORMAT,
        "arch": asdict(cfg),
        "meta": meta or {},
        "tensors": tensors,
    }
    tmp = Path(path).with_suffix(".tmp")
    tmp.write_text(json.dumps(payload))
    tmp.replace(path)


def load_weights(path: str | Path) -> tuple[NetConfig, dict, dict[str, np.ndarray]]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != WEIGHTS_FORMAT:
        raise WeightsError(f"unsupported weights format {payload.get('format')!r}")
    arch = payload["arch"]
    for key in ("conv_channels", "conv_strides", "hidden"):
        if key in arch and arch[key] is not None:
            arch[key] = tuple(arch[key])
    cfg = NetConfig(**arch)
    tensors = {name: _decode_tensor(spec) for name, spec in payload["tensors"].items()}
    return cfg, payload.get("meta", {}), tensors


def load_into(module: nn.Module, role: str, tensors: dict[str, np.ndarray]) -> None:
    """Copy role-prefixed tensors into a module, rejecting any shape mismatch."""
    state = module.state_dict()
    new_state = {}
    for name, p in state.items():
        key = f"{role}.{name}"
        if key not in tensors:
            raise WeightsError(f"weights file is missing tensor {key!r}")
        arr = tensors[key]
        if tuple(arr.shape) != tuple(p.shape):
            raise WeightsError(
                f"tensor {key!r} shape {tuple(arr.shape)} does not match model {tuple(p.shape)}"
            )
        new_state[name] = torch.from_numpy(arr).to(p.dtype)
    module.load_state_dict(new_state)


def load_policy(path: str | Path) -> tuple[PolicyNet, NetConfig, dict]:
    """Rebuild a policy network from a weights file."""
    cfg, meta, tensors = load_weights(path)
    policy = PolicyNet(cfg)
    load_into(policy, "policy", tensors)
    policy.eval()
    return policy, cfg, meta
