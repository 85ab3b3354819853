"""Meta-skill learning: replay buffer, PID exploration bootstrap, SAC updates, training loop.

Training alternates full episodes with batched updates: after each
non-bootstrap episode of length T the critics are updated T times and the
policy every policy_delay-th iteration.  The first bootstrap_episodes use a
PID controller to seed the replay buffer; those episodes neither update the
networks nor count toward the curriculum success window.  Timeout transitions
are stored with done=False so the time limit is bootstrapped through rather
than treated as environment death.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .config import PidConfig, SacConfig, TrainConfig
from .env import CurriculumTracker, EpisodeStatus, NavEnv, Observation
from .evaluation import make_policy_controller, run_goal_course, score
from .nets import ActionMap, CriticNet, PolicyNet, save_weights
from .vehicle import DimensionalConfig, VelocityCommand
from .world import WorldLayout, resolve_layout


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


def terminal_for_bootstrap(status: EpisodeStatus) -> bool:
    """done flag stored in the buffer: only real environment death cuts bootstrapping."""
    return status in (EpisodeStatus.SUCCESS, EpisodeStatus.COLLISION)


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, obs_dim: int, act_dim: int, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, act_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=np.float32)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, tr: Transition) -> None:
        i = self.ptr
        self.obs[i] = tr.obs
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_obs[i] = tr.next_obs
        self.dones[i] = float(tr.done)
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, torch.Tensor]:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch_size {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": torch.from_numpy(self.obs[idx]),
            "actions": torch.from_numpy(self.actions[idx]),
            "rewards": torch.from_numpy(self.rewards[idx]),
            "next_obs": torch.from_numpy(self.next_obs[idx]),
            "dones": torch.from_numpy(self.dones[idx]),
        }


def pid_action(obs: Observation, cfg: PidConfig, robot: DimensionalConfig) -> VelocityCommand:
    """Goal-seeking proportional controller used to seed the replay buffer.

    Turns toward the goal, drives forward only while roughly facing it, and
    stops the linear motion when any raw scan return comes closer than the
    obstacle-stop distance.
    """
    w = max(-robot.omega_max, min(robot.omega_max, cfg.k_heading * obs.goal_angle))
    align = max(0.0, math.cos(obs.goal_angle))
    v = min(robot.v_max, cfg.k_linear * obs.goal_dist) * align
    if float(obs.raw_scan.min()) < cfg.obstacle_stop:
        v = 0.0
    return VelocityCommand(v, w)


# ---------------------------------------------------------------------------
# SAC updates


def polyak_update(target: torch.nn.Module, online: torch.nn.Module, tau: float) -> None:
    with torch.no_grad():
        for pt, p in zip(target.parameters(), online.parameters()):
            pt.mul_(1.0 - tau).add_(p, alpha=tau)


def critic_loss(
    batch: dict[str, torch.Tensor],
    q1: CriticNet,
    q2: CriticNet,
    qt1: CriticNet,
    qt2: CriticNet,
    policy,
    cfg: SacConfig,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Squared regression losses of both critics against the entropy-adjusted target.

    Targets bootstrap through non-terminal transitions with a freshly sampled
    next action and the pessimistic minimum of the two target critics.  Any
    object with a sample(obs, generator) -> (action, log_prob) method can
    stand in for the policy.
    """
    with torch.no_grad():
        a2, logp2 = policy.sample(batch["next_obs"], generator)
        q_next = torch.min(qt1(batch["next_obs"], a2), qt2(batch["next_obs"], a2))
        y = batch["rewards"] + cfg.gamma * (1.0 - batch["dones"]) * (q_next - cfg.alpha * logp2)
    l1 = ((q1(batch["obs"], batch["actions"]) - y) ** 2).mean()
    l2 = ((q2(batch["obs"], batch["actions"]) - y) ** 2).mean()
    return l1, l2


def critic_update(
    batch,
    q1: CriticNet,
    q2: CriticNet,
    qt1: CriticNet,
    qt2: CriticNet,
    policy,
    optimizer: torch.optim.Optimizer,
    cfg: SacConfig,
    generator: torch.Generator | None = None,
) -> float:
    l1, l2 = critic_loss(batch, q1, q2, qt1, qt2, policy, cfg, generator)
    loss = l1 + l2
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    polyak_update(qt1, q1, cfg.tau)
    polyak_update(qt2, q2, cfg.tau)
    return float(loss.detach())


def policy_loss(
    obs: torch.Tensor,
    policy: PolicyNet,
    q1,
    q2,
    cfg: SacConfig,
    generator: torch.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Entropy-regularized policy objective (negated for descent) plus L2 weight penalty."""
    a, logp = policy.sample(obs, generator=generator, noise=noise)
    q = torch.min(q1(obs, a), q2(obs, a))
    reg = sum(p.pow(2).sum() for p in policy.parameters())
    return (cfg.alpha * logp - q).mean() + cfg.l2 * reg


def policy_update(
    batch,
    policy: PolicyNet,
    q1: CriticNet,
    q2: CriticNet,
    optimizer: torch.optim.Optimizer,
    cfg: SacConfig,
    generator: torch.Generator | None = None,
) -> float:
    loss = policy_loss(batch["obs"], policy, q1, q2, cfg, generator=generator)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.detach())


# ---------------------------------------------------------------------------
# Training loop


METRIC_FIELDS = [
    "kind", "total_steps", "stage", "episode", "episode_steps", "outcome",
    "episode_return", "success_rate", "critic_loss", "policy_loss",
    "eval_score", "eval_success",
]


@dataclass
class TrainResult:
    weights_path: Path
    metrics_path: Path
    total_steps: int
    episodes: int
    final_stage: int
    stopped_early: bool


class MetaSkillTrainer:
    """Owns all mutable training state; one instance per (config, seed) run."""

    def __init__(
        self,
        cfg: TrainConfig,
        seed: int,
        out_dir: str | Path,
        layouts: list[WorldLayout] | None = None,
        eval_hook=None,
    ):
        self.cfg = cfg
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.eval_hook = eval_hook

        ss = np.random.SeedSequence(seed)
        env_ss, batch_ss, radius_ss, torch_ss = ss.spawn(4)
        self.batch_rng = np.random.default_rng(batch_ss)
        self.radius_rng = np.random.default_rng(radius_ss)
        torch_seed = int(torch_ss.generate_state(1)[0])
        torch.manual_seed(torch_seed)
        torch.set_num_threads(1)  # keeps runs bit-reproducible on any host
        self.act_generator = torch.Generator().manual_seed(torch_seed)

        self.layouts = layouts if layouts is not None else [resolve_layout(n) for n in cfg.curriculum]
        self.tracker = CurriculumTracker(len(self.layouts))
        self.env = NavEnv(self.layouts[0], cfg.env, cfg.robot, rng=np.random.default_rng(env_ss))

        self.policy = PolicyNet(cfg.net)
        self.q1 = CriticNet(cfg.net)
        self.q2 = CriticNet(cfg.net)
        self.qt1 = copy.deepcopy(self.q1)
        self.qt2 = copy.deepcopy(self.q2)
        for target in (self.qt1, self.qt2):
            for p in target.parameters():
                p.requires_grad_(False)

        self.policy_opt = torch.optim.Adam(self.policy.parameters(), lr=cfg.sac.lr_policy)
        self.critic_opt = torch.optim.Adam(
            list(self.q1.parameters()) + list(self.q2.parameters()), lr=cfg.sac.lr_critic
        )
        self.amap = ActionMap.from_bounds(cfg.robot)
        self.buffer = ReplayBuffer(cfg.net.obs_dim, cfg.net.act_dim, cfg.sac.buffer_capacity)

        self.total_steps = 0
        self.episodes = 0
        self.evals_done = 0
        self.update_log: list[tuple[int, int, int]] = []  # (episode len, critic updates, policy updates)
        self.last_critic_loss: float | None = None
        self.last_policy_loss: float | None = None

    # -- helpers -----------------------------------------------------------

    def _vec(self, obs: Observation) -> np.ndarray:
        return obs.vector(include_radius=self.cfg.sac.radius_input).astype(np.float32)

    def _sample_action(self, obs: Observation) -> tuple[np.ndarray, VelocityCommand]:
        x = torch.from_numpy(self._vec(obs)).unsqueeze(0)
        with torch.no_grad():
            a, _ = self.policy.sample(x, generator=self.act_generator)
        a = a.squeeze(0).numpy().astype(float)
        return a, self.amap.denormalize(a)

    def _run_episode(self, exploration: bool) -> tuple[int, float, EpisodeStatus]:
        cfg = self.cfg
        if cfg.sac.radius_input:
            lo, hi = cfg.sac.radius_range
            self.env.set_robot(replace(cfg.robot, radius=float(self.radius_rng.uniform(lo, hi))))
        obs = self.env.reset()
        ep_return = 0.0
        steps = 0
        status = EpisodeStatus.RUNNING
        while not status.terminal:
            if exploration:
                cmd = pid_action(obs, cfg.pid, self.env.robot)
                a = self.amap.normalize(cmd)
            else:
                a, cmd = self._sample_action(obs)
            obs2, r, status = self.env.step(cmd)
            self.buffer.add(
                Transition(self._vec(obs), a, r, self._vec(obs2), terminal_for_bootstrap(status))
            )
            obs = obs2
            ep_return += r
            steps += 1
            self.total_steps += 1
        return steps, ep_return, status

    def _update_networks(self, episode_len: int) -> tuple[int, int]:
        n_critic = n_policy = 0
        if len(self.buffer) < self.cfg.sac.batch_size:
            return 0, 0
        for t in range(episode_len):
            batch = self.buffer.sample(self.cfg.sac.batch_size, self.batch_rng)
            self.last_critic_loss = critic_update(
                batch, self.q1, self.q2, self.qt1, self.qt2, self.policy,
                self.critic_opt, self.cfg.sac, self.act_generator,
            )
            n_critic += 1
            if t % self.cfg.sac.policy_delay == 0:
                self.last_policy_loss = policy_update(
                    batch, self.policy, self.q1, self.q2,
                    self.policy_opt, self.cfg.sac, self.act_generator,
                )
                n_policy += 1
        return n_critic, n_policy

    def _course_eval(self) -> tuple[float, float]:
        controller = make_policy_controller(
            self.policy, self.amap, include_radius=self.cfg.sac.radius_input
        )
        legs = run_goal_course(
            self.layouts[self.tracker.stage], self.cfg.env, self.cfg.robot, controller
        )
        scores = [score(leg.outcome, leg.steps) for leg in legs]
        successes = sum(leg.outcome is EpisodeStatus.SUCCESS for leg in legs)
        return sum(scores) / len(scores), successes / len(legs)

    def _save_checkpoint(self, path: Path) -> None:
        meta = {
            "robot": asdict(self.cfg.robot),
            "lidar": asdict(self.cfg.env.lidar),
            "preprocess": asdict(self.cfg.env.preprocess),
            "seed": self.seed,
            "total_steps": self.total_steps,
        }
        modules = {
            "policy": self.policy, "q1": self.q1, "q2": self.q2,
            "qt1": self.qt1, "qt2": self.qt2,
        }
        save_weights(path, modules, self.cfg.net, meta)
        state = {
            "total_steps": self.total_steps,
            "episodes": self.episodes,
            "stage": self.tracker.stage,
            "evals_done": self.evals_done,
        }
        tmp = path.with_name("trainer_state.tmp")
        tmp.write_text(json.dumps(state, indent=2))
        tmp.replace(path.with_name("trainer_state.json"))

    # -- main loop ----------------------------------------------------------

    def run(self) -> TrainResult:
        cfg = self.cfg
        metrics_path = self.out_dir / "metrics.csv"
        weights_path = self.out_dir / "weights_final.json"
        stopped_early = False

        with open(metrics_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
            writer.writeheader()

            while self.total_steps < cfg.sac.total_steps and not stopped_early:
                exploration = self.episodes < cfg.sac.bootstrap_episodes
                steps, ep_return, status = self._run_episode(exploration)
                self.episodes += 1

                n_critic = n_policy = 0
                if not exploration:
                    advanced = self.tracker.update(status)
                    n_critic, n_policy = self._update_networks(steps)
                    self.update_log.append((steps, n_critic, n_policy))
                    if advanced:
                        self.env.set_layout(self.layouts[self.tracker.stage])

                writer.writerow({
                    "kind": "episode",
                    "total_steps": self.total_steps,
                    "stage": self.tracker.stage,
                    "episode": self.episodes,
                    "episode_steps": steps,
                    "outcome": status.value,
                    "episode_return": repr(round(ep_return, 9)),
                    "success_rate": repr(round(self.tracker.success_rate, 6)),
                    "critic_loss": "" if self.last_critic_loss is None else repr(self.last_critic_loss),
                    "policy_loss": "" if self.last_policy_loss is None else repr(self.last_policy_loss),
                    "eval_score": "",
                    "eval_success": "",
                })

                boundaries_due = self.total_steps // cfg.sac.eval_every
                if boundaries_due > self.evals_done:
                    eval_score, eval_success = self._course_eval()
                    for b in range(self.evals_done + 1, boundaries_due + 1):
                        writer.writerow({
                            "kind": "eval",
                            "total_steps": b * cfg.sac.eval_every,
                            "stage": self.tracker.stage,
                            "episode": self.episodes,
                            "episode_steps": "",
                            "outcome": "",
                            "episode_return": "",
                            "success_rate": repr(round(self.tracker.success_rate, 6)),
                            "critic_loss": "",
                            "policy_loss": "",
                            "eval_score": repr(round(eval_score, 6)),
                            "eval_success": repr(round(eval_success, 6)),
                        })
                    self.evals_done = boundaries_due
                    self._save_checkpoint(self.out_dir / "checkpoint_weights.json")
                    if self.eval_hook is not None:
                        if self.eval_hook(self.total_steps, self.policy):
                            stopped_early = True

        self._save_checkpoint(weights_path)
        return TrainResult(
            weights_path=weights_path,
            metrics_path=metrics_path,
            total_steps=self.total_steps,
            episodes=self.episodes,
            final_stage=self.tracker.stage,
            stopped_early=stopped_early,
        )


def train(
    cfg: TrainConfig,
    seed: int,
    out_dir: str | Path,
    layouts: list[WorldLayout] | None = None,
    eval_hook=None,
) -> TrainResult:
    """Run one seeded training and return the output paths."""
    return MetaSkillTrainer(cfg, seed, out_dir, layouts=layouts, eval_hook=eval_hook).run()
