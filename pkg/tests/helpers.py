"""Shared oracles for the test suite: finite-difference gradients and a chain MDP."""

from __future__ import annotations

import numpy as np
import torch

from navsim.config import SacConfig
from navsim.msl import critic_update
from navsim.nets import CriticNet, NetConfig, PolicyNet


def fd_gradients(loss_fn, params, h=1e-6):
    """Central finite differences of a scalar loss w.r.t. each parameter tensor."""
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.reshape(-1)
            gf = g.reshape(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + h
                up = float(loss_fn())
                flat[i] = orig - h
                down = float(loss_fn())
                flat[i] = orig
                gf[i] = (up - down) / (2 * h)
            grads.append(g)
    return grads


def analytic_gradients(loss_fn, params):
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss_fn().backward()
    return [torch.zeros_like(p) if p.grad is None else p.grad.clone() for p in params]


def max_relative_error(analytic, numeric, floor=1e-5, small_abs_tol=1e-8):
    """Worst relative error over components above `floor` in magnitude.

    Components below the floor carry finite-difference roundoff comparable to
    their own size, so they are held to an absolute tolerance instead.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = a.reshape(-1)
        n = n.reshape(-1)
        denom = torch.maximum(a.abs(), n.abs())
        big = denom > floor
        if big.any():
            worst = max(worst, float(((a - n).abs() / denom)[big].max()))
        small = ~big
        if small.any():
            assert float((a - n).abs()[small].max()) < small_abs_tol
    return worst


class FixedNoisePolicy:
    """Wraps a policy so target sampling reuses pre-drawn noise (FD determinism)."""

    def __init__(self, policy: PolicyNet, noise: torch.Tensor):
        self.policy = policy
        self.noise = noise

    def sample(self, obs, generator=None):
        return self.policy.sample(obs, noise=self.noise)


class ConstantActionPolicy:
    """Always proposes the same next action with zero log-probability."""

    def __init__(self, action: torch.Tensor):
        self.action = action

    def sample(self, obs, generator=None):
        n = obs.shape[0]
        a = self.action.unsqueeze(0).expand(n, -1)
        return a, torch.zeros(n, dtype=obs.dtype)


def smooth_gradcheck_nets(seed: int, obs_dim=9, hidden=(10, 10), batch=4, min_margin=1e-3):
    """Small double-precision tanh networks plus a batch with a safe twin-Q margin.

    Seeds are advanced until min |q1 - q2| on the batch exceeds min_margin so
    the twin-minimum never switches branch inside a finite-difference window.
    """
    cfg = NetConfig(arch="mlp", mlp_obs_dim=obs_dim, hidden=hidden, activation="tanh")
    while True:
        torch.manual_seed(seed)
        policy = PolicyNet(cfg).double()
        q1 = CriticNet(cfg).double()
        q2 = CriticNet(cfg).double()
        qt1 = CriticNet(cfg).double()
        qt2 = CriticNet(cfg).double()
        gen = torch.Generator().manual_seed(seed + 1)
        batch_t = {
            "obs": torch.randn(batch, obs_dim, generator=gen, dtype=torch.float64),
            "actions": torch.rand(batch, 2, generator=gen, dtype=torch.float64) * 1.6 - 0.8,
            "rewards": torch.randn(batch, generator=gen, dtype=torch.float64),
            "next_obs": torch.randn(batch, obs_dim, generator=gen, dtype=torch.float64),
            "dones": (torch.rand(batch, generator=gen) < 0.3).double(),
        }
        noise = torch.randn(batch, 2, generator=gen, dtype=torch.float64)
        with torch.no_grad():
            a, _ = policy.sample(batch_t["obs"], noise=noise)
            margin = float((q1(batch_t["obs"], a) - q2(batch_t["obs"], a)).abs().min())
        if margin > min_margin:
            return policy, q1, q2, qt1, qt2, batch_t, noise
        seed += 101


# ---------------------------------------------------------------------------
# deterministic 5-state chain MDP


CHAIN_STATES = 5
CHAIN_GAMMA = 0.9
CHAIN_STEP_COST = -0.01
CHAIN_GOAL_REWARD = 1.0
ACT_RIGHT = torch.tensor([1.0, 0.0])
ACT_LEFT = torch.tensor([-1.0, 0.0])


def chain_transition(s: int, right: bool):
    """(next_state, reward, done) for the 5-state chain; state 4 is terminal."""
    if right:
        s2 = s + 1
        if s2 == CHAIN_STATES - 1:
            return s2, CHAIN_GOAL_REWARD, True
        return s2, CHAIN_STEP_COST, False
    return max(s - 1, 0), CHAIN_STEP_COST, False


def chain_q_oracle():
    """Tabular optimal Q via value iteration."""
    q = np.zeros((CHAIN_STATES, 2))
    for _ in range(500):
        new = np.zeros_like(q)
        for s in range(CHAIN_STATES - 1):
            for a, right in ((0, False), (1, True)):
                s2, r, done = chain_transition(s, right)
                new[s, a] = r + (0.0 if done else CHAIN_GAMMA * q[s2].max())
        q = new
    return q


def chain_dataset():
    obs, acts, rewards, next_obs, dones = [], [], [], [], []
    for s in range(CHAIN_STATES - 1):
        for a, right in ((ACT_LEFT, False), (ACT_RIGHT, True)):
            s2, r, done = chain_transition(s, bool(right))
            obs.append(np.eye(CHAIN_STATES)[s])
            acts.append(a.numpy())
            rewards.append(r)
            next_obs.append(np.eye(CHAIN_STATES)[s2])
            dones.append(float(done))
    return {
        "obs": torch.tensor(np.array(obs), dtype=torch.float32),
        "actions": torch.tensor(np.array(acts), dtype=torch.float32),
        "rewards": torch.tensor(rewards, dtype=torch.float32),
        "next_obs": torch.tensor(np.array(next_obs), dtype=torch.float32),
        "dones": torch.tensor(dones, dtype=torch.float32),
    }


def train_chain_critics(iterations=4000, lr=3e-3, tau=0.05, seed=0):
    """Fit the twin critics on the chain with the optimal next-action policy."""
    cfg = NetConfig(arch="mlp", mlp_obs_dim=CHAIN_STATES, hidden=(64, 64))
    torch.manual_seed(seed)
    q1, q2 = CriticNet(cfg), CriticNet(cfg)
    import copy

    qt1, qt2 = copy.deepcopy(q1), copy.deepcopy(q2)
    opt = torch.optim.Adam(list(q1.parameters()) + list(q2.parameters()), lr=lr)
    sac = SacConfig(gamma=CHAIN_GAMMA, alpha=1e-12, tau=tau, batch_size=8, buffer_capacity=8)
    batch = chain_dataset()
    policy = ConstantActionPolicy(ACT_RIGHT)
    for _ in range(iterations):
        critic_update(batch, q1, q2, qt1, qt2, policy, opt, sac)
    return q1, q2
