import math

import numpy as np
import pytest
import torch

from navsim.nets import (
    ActionMap, CriticNet, NetConfig, PolicyNet, WeightsError, load_into, load_policy,
    load_weights, policy_forward, save_weights, squashed_gaussian_log_prob,
)
from navsim.vehicle import DimensionalConfig, VelocityCommand

SMALL = NetConfig(arch="mlp", mlp_obs_dim=10, hidden=(16, 16))


def small_policy(seed=0):
    torch.manual_seed(seed)
    return PolicyNet(SMALL)


# ---------------------------------------------------------------------------
# policy forward


def test_deterministic_action_is_squashed_mean():
    policy = small_policy()
    obs = np.zeros(10)
    out = policy_forward(policy, obs, mode="deterministic")
    assert np.allclose(out.action, np.tanh(out.mean))


def test_zero_mean_gives_zero_action():
    policy = small_policy()
    with torch.no_grad():
        policy.mean_head.weight.zero_()
        policy.mean_head.bias.zero_()
    out = policy_forward(policy, np.random.default_rng(0).normal(size=10))
    assert np.allclose(out.action, 0.0)


def test_saturated_mean_squashes_to_unit():
    policy = small_policy()
    with torch.no_grad():
        policy.mean_head.weight.zero_()
        policy.mean_head.bias.copy_(torch.tensor([10.0, -10.0]))
    out = policy_forward(policy, np.zeros(10))
    assert out.action[0] == pytest.approx(1.0, abs=1e-4)
    assert out.action[1] == pytest.approx(-1.0, abs=1e-4)


def test_stochastic_sampling_reproducible():
    policy = small_policy()
    obs = np.random.default_rng(1).normal(size=10)
    a = policy_forward(policy, obs, mode="stochastic", generator=torch.Generator().manual_seed(7))
    b = policy_forward(policy, obs, mode="stochastic", generator=torch.Generator().manual_seed(7))
    assert np.array_equal(a.action, b.action)
    assert a.log_prob == b.log_prob


def test_policy_forward_rejects_bad_width():
    with pytest.raises(ValueError):
        policy_forward(small_policy(), np.zeros(11))


def test_log_std_is_clamped():
    policy = small_policy()
    with torch.no_grad():
        policy.log_std_head.weight.zero_()
        policy.log_std_head.bias.copy_(torch.tensor([100.0, -100.0]))
    out = policy_forward(policy, np.zeros(10))
    assert out.log_std[0] == 2.0 and out.log_std[1] == -20.0


# ---------------------------------------------------------------------------
# squashed-Gaussian density


def test_squashed_density_integrates_to_one():
    # total mass over a in (-1, 1) via Gauss-Legendre, per dimension
    nodes, weights = np.polynomial.legendre.leggauss(6000)
    a = torch.from_numpy(nodes)
    z = torch.atanh(a)
    rng = np.random.default_rng(2)
    mus = rng.uniform(-1.5, 1.5, 1000)
    log_stds = rng.uniform(-2.0, 0.5, 1000)
    for lo in range(0, 1000, 200):
        mu = torch.from_numpy(mus[lo:lo + 200]).unsqueeze(1)
        ls = torch.from_numpy(log_stds[lo:lo + 200]).unsqueeze(1)
        logp = squashed_gaussian_log_prob(
            z.unsqueeze(0).unsqueeze(-1), mu.unsqueeze(-1), ls.unsqueeze(-1)
        )
        mass = (torch.from_numpy(weights).unsqueeze(0) * logp.exp()).sum(dim=1)
        assert torch.all((mass - 1.0).abs() < 1e-3), float((mass - 1.0).abs().max())


def test_log_prob_matches_naive_formula():
    rng = np.random.default_rng(3)
    z = torch.from_numpy(rng.normal(size=(50, 2)))
    mu = torch.from_numpy(rng.normal(size=(50, 2)))
    ls = torch.from_numpy(rng.uniform(-1, 0.5, size=(50, 2)))
    got = squashed_gaussian_log_prob(z, mu, ls)
    std = ls.exp()
    naive = (
        -0.5 * (((z - mu) / std) ** 2 + 2 * ls + math.log(2 * math.pi))
        - torch.log(1 - torch.tanh(z) ** 2 + 1e-300)
    ).sum(-1)
    assert torch.allclose(got, naive, atol=1e-9)


# ---------------------------------------------------------------------------
# reverse-mode gradients


def test_scalar_square_gradient():
    w = torch.tensor(3.0, requires_grad=True)
    (w**2).backward()
    assert w.grad.item() == 6.0


def test_three_layer_net_matches_finite_differences():
    from helpers import analytic_gradients, fd_gradients, max_relative_error

    torch.manual_seed(10)
    net = torch.nn.Sequential(
        torch.nn.Linear(6, 8), torch.nn.Tanh(),
        torch.nn.Linear(8, 8), torch.nn.Tanh(),
        torch.nn.Linear(8, 1),
    ).double()
    x = torch.randn(4, 6, dtype=torch.float64)
    loss = lambda: (net(x) ** 2).mean()
    err = max_relative_error(
        analytic_gradients(loss, list(net.parameters())),
        fd_gradients(loss, list(net.parameters()), h=1e-5),
    )
    assert err < 1e-4


def test_each_layer_type_gradchecks_in_isolation():
    torch.manual_seed(11)
    x = torch.randn(3, 1, 12, dtype=torch.float64, requires_grad=True)
    conv = torch.nn.Conv1d(1, 2, 3, stride=2).double()
    assert torch.autograd.gradcheck(conv, (x,))
    y = torch.randn(3, 5, dtype=torch.float64, requires_grad=True)
    lin = torch.nn.Linear(5, 4).double()
    assert torch.autograd.gradcheck(lin, (y,))
    assert torch.autograd.gradcheck(torch.tanh, (y,))
    z = torch.randn(3, 2, dtype=torch.float64, requires_grad=True)
    mu = torch.randn(3, 2, dtype=torch.float64, requires_grad=True)
    ls = torch.rand(3, 2, dtype=torch.float64, requires_grad=True) - 0.5
    assert torch.autograd.gradcheck(
        lambda *a: squashed_gaussian_log_prob(*a).sum(), (z, mu, ls)
    )


def test_parameters_off_the_loss_path_get_no_gradient():
    policy = small_policy()
    obs = torch.randn(2, 10)
    mean, _ = policy(obs)
    mean.sum().backward()
    assert policy.log_std_head.weight.grad is None
    assert policy.mean_head.weight.grad is not None


def test_non_scalar_backward_rejected():
    w = torch.ones(3, requires_grad=True)
    with pytest.raises(RuntimeError):
        (w * 2).backward()


# ---------------------------------------------------------------------------
# critic


def test_zeroed_final_layer_returns_bias():
    torch.manual_seed(0)
    q = CriticNet(SMALL)
    with torch.no_grad():
        q.trunk[-1].weight.zero_()
        q.trunk[-1].bias.fill_(1.25)
    obs = torch.randn(8, 10)
    act = torch.rand(8, 2) * 2 - 1
    assert torch.allclose(q(obs, act), torch.full((8,), 1.25))


def test_critic_deterministic_on_duplicates():
    torch.manual_seed(1)
    q = CriticNet(SMALL)
    obs = torch.randn(1, 10).repeat(4, 1)
    act = torch.rand(1, 2).repeat(4, 1)
    out = q(obs, act)
    assert torch.all(out == out[0])


def test_conv_and_dense_encoders_run():
    for cfg in (
        NetConfig(arch="conv", n_beams=60, conv_kernel=5, conv_strides=(2, 2)),
        NetConfig(arch="dense", n_beams=60, dense_beams=12),
    ):
        torch.manual_seed(0)
        policy = PolicyNet(cfg)
        q = CriticNet(cfg)
        obs = torch.randn(3, cfg.obs_dim)
        mean, log_std = policy(obs)
        assert mean.shape == (3, 2) and log_std.shape == (3, 2)
        assert q(obs, torch.zeros(3, 2)).shape == (3,)


# ---------------------------------------------------------------------------
# action map


def test_denormalize_endpoints():
    amap = ActionMap.from_bounds(DimensionalConfig(0.2, 0.5, math.pi / 2))
    top = amap.denormalize([1.0, 0.0])
    assert top.v == pytest.approx(0.5) and top.omega == pytest.approx(0.0)
    bot = amap.denormalize([-1.0, -1.0])
    assert bot.v == pytest.approx(0.0) and bot.omega == pytest.approx(-math.pi / 2)


def test_normalize_roundtrip():
    amap = ActionMap.from_bounds(DimensionalConfig(0.2, 0.7, 1.3))
    rng = np.random.default_rng(4)
    for _ in range(100):
        cmd = VelocityCommand(rng.uniform(0, 0.7), rng.uniform(-1.3, 1.3))
        back = amap.denormalize(amap.normalize(cmd))
        assert back.v == pytest.approx(cmd.v, abs=1e-12)
        assert back.omega == pytest.approx(cmd.omega, abs=1e-12)


def test_denormalize_rejects_out_of_range():
    amap = ActionMap.from_bounds(DimensionalConfig(0.2, 0.5, 1.0))
    with pytest.raises(ValueError):
        amap.denormalize([1.5, 0.0])


# ---------------------------------------------------------------------------
# weights container


def test_weights_roundtrip_bit_exact(tmp_path):
    torch.manual_seed(5)
    policy = PolicyNet(SMALL)
    q1 = CriticNet(SMALL)
    path = tmp_path / "w.json"
    save_weights(path, {"policy": policy, "q1": q1}, SMALL, meta={"note": "t"})
    cfg, meta, tensors = load_weights(path)
    assert cfg == SMALL and meta == {"note": "t"}
    fresh = PolicyNet(SMALL)
    load_into(fresh, "policy", tensors)
    for a, b in zip(policy.state_dict().values(), fresh.state_dict().values()):
        assert torch.equal(a.to(torch.float32), b)


def test_load_rejects_arch_mismatch(tmp_path):
    torch.manual_seed(6)
    path = tmp_path / "w.json"
    save_weights(path, {"policy": PolicyNet(SMALL)}, SMALL)
    other = PolicyNet(NetConfig(arch="mlp", mlp_obs_dim=12, hidden=(16, 16)))
    _, _, tensors = load_weights(path)
    with pytest.raises(WeightsError, match="policy\\."):
        load_into(other, "policy", tensors)


def test_load_policy_runs_inference(tmp_path):
    torch.manual_seed(7)
    policy = PolicyNet(SMALL)
    path = tmp_path / "w.json"
    save_weights(path, {"policy": policy}, SMALL, meta={"robot": {"radius": 0.2, "v_max": 0.5, "omega_max": 1.0}})
    loaded, cfg, meta = load_policy(path)
    obs = np.random.default_rng(8).normal(size=10)
    a = policy_forward(policy, obs).action
    b = policy_forward(loaded, obs).action
    assert np.allclose(a, b, atol=1e-7)
