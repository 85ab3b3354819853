"""Command-line entry point: train / eval / transfer / oracle-check / plot.

Every run writes a manifest (command, config, seed) into its output directory
so results can be reproduced exactly.  Exit codes: 0 success, 1 configuration
error, 2 runtime failure, 3 oracle or acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, TrainConfig, config_to_dict, load_train_config
from .dvst import TransferContext, oracle_transfer, transfer_policy, wrap_policy
from .env import EnvConfig, LidarConfig, PreprocessConfig
from .evaluation import (
    SwapTrigger, SweepSpec, default_sweep_radii, emit_plot, make_policy_controller,
    run_dynamic, run_goal_course, run_sweep, score, write_sweep_csv,
)
from .msl import train
from .nets import ActionMap, WeightsError, load_policy
from .vehicle import DimensionalConfig, Pose, VelocityCommand
from .world import LayoutError, resolve_layout

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s != ""]
    except ValueError:
        raise ConfigError(f"--seed: expected N[,N...], got {text!r}")


def _run_dir(out: Path, command: str, seed: int | None) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    suffix = f"-s{seed}" if seed is not None else ""
    d = out / f"{command}-{stamp}{suffix}"
    n = 0
    while d.exists():
        n += 1
        d = out / f"{command}-{stamp}{suffix}-{n}"
    d.mkdir(parents=True)
    return d


def _write_manifest(run_dir: Path, command: str, args: argparse.Namespace, cfg: TrainConfig | None,
                    seed: int | None = None) -> None:
    manifest = {
        "command": command,
        "argv": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                 if k != "func"},
        "seed": seed,
        "config": config_to_dict(cfg) if cfg is not None else None,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    cfg = load_train_config(args.config)
    seeds = _parse_seeds(args.seed)
    out = Path(args.out)
    workers = int(os.environ.get("NAVSIM_THREADS", "1"))
    jobs = []
    for seed in seeds:
        run_dir = _run_dir(out, "train", seed)
        _write_manifest(run_dir, "train", args, cfg, seed)
        jobs.append((seed, run_dir))

    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(train, cfg, seed, run_dir) for seed, run_dir in jobs]
            results = [f.result() for f in futures]
    else:
        results = [train(cfg, seed, run_dir) for seed, run_dir in jobs]

    for (seed, run_dir), res in zip(jobs, results):
        print(f"seed {seed}: {res.total_steps} steps, {res.episodes} episodes, "
              f"stage {res.final_stage} -> {run_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _load_controller_parts(weights_path: str):
    policy, net_cfg, meta = load_policy(weights_path)
    robot = DimensionalConfig(**meta["robot"])
    lidar = LidarConfig(**meta["lidar"])
    pp = PreprocessConfig(**meta["preprocess"])
    amap = ActionMap.from_bounds(robot)
    return policy, net_cfg, robot, lidar, pp, amap


def cmd_eval(args) -> int:
    cfg = load_train_config(args.config)
    policy, net_cfg, robot, lidar, pp, amap = _load_controller_parts(args.weights)
    if net_cfg.obs_dim != cfg.net.obs_dim or net_cfg.arch != cfg.net.arch:
        raise ConfigError(
            f"weights arch ({net_cfg.arch}, obs_dim={net_cfg.obs_dim}) does not match "
            f"config ({cfg.net.arch}, obs_dim={cfg.net.obs_dim})"
        )
    run_dir = _run_dir(Path(args.out), f"eval-{args.protocol}", None)
    _write_manifest(run_dir, f"eval-{args.protocol}", args, cfg)
    include_radius = net_cfg.include_radius

    if args.protocol == "goals":
        layout = resolve_layout(args.layout or cfg.curriculum[0])
        controller = make_policy_controller(policy, amap, include_radius=include_radius)
        legs = run_goal_course(layout, cfg.env, robot, controller)
        report = run_dir / "goals.csv"
        with open(report, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["goal_x", "goal_y", "outcome", "steps", "score"])
            for leg in legs:
                w.writerow([repr(leg.goal[0]), repr(leg.goal[1]), leg.outcome.value,
                            leg.steps, repr(score(leg.outcome, leg.steps))])
        emit_plot([leg.log for leg in legs], layout, run_dir / "goals.svg",
                  title=f"goal course on {layout.name}")
        print(f"goal course: {sum(l.outcome.value == 'success' for l in legs)}/{len(legs)} "
              f"reached -> {report}")
        return EXIT_OK

    if args.protocol == "sweep":
        layout = resolve_layout(args.layout or "gate")
        raw_env = EnvConfig(lidar=lidar, preprocess=PreprocessConfig(enabled=False),
                            reward=cfg.env.reward, dt=cfg.env.dt,
                            max_steps=cfg.env.max_steps, goal_radius=cfg.env.goal_radius)
        spec = SweepSpec(
            radii=default_sweep_radii(),
            bounds=((robot.v_max, robot.omega_max),),
            layout=layout,
            start=(0.0, -1.5),
            goal=(0.0, 1.5),
        )

        def factory(scaled_robot: DimensionalConfig):
            ctx = TransferContext(meta=robot, scaled=scaled_robot, dt=cfg.env.dt)
            meta_controller = make_policy_controller(policy, amap, include_radius=include_radius)
            return wrap_policy(meta_controller, ctx, lidar, pp)

        results = run_sweep(spec, factory, raw_env)
        report = run_dir / "sweep.csv"
        write_sweep_csv(results, report)
        emit_plot([r.log for r in results], layout, run_dir / "sweep.svg",
                  title=f"dimension sweep on {layout.name}")
        print(f"sweep: {len(results)} configurations -> {report}")
        return EXIT_OK

    if args.protocol == "dynamic":
        dyn = cfg.dynamic
        if not dyn:
            raise ConfigError("dynamic: config has no 'dynamic' section "
                              "(layouts, triggers, start, goal)")
        try:
            layouts = [resolve_layout(n) for n in dyn["layouts"]]
            triggers = [SwapTrigger(tuple(t["at"]), float(t.get("radius", 0.3)))
                        for t in dyn["triggers"]]
            start = tuple(dyn["start"])
            goal = tuple(dyn["goal"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"dynamic: malformed section ({exc})")
        scaled_robot = DimensionalConfig(**dyn["robot"]) if "robot" in dyn else robot
        raw_env = EnvConfig(lidar=lidar, preprocess=PreprocessConfig(enabled=False),
                            reward=cfg.env.reward, dt=cfg.env.dt,
                            max_steps=cfg.env.max_steps, goal_radius=cfg.env.goal_radius)
        ctx = TransferContext(meta=robot, scaled=scaled_robot, dt=cfg.env.dt)
        controller = wrap_policy(
            make_policy_controller(policy, amap, include_radius=include_radius), ctx, lidar, pp
        )
        log = run_dynamic(layouts, triggers, controller, raw_env, scaled_robot, start, goal)
        log.write_csv(run_dir / "dynamic.csv")
        emit_plot([log], layouts[-1], run_dir / "dynamic.svg", title="layout-swap run")
        print(f"dynamic: {len(log.commands)} steps, swaps at {log.metadata['swaps']} "
              f"-> {run_dir / 'dynamic.csv'}")
        return EXIT_OK

    raise ConfigError(f"--protocol: unknown protocol {args.protocol!r}")


# ---------------------------------------------------------------------------
# transfer demo


def cmd_transfer(args) -> int:
    try:
        spec = json.loads(Path(args.config).read_text())
        meta = DimensionalConfig(**spec["meta"])
        scaled = DimensionalConfig(**spec["scaled"])
        dt = float(spec.get("dt", 0.2))
        commands = [(float(v), float(w)) for v, w in spec["commands"]]
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {args.config}")
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"transfer config: {exc}")

    ctx = TransferContext(meta=meta, scaled=scaled, dt=dt)
    run_dir = _run_dir(Path(args.out), "transfer", None)
    _write_manifest(run_dir, "transfer", args, None)
    report = run_dir / "transfer.csv"
    rows = []
    with open(report, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v_m", "omega_m", "v_ideal", "omega_ideal", "rho_ideal",
                    "case", "v_out", "omega_out"])
        for v_m, w_m in commands:
            res = transfer_policy(v_m, w_m, ctx)
            rows.append(res)
            w.writerow([repr(v_m), repr(w_m), repr(res.v_ideal), repr(res.omega_ideal),
                        repr(res.rho_ideal), res.case.value, repr(res.v_out), repr(res.omega_out)])
    _plot_transfer_arcs(rows, ctx, run_dir / "transfer.svg")
    print(f"transfer: {len(rows)} commands -> {report}")
    return EXIT_OK


def _plot_transfer_arcs(results, ctx: TransferContext, path: Path) -> None:
    """Ideal vs bounded one-cycle arcs, traced from the origin."""
    import matplotlib.pyplot as plt

    from .vehicle import step_pose

    def trace(v, w):
        pts = [(0.0, 0.0)]
        p = Pose(0.0, 0.0, 0.0)
        n = 30
        for _ in range(n):
            p = step_pose(p, VelocityCommand(v, w), ctx.dt / n)
            pts.append((p.x, p.y))
        return np.array(pts)

    fig, ax = plt.subplots(figsize=(5, 5))
    for i, res in enumerate(results):
        ideal = trace(res.v_ideal, res.omega_ideal)
        out = trace(res.v_out, res.omega_out)
        ax.plot(ideal[:, 0], ideal[:, 1], "--", color="0.6",
                label="ideal" if i == 0 else None)
        ax.plot(out[:, 0], out[:, 1], "-", linewidth=1.6,
                label="bounded" if i == 0 else None)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend()
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


# ---------------------------------------------------------------------------
# oracle check


def run_oracle_check(n_samples: int, seed: int, grid_n: int = 2000) -> dict:
    """Random transfer instances: closed form vs grid oracle.

    Checks that the closed form respects both bounds, matches the ideal
    curvature to 1e-9 relative, never shortens the arc below the oracle's
    best by more than one grid step, and stays within one grid step of it.
    """
    rng = np.random.default_rng(seed)
    failures = 0
    max_dev = 0.0
    for _ in range(n_samples):
        meta = DimensionalConfig(rng.uniform(0.1, 1.0), rng.uniform(0.05, 1.0), rng.uniform(0.05, math.pi))
        scaled = DimensionalConfig(rng.uniform(0.1, 1.0), rng.uniform(0.05, 1.0), rng.uniform(0.05, math.pi))
        ctx = TransferContext(meta=meta, scaled=scaled, dt=0.2)
        v_m = rng.uniform(0.0, 1.0)
        w_m = rng.uniform(-math.pi, math.pi)
        res = transfer_policy(v_m, w_m, ctx)
        ov, _ = oracle_transfer(v_m, w_m, ctx, grid_n=grid_n)
        dv = scaled.v_max / (grid_n - 1)
        ok = (
            0.0 <= res.v_out <= scaled.v_max
            and abs(res.omega_out) <= scaled.omega_max
            and res.v_out >= ov - dv - 1e-12
        )
        if res.v_ideal > 0 and res.omega_ideal != 0:
            rho_out = res.v_out / res.omega_out if res.omega_out != 0 else math.inf
            ok = ok and (
                res.v_out == 0.0
                or abs(rho_out - res.rho_ideal) <= 1e-9 * max(1.0, abs(res.rho_ideal))
            )
        max_dev = max(max_dev, abs(res.v_out - ov))
        failures += not ok
    return {"samples": n_samples, "failures": failures, "max_deviation": max_dev, "grid_n": grid_n}


def cmd_oracle_check(args) -> int:
    if args.samples < 1:
        raise ConfigError(f"--samples: must be >= 1, got {args.samples}")
    summary = run_oracle_check(args.samples, args.seed_int, grid_n=args.grid)
    print(f"oracle check: {summary['samples']} samples on a {summary['grid_n']}^2 grid")
    print(f"max |v_closed - v_oracle| = {summary['max_deviation']:.3e}")
    if summary["failures"]:
        print(f"FAIL: {summary['failures']} violations")
        return EXIT_CHECK_FAILED
    print("PASS: 0 violations")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot


def cmd_plot(args) -> int:
    layout = resolve_layout(args.layout)
    logs = []
    for trace_path in args.traces:
        logs.append(_read_trace(trace_path))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_plot(logs, layout, out, title=args.title)
    print(f"plot: {len(logs)} trajectories -> {out}")
    return EXIT_OK


def _read_trace(path: str):
    from .evaluation import TrajectoryLog

    log = TrajectoryLog(metadata={"source": str(path)})
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            log.poses.append(Pose(float(row["x"]), float(row["y"]), float(row["theta"])))
            if row["v"] != "":
                log.commands.append(VelocityCommand(float(row["v"]), float(row["omega"])))
    return log


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the navigation agent")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", default="0", help="seed list: N[,N...]")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate trained weights")
    p.add_argument("--weights", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--protocol", default="goals", choices=["goals", "sweep", "dynamic"])
    p.add_argument("--layout", default=None)
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transfer", help="run the velocity-transfer demo")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("oracle-check", help="certify the closed-form transfer against the grid oracle")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", dest="seed_int", type=int, default=0)
    p.add_argument("--grid", type=int, default=2000)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("plot", help="re-plot trajectory CSVs over a layout")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title", default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, LayoutError, WeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
