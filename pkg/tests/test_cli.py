import csv
import json
import math
from pathlib import Path

import pytest

from navsim import cli

REPO = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    cfg = {
        "robot": {"radius": 0.2, "v_max": 0.6, "omega_max": round(math.pi / 2, 6)},
        "env": {"lidar": {"n_beams": 12}, "max_steps": 30},
        "net": {"arch": "dense", "n_beams": 12, "dense_beams": 12, "hidden": [16, 16]},
        "sac": {"batch_size": 8, "buffer_capacity": 2000, "total_steps": 120,
                "bootstrap_episodes": 2, "eval_every": 60, "policy_delay": 2},
        "curriculum": ["empty8"],
        "dynamic": {
            "layouts": ["empty8", "gate"],
            "triggers": [{"at": [0.0, -0.8], "radius": 0.4}],
            "start": [0.0, -2.5], "goal": [0.0, 2.5],
        },
    }
    path.write_text(json.dumps(cfg))
    return path


def run_dirs(out: Path, prefix: str):
    return sorted(p for p in out.iterdir() if p.name.startswith(prefix))


@pytest.fixture(scope="module")
def trained(tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    rc = cli.main(["train", "--config", str(tiny_config), "--seed", "0", "--out", str(out)])
    assert rc == 0
    (run_dir,) = run_dirs(out, "train-")
    return tiny_config, run_dir


# ---------------------------------------------------------------------------
# train


def test_train_two_seeds_two_outputs(tiny_config, tmp_path):
    rc = cli.main(["train", "--config", str(tiny_config), "--seed", "0,1", "--out", str(tmp_path)])
    assert rc == 0
    dirs = run_dirs(tmp_path, "train-")
    assert len(dirs) == 2
    for d in dirs:
        assert (d / "metrics.csv").exists()
        assert (d / "weights_final.json").exists()
        manifest = json.loads((d / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["sac"]["total_steps"] == 120


def test_train_same_seed_byte_identical_metrics(tiny_config, tmp_path):
    for sub in ("a", "b"):
        rc = cli.main(["train", "--config", str(tiny_config), "--seed", "5", "--out", str(tmp_path / sub)])
        assert rc == 0
    (da,) = run_dirs(tmp_path / "a", "train-")
    (db,) = run_dirs(tmp_path / "b", "train-")
    assert (da / "metrics.csv").read_bytes() == (db / "metrics.csv").read_bytes()


def test_train_rejects_malformed_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sac": {"gamma": 1.5}}))
    rc = cli.main(["train", "--config", str(bad), "--seed", "0", "--out", str(tmp_path)])
    assert rc == 1
    assert "sac.gamma" in capsys.readouterr().err


def test_train_rejects_unknown_field(tmp_path, capsys):
    bad = tmp_path / "bad2.json"
    bad.write_text(json.dumps({"sac": {"gamm": 0.9}}))
    rc = cli.main(["train", "--config", str(bad), "--seed", "0", "--out", str(tmp_path)])
    assert rc == 1
    assert "sac.gamm" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# eval protocols


def test_eval_goals_writes_four_rows(trained, tmp_path):
    tiny_config, run_dir = trained
    rc = cli.main([
        "eval", "--weights", str(run_dir / "weights_final.json"),
        "--config", str(tiny_config), "--protocol", "goals", "--out", str(tmp_path),
    ])
    assert rc == 0
    (d,) = run_dirs(tmp_path, "eval-goals-")
    with open(d / "goals.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert (d / "goals.svg").exists()


def test_eval_sweep_writes_twelve_rows(trained, tmp_path):
    tiny_config, run_dir = trained
    rc = cli.main([
        "eval", "--weights", str(run_dir / "weights_final.json"),
        "--config", str(tiny_config), "--protocol", "sweep", "--out", str(tmp_path),
    ])
    assert rc == 0
    (d,) = run_dirs(tmp_path, "eval-sweep-")
    with open(d / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert (d / "sweep.svg").exists()


def test_eval_dynamic_writes_trace(trained, tmp_path):
    tiny_config, run_dir = trained
    rc = cli.main([
        "eval", "--weights", str(run_dir / "weights_final.json"),
        "--config", str(tiny_config), "--protocol", "dynamic", "--out", str(tmp_path),
    ])
    assert rc == 0
    (d,) = run_dirs(tmp_path, "eval-dynamic-")
    assert (d / "dynamic.csv").exists()
    assert (d / "dynamic.svg").exists()


def test_eval_rejects_arch_mismatch(trained, tmp_path, capsys):
    tiny_config, run_dir = trained
    other = json.loads(tiny_config.read_text())
    other["env"]["lidar"]["n_beams"] = 24
    other["net"]["n_beams"] = 24
    other["net"]["dense_beams"] = 24
    other_path = tmp_path / "other.json"
    other_path.write_text(json.dumps(other))
    rc = cli.main([
        "eval", "--weights", str(run_dir / "weights_final.json"),
        "--config", str(other_path), "--protocol", "goals", "--out", str(tmp_path),
    ])
    assert rc == 1
    assert "not match" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# transfer demo


def test_transfer_demo_csv_and_figure(tmp_path):
    rc = cli.main(["transfer", "--config", str(REPO / "configs" / "transfer_demo.json"),
                   "--out", str(tmp_path)])
    assert rc == 0
    (d,) = run_dirs(tmp_path, "transfer-")
    with open(d / "transfer.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    by_cmd = {(float(r["v_m"]), float(r["omega_m"])): r for r in rows}
    assert float(by_cmd[(0.5, 0.25)]["v_out"]) == pytest.approx(0.4)
    assert float(by_cmd[(0.5, 0.25)]["omega_out"]) == pytest.approx(0.1)
    assert float(by_cmd[(0.2, 1.0)]["omega_out"]) == pytest.approx(0.5)
    assert (d / "transfer.svg").exists()


# ---------------------------------------------------------------------------
# oracle check


def test_oracle_check_passes(capsys):
    rc = cli.main(["oracle-check", "--samples", "200", "--seed", "3", "--grid", "1500"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PASS: 0 violations" in out


def test_oracle_check_single_sample_deterministic(capsys):
    rc1 = cli.main(["oracle-check", "--samples", "1", "--seed", "11"])
    out1 = capsys.readouterr().out
    rc2 = cli.main(["oracle-check", "--samples", "1", "--seed", "11"])
    out2 = capsys.readouterr().out
    assert rc1 == rc2 == 0
    assert out1 == out2


def test_oracle_check_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_oracle_check",
                        lambda n, s, grid_n=2000: {"samples": n, "failures": 3,
                                                   "max_deviation": 1.0, "grid_n": grid_n})
    rc = cli.main(["oracle-check", "--samples", "10"])
    assert rc == 3
    assert "FAIL" in capsys.readouterr().out


def test_oracle_check_rejects_zero_samples(capsys):
    rc = cli.main(["oracle-check", "--samples", "0"])
    assert rc == 1


# ---------------------------------------------------------------------------
# plot


def test_plot_from_trace_csv(trained, tmp_path):
    tiny_config, run_dir = trained
    rc = cli.main([
        "eval", "--weights", str(run_dir / "weights_final.json"),
        "--config", str(tiny_config), "--protocol", "dynamic", "--out", str(tmp_path),
    ])
    assert rc == 0
    (d,) = run_dirs(tmp_path, "eval-dynamic-")
    out_svg = tmp_path / "replot.svg"
    rc = cli.main(["plot", "--traces", str(d / "dynamic.csv"), "--layout", "gate",
                   "--out", str(out_svg), "--title", "replot"])
    assert rc == 0
    assert out_svg.exists()


def test_runtime_failure_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"curriculum": ["does-not-exist"]}))
    rc = cli.main(["train", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path)])
    # unknown layout is a configuration-level problem reported as exit 1
    assert rc == 1
    assert "unknown layout" in capsys.readouterr().err
