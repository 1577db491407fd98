import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from invpomdp.belief_grid import build_grid
from invpomdp.cli import main
from invpomdp.mdp_quant import TabularPolicy

DEGENERATE = """\
# deterministic two-stage model
demand_var = 0
noise_var = 0
initial_var = 1e-300
initial_mean = 2
len_episode = 2
discount = 1
"""


def _csvs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix == ".csv"}


def _replay_same(out, tmp_path):
    rep = tmp_path / (out.name + "-again")
    assert main(["replay", "--manifest", str(out / "manifest.json"), "--out-dir", str(rep)]) == 0
    a, b = _csvs(out), _csvs(rep)
    assert a and a == b
    return rep


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["bogus"])
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_console_script_usage_error():
    r = subprocess.run([sys.executable, "-m", "invpomdp.cli", "solve-quant"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "--dx" in r.stderr


def test_runtime_error_exits_1(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("delta = 0\n")
    assert main(["solve-quant", "--dx", "1", "--config", str(cfg), "--out-dir",
                 str(tmp_path / "o")]) == 1
    assert "delta" in capsys.readouterr().err
    assert main(["eval", "--policy", str(tmp_path / "missing.csv"), "--out-dir",
                 str(tmp_path / "o2")]) == 1


def test_solve_quant_artifacts_and_replay(tmp_path, capsys):
    out = tmp_path / "sq"
    assert main(["solve-quant", "--dx", "1.0", "--episodes", "200", "--seed", "3",
                 "--out-dir", str(out)]) == 0
    assert "seed: 3" in capsys.readouterr().out
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "solve-quant" and m["seed"] == 3
    assert set(m["artifacts"]) == {"policy.csv", "eval.csv", "sS.csv"}
    assert m["config"]["fixed_cost"] == 1.0
    pol = TabularPolicy.from_csv(out / "policy.csv")
    assert pol.horizon == 4
    _replay_same(out, tmp_path)


def test_out_dir_collision(tmp_path):
    out = tmp_path / "o"
    args = ["filter-demo", "--sequences", "2", "--out-dir", str(out)]
    assert main(args) == 0
    before = (out / "filter_demo.csv").read_bytes()
    assert main(args) == 1
    assert main(args + ["--force", "--seed", "1"]) == 0
    assert (out / "filter_demo.csv").read_bytes() != before


def test_filter_demo_agreement(tmp_path):
    out = tmp_path / "fd"
    assert main(["filter-demo", "--sequences", "20", "--out-dir", str(out)]) == 0
    with open(out / "filter_demo.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20 * 5
    for r in rows:
        assert abs(float(r["grid_mean"]) - float(r["gauss_mean"])) < 1e-2
        assert abs(float(r["grid_var"]) - float(r["gauss_var"])) < 2e-2
    _replay_same(out, tmp_path)


def test_zero_policy_eval_is_hand_value(tmp_path, capsys):
    cfg = tmp_path / "deg.cfg"
    cfg.write_text(DEGENERATE)
    g = build_grid(-20, 30, 1.0)
    pol = TabularPolicy(grid=g, action=np.zeros((2, len(g))), value=np.zeros((3, len(g))))
    pol.to_csv(tmp_path / "zero.csv")
    out = tmp_path / "ev"
    assert main(["eval", "--policy", str(tmp_path / "zero.csv"), "--episodes", "10",
                 "--config", str(cfg), "--out-dir", str(out)]) == 0
    with open(out / "eval.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["value"]) == 1.0
    _replay_same(out, tmp_path)


def test_alias_round_trips_through_manifest(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("sigma_eta_sq=2\n")
    out = tmp_path / "al"
    assert main(["filter-demo", "--sequences", "3", "--config", str(cfg), "--out-dir",
                 str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["noise_var"] == 2.0 and "sigma_eta_sq" not in m["config"]
    rep = _replay_same(out, tmp_path)
    assert json.loads((rep / "manifest.json").read_text())["config"]["noise_var"] == 2.0


def test_train_ddpg_replay_and_policy_tools(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("batch_size = 8\nhidden = 8\n")
    out = tmp_path / "tr"
    assert main(["train-ddpg", "--mode", "histories", "--episodes", "10", "--eval-every", "5",
                 "--eval-episodes", "20", "--config", str(cfg), "--out-dir", str(out)]) == 0
    log = (out / "train_log.csv").read_text().splitlines()
    assert len(log) == 3
    rep = _replay_same(out, tmp_path)
    assert (out / "actor.json").read_bytes() == (rep / "actor.json").read_bytes()

    sl = tmp_path / "sl"
    assert main(["slice", "--policy", str(out / "actor.json"), "--config", str(cfg),
                 "--out-dir", str(sl)]) == 0
    curve = np.loadtxt(sl / "slice.csv", delimiter=",", skiprows=1)
    assert curve.shape == (49, 2) and np.all((curve[:, 1] >= 0) & (curve[:, 1] <= 12))
    ev = tmp_path / "ev"
    assert main(["eval", "--policy", str(out / "actor.json"), "--episodes", "50", "--config",
                 str(cfg), "--out-dir", str(ev)]) == 0


def test_compare_quantized_only(tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--dx", "1.0,0.5", "--episodes", "300", "--ddpg-episodes", "0",
                 "--out-dir", str(out)]) == 0
    with open(out / "compare.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == ["quantized dx=1", "quantized dx=0.5"]
    assert main(["compare", "--dx", "x", "--out-dir", str(tmp_path / "bad")]) == 1


def test_bad_manifest(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{}")
    assert main(["replay", "--manifest", str(p), "--out-dir", str(tmp_path / "r")]) == 1
