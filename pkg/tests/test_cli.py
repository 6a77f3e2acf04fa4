import json

import numpy as np

from bezgym.cli import main
from bezgym.envs import Trajectory

CFG = """
seed = 2
[task]
kind = "walk"
max_steps = 30
[ppo]
num_envs = 4
horizon = 8
minibatch_size = 16
hidden = [16, 16]
[[stages]]
name = "straight"
iterations = 2
"""


def test_selftest_passes(capsys):
    assert main(["selftest", "--imu-samples", "200000"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 8 and "FAIL" not in out


def test_gradcheck_exit_codes(capsys):
    assert main(["gradcheck", "--trials", "4"]) == 0
    assert main(["gradcheck", "--trials", "4", "--tolerance", "1e-30"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_train_eval_replay(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CFG)
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(run), "--seed", "5", "--quiet"]) == 0
    first = json.loads((run / "metrics.jsonl").read_text().splitlines()[0])
    assert first["type"] == "run" and first["seed"] == 5

    eps = tmp_path / "eps"
    assert main(["eval", "--checkpoint", str(run / "final.ckpt"), "--task", "walk", "--episodes", "2",
                 "--compare-paper", "--trajectories", str(eps)]) == 0
    out = capsys.readouterr().out
    assert "Velocity" in out or "velocity" in out
    rec = json.loads((run / "eval.jsonl").read_text().splitlines()[-1])
    assert rec["type"] == "eval_report" and rec["n_episodes"] == 2

    csv = tmp_path / "ep.csv"
    assert main(["replay", "--trajectory", str(eps / "episode_000.jsonl"), "--out", str(csv)]) == 0
    lines = csv.read_text().splitlines()
    traj = Trajectory.read_jsonl(eps / "episode_000.jsonl")
    assert len(lines) == len(traj) + 1
    assert lines[0].split(",")[0] == "time"
    assert np.allclose([float(l.split(",")[0]) for l in lines[1:]], traj.array("time"))


def test_eval_wrong_task_is_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CFG)
    main(["train", "--config", str(cfg), "--out", str(tmp_path), "--quiet"])
    assert main(["eval", "--checkpoint", str(tmp_path / "final.ckpt"), "--task", "kick", "--episodes", "1"]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_config_reports_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CFG.replace("[ppo]", "[ppo]\ngama = 0.9"))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "ppo.gama" in capsys.readouterr().err
