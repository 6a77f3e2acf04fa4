import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bezgym.dynamics import build_canonical_model
from bezgym.dynamics.simulator import CONTROL_DT
from bezgym.envs import Trajectory, kick_task, walk_task
from bezgym.evaluation import (
    EvalReport, ReadyPosePolicy, evaluate_checkpoint, format_report, metric_accuracy, metric_jump,
    metric_kick_velocity, metric_pitch_angle, metric_walk_velocity, policy_from_checkpoint, run_eval,
    summarize,
)
from bezgym.network import forward
from bezgym.orchestration.curriculum import build_trainer, run_curriculum
from bezgym.orchestration.schedule import load_config

G = 9.81


@pytest.fixture(scope="module")
def model():
    return build_canonical_model()


def scripted(n, *, x=None, pitch=None, ball_x=None, ball_v=None, fell=None, contacts=None, com=None,
             com_vel=None, task="kick", goal=(1.0, 0.0)):
    """A trajectory with ``n`` rows whose unspecified fields are at rest."""
    zeros = np.zeros(n)
    x = zeros if x is None else np.asarray(x, float)
    pitch = zeros if pitch is None else np.asarray(pitch, float)
    ball_x = np.full(n, 0.2) if ball_x is None else np.asarray(ball_x, float)
    ball_v = zeros if ball_v is None else np.asarray(ball_v, float)
    fell = zeros if fell is None else np.asarray(fell, float)
    contacts = np.ones((n, 4)) if contacts is None else np.asarray(contacts, float)
    com = np.tile([0.0, 0.3], (n, 1)) if com is None else np.asarray(com, float)
    com_vel = np.zeros((n, 2)) if com_vel is None else np.asarray(com_vel, float)
    t = Trajectory(task=task, goal=goal)
    for i in range(n):
        t.append(time=i * CONTROL_DT, q=np.zeros(9), qd=np.zeros(9), base_pose=[x[i], 0.3, pitch[i]],
                 base_vel=np.zeros(3), ball_pos=[ball_x[i], 0.07], ball_vel=[ball_v[i], 0.0],
                 done=float(i == n - 1), fell=fell[i], contacts=contacts[i], com=com[i], com_vel=com_vel[i],
                 foot_z=0.0 if contacts[i].max() > 0 else com[i, 1] - com[0, 1])
    return t


# --- kick ------------------------------------------------------------------


def test_kick_velocity_no_contact():
    assert metric_kick_velocity(scripted(20)) == (0.0, False)


def test_kick_velocity_peak():
    v = np.concatenate([np.zeros(5), np.linspace(0.2, 1.3, 6), np.linspace(1.2, 0.1, 10)])
    speed, hit = metric_kick_velocity(scripted(len(v), ball_v=v))
    assert hit and speed == pytest.approx(1.3, abs=1e-12)


def test_kick_velocity_two_contacts_takes_max():
    v = np.concatenate([np.zeros(3), [0.9, 0.7, 0.4, 0.2], [0.6, 0.5]])
    assert metric_kick_velocity(scripted(len(v), ball_v=v))[0] == pytest.approx(0.9)


def test_accuracy_fractions():
    hit = scripted(10, ball_x=np.linspace(0.2, 1.0, 10))
    miss = scripted(10, ball_x=np.linspace(0.2, 0.5, 10))
    assert metric_accuracy([hit] * 10) == 1.0
    assert metric_accuracy([hit] * 9 + [miss]) == pytest.approx(0.9)


def test_backward_kick_counts_zero():
    back = scripted(10, ball_x=np.linspace(0.2, -1.0, 10))
    assert metric_accuracy([back]) == 0.0


def test_fallen_episode_can_still_be_accurate():
    n = 10
    fell = np.zeros(n)
    fell[-1] = 1
    t = scripted(n, ball_x=np.linspace(0.2, 1.0, n), fell=fell)
    rep = summarize([t], kick_task())
    assert rep.fell_fraction == 1.0 and rep.accuracy_fraction == 1.0


# --- pitch and walk --------------------------------------------------------


def test_pitch_upright_and_constant():
    assert metric_pitch_angle(scripted(10)) == 0.0
    assert metric_pitch_angle(scripted(10, pitch=np.full(10, math.radians(7)))) == pytest.approx(7.0)


def test_pitch_excludes_fallen_steps():
    pitch = np.full(10, math.radians(3))
    pitch[-2:] = math.radians(80)
    fell = np.zeros(10)
    fell[-2:] = 1
    assert metric_pitch_angle(scripted(10, pitch=pitch, fell=fell)) == pytest.approx(3.0)


def test_walk_velocity_examples():
    assert metric_walk_velocity(scripted(61, task="walk")) == 0.0
    n = 121  # 1 s
    t = scripted(n, x=np.linspace(0, 1.0, n), task="walk")
    assert metric_walk_velocity(t) == pytest.approx(1.0)
    there_and_back = np.concatenate([np.linspace(0, 0.8, 61), np.linspace(0.8, 0.2, 61)[1:]])
    t = scripted(len(there_and_back), x=there_and_back, task="walk")
    assert metric_walk_velocity(t) == pytest.approx(0.2 / 1.0)


def test_walk_velocity_backward_goal():
    n = 121
    t = scripted(n, x=np.linspace(0, -0.5, n), task="walk", goal=(-1.0, 0.0))
    assert metric_walk_velocity(t) == pytest.approx(0.5)


# --- jump ------------------------------------------------------------------


def _hop(vx=1.82, vz=1.51, ground=10, z0=0.3):
    """Standing rows, then a ballistic COM arc from take-off until it returns to z0."""
    flight = int(2 * vz / G / CONTROL_DT)
    tt = np.arange(1, flight + 1) * CONTROL_DT
    com = np.concatenate([np.tile([0.0, z0], (ground, 1)),
                          np.stack([vx * tt, z0 + vz * tt - 0.5 * G * tt ** 2], 1)])
    vel = np.zeros_like(com)
    vel[ground - 1] = [vx, vz]
    vel[ground:] = np.stack([np.full(flight, vx), vz - G * tt], 1)
    contacts = np.ones((len(com), 4))
    contacts[ground:] = -1
    return com, vel, contacts


def test_jump_none():
    s = metric_jump(scripted(30, task="jump"))
    assert (s.distance_x, s.distance_z, s.velocity_x, s.velocity_z, s.jumps) == (0, 0, 0, 0, 0)


def test_jump_two_airborne_steps_is_not_a_jump():
    c = np.ones((20, 4))
    c[5:7] = -1
    assert metric_jump(scripted(20, contacts=c, task="jump")).jumps == 0


def test_ballistic_hop():
    com, vel, contacts = _hop()
    com = np.vstack([com, com[-1:] * [1, 0] + [0, 0.3]])
    vel = np.vstack([vel, [[0, 0]]])
    contacts = np.vstack([contacts, np.ones((1, 4))])
    s = metric_jump(scripted(len(com), com=com, com_vel=vel, contacts=contacts, task="jump"))
    assert s.jumps == 1
    assert (s.velocity_x, s.velocity_z) == pytest.approx((1.82, 1.51))
    assert s.distance_z == pytest.approx(1.51 ** 2 / (2 * G), abs=1e-3)


def test_six_hops_then_fall():
    com, vel, contacts = [], [], []
    for k in range(6):
        c, v, f = _hop(ground=5)
        com.append(c + [com[-1][-1, 0] if com else 0.0, 0.0])
        vel.append(v)
        contacts.append(f)
    # land, then topple
    com.append(np.tile([com[-1][-1, 0], 0.3], (3, 1)))
    vel.append(np.zeros((3, 2)))
    contacts.append(np.ones((3, 4)))
    com.append(np.tile([com[-1][-1, 0], 0.1], (5, 1)))
    vel.append(np.zeros((5, 2)))
    contacts.append(-np.ones((5, 4)))
    com, vel, contacts = map(np.vstack, (com, vel, contacts))
    fell = np.zeros(len(com))
    fell[-1] = 1
    s = metric_jump(scripted(len(com), com=com, com_vel=vel, contacts=contacts, fell=fell, task="jump"))
    assert s.jumps == 6


# --- aggregation and harness -----------------------------------------------


def test_two_falls_in_ten():
    trajs = []
    for i in range(10):
        fell = np.zeros(5)
        if i < 2:
            fell[-1] = 1
        trajs.append(scripted(5, fell=fell, task="walk"))
    assert summarize(trajs, walk_task()).fell_fraction == pytest.approx(0.2)


def test_inapplicable_metrics_marked():
    rep = summarize([scripted(5, task="walk")], walk_task())
    assert rep.kick_velocity is None and rep.accuracy_fraction is None and rep.distance_x is None
    text = format_report(rep, compare_paper=True)
    assert "Kick" not in text and "Distance" not in text


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_report_ranges(seed):
    rng = np.random.default_rng(seed)
    trajs = []
    for _ in range(4):
        n = int(rng.integers(5, 30))
        trajs.append(scripted(n, x=rng.normal(0, 0.3, n), pitch=rng.normal(0, 0.3, n),
                              ball_x=rng.uniform(-1, 2, n), ball_v=rng.normal(0, 1, n),
                              fell=np.r_[np.zeros(n - 1), rng.integers(0, 2)],
                              contacts=np.where(rng.random((n, 4)) < 0.5, 1.0, -1.0)))
    rep = summarize(trajs, kick_task())
    assert 0 <= rep.fell_fraction <= 1 and 0 <= rep.accuracy_fraction <= 1
    assert rep.kick_velocity >= 0 and rep.pitch_angle >= 0


def test_ready_pose_standing_oracle(model):
    pol = ReadyPosePolicy(model)
    kick = run_eval(pol, kick_task(max_steps=240), n=3, seed=0, model=model)
    assert kick.fell_fraction == 0 and kick.kick_velocity == 0 and kick.no_contact_episodes == 3
    walk = run_eval(pol, walk_task(max_steps=240), n=3, seed=0, model=model)
    assert walk.fell_fraction == 0 and walk.avg_velocity < 0.01


def test_eval_deterministic_and_writes_logs(model, tmp_path):
    pol = ReadyPosePolicy(model)
    a = run_eval(pol, walk_task(max_steps=30), n=2, seed=4, model=model, out_dir=tmp_path)
    b = run_eval(pol, walk_task(max_steps=30), n=2, seed=4, model=model)
    assert a.comparable() == b.comparable()
    back = Trajectory.read_jsonl(tmp_path / "episode_000.jsonl")
    assert len(back) == 31


CFG = """
seed = 1
[task]
kind = "walk"
max_steps = 40
[ppo]
num_envs = 4
horizon = 8
minibatch_size = 16
hidden = [16, 16]
init_log_std = -2.0
normalize_observations = true
[[stages]]
name = "straight"
iterations = 2
"""


def test_checkpoint_policy_matches_trainer(model, tmp_path):
    cfg = load_config(CFG)
    res = run_curriculum(cfg, tmp_path)
    pol = policy_from_checkpoint(res.checkpoint)
    tr = build_trainer(cfg, 0, model)
    tr.load_state_dict(res.checkpoint.trainer)
    obs = np.random.default_rng(0).normal(size=(3, tr.env.obs_dim))
    assert pol(obs).tobytes() == tr.act(obs, deterministic=True).tobytes()
    r1 = evaluate_checkpoint(tmp_path / "final.ckpt", "walk", n=2, seed=0)
    r2 = evaluate_checkpoint(tmp_path / "final.ckpt", "walk", n=2, seed=0)
    assert isinstance(r1, EvalReport) and r1.comparable() == r2.comparable()
    assert r1.config_hash == cfg.hash
    with pytest.raises(ValueError):
        evaluate_checkpoint(tmp_path / "final.ckpt", "kick", n=1)
