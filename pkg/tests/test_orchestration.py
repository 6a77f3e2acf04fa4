import json
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bezgym.dynamics import build_canonical_model
from bezgym.errors import CorruptFile, ParseError, ValidationError, VersionMismatch
from bezgym.network import forward
from bezgym.orchestration.checkpoint import (
    MAGIC, Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
)
from bezgym.orchestration.curriculum import build_trainer, run_curriculum
from bezgym.orchestration.randomization import DomainRandSpec, PhysicsParams, apply_randomization
from bezgym.orchestration.schedule import load_config, load_schedule

TINY = """
seed = 3
[task]
kind = "kick"
[ppo]
num_envs = 4
horizon = 8
minibatch_size = 16
hidden = [16, 16]
init_log_std = -2.0
[[stages]]
name = "free kick"
iterations = 2
[[stages]]
name = "accuracy"
iterations = 2
[stages.task.ball_angle_bound]
initial_bound = 0.5
final_bound = 0.2
"""


@pytest.fixture(scope="module")
def model():
    return build_canonical_model()


# --- schedule --------------------------------------------------------------


def test_kick_curriculum_schedule():
    stages = load_schedule(TINY)
    assert [s.name for s in stages] == ["free kick", "accuracy"]
    assert stages[0].init_from == "fresh" and stages[1].init_from == "previous"
    assert "ball_angle_bound" not in stages[0].task_overrides
    assert stages[1].task_overrides["ball_angle_bound"].final_bound == 0.2


def test_walk_curriculum_schedule():
    text = """
[task]
kind = "walk"
[[stages]]
name = "straight"
iterations = 5
[[stages]]
name = "random goal"
iterations = 5
task = { goal_sampler = "uniform" }
"""
    cfg = load_config(text)
    assert cfg.stage_task(0).goal_sampler == "fixed"
    assert cfg.stage_task(1).goal_sampler == "uniform"


def test_empty_schedule_rejected():
    with pytest.raises(ValidationError):
        load_schedule("[task]\nkind = 'walk'\n")


@pytest.mark.parametrize("text, key", [
    ("bogus = 1\n[[stages]]\niterations = 1\n", "bogus"),
    ("[ppo]\ngama = 0.9\n[[stages]]\niterations = 1\n", "ppo.gama"),
    ("[[stages]]\niterations = 1\ntask = { colour = 1 }\n", "stages[0].task.colour"),
    ("[[stages]]\niterations = 1\n[stages.task.weights]\nw_speed = 1.0\n", "stages[0].task.weights.w_speed"),
])
def test_unknown_keys_named(text, key):
    with pytest.raises(ValidationError) as err:
        load_config(text)
    assert err.value.key == key


def test_parse_error_has_line():
    with pytest.raises(ParseError) as err:
        load_config("seed = 1\n[task]\nkind = \n")
    assert err.value.line == 3


def test_bad_value_is_validation_error():
    with pytest.raises(ValidationError):
        load_config("[ppo]\ngamma = 2.0\n[[stages]]\niterations = 1\n")


# --- domain randomization --------------------------------------------------


def test_zero_std_is_bitwise_noop(model):
    base = PhysicsParams.nominal(model)
    out = apply_randomization(base, DomainRandSpec.off(), np.random.default_rng(0))
    assert out.gravity == base.gravity and out.friction == base.friction
    for name in ("link_masses", "kp", "kd"):
        assert getattr(out, name).tobytes() == getattr(base, name).tobytes()


def test_gravity_std_statistics(model):
    base = PhysicsParams.nominal(model)
    spec = replace(DomainRandSpec.off(), gravity=0.05)
    rng = np.random.default_rng(0)
    g = np.array([apply_randomization(base, spec, rng).gravity for _ in range(100_000)])
    assert abs(g.std() / (0.05 * base.gravity) - 1) < 0.03


def test_negative_mass_clamped(model):
    base = PhysicsParams.nominal(model)
    spec = replace(DomainRandSpec.off(), link_masses=50.0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = apply_randomization(base, spec, rng).link_masses
        assert np.all(m >= 0.01 * base.link_masses - 1e-15)
        assert np.all(m > 0)


def test_draw_order_independent_of_stds(model):
    base = PhysicsParams.nominal(model)
    a = apply_randomization(base, replace(DomainRandSpec.off(), friction=0.1), np.random.default_rng(5))
    b = apply_randomization(base, DomainRandSpec(), np.random.default_rng(5))
    assert a.friction == b.friction


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), std=st.floats(0, 3))
def test_randomized_params_always_valid(model, seed, std):
    base = PhysicsParams.nominal(model)
    spec = DomainRandSpec(std, std, std, std, std)
    apply_randomization(base, spec, np.random.default_rng(seed)).validate()


# --- checkpoint ------------------------------------------------------------


def _sample_ckpt():
    rng = np.random.default_rng(0)
    return Checkpoint(trainer={"actor": [rng.normal(size=(3, 4)), rng.normal(size=4)],
                               "rng": rng.bit_generator.state, "iteration": 7, "progress": 0.25,
                               "nan": np.array([np.nan, 1.0])},
                      config={"seed": 1}, config_hash="abc", stage_index=1, stage_iteration=3)


def test_checkpoint_roundtrip_bitwise(tmp_path):
    ck = _sample_ckpt()
    path = save_checkpoint(tmp_path / "a.ckpt", ck)
    back = load_checkpoint(path)
    for a, b in zip(ck.trainer["actor"], back.trainer["actor"]):
        assert a.tobytes() == b.tobytes() and a.dtype == b.dtype
    assert back.trainer["rng"] == ck.trainer["rng"]
    assert back.trainer["nan"].tobytes() == ck.trainer["nan"].tobytes()
    assert (back.stage_index, back.stage_iteration, back.iteration) == (1, 3, 7)
    assert encode_checkpoint(back) == encode_checkpoint(ck)


def test_truncated_checkpoint_is_corrupt():
    data = encode_checkpoint(_sample_ckpt())
    for cut in (10, len(data) // 2, len(data) - 1):
        with pytest.raises(CorruptFile):
            decode_checkpoint(data[:cut])


def test_flipped_byte_is_corrupt():
    data = bytearray(encode_checkpoint(_sample_ckpt()))
    data[len(data) // 2] ^= 0xFF
    with pytest.raises(CorruptFile):
        decode_checkpoint(bytes(data))


def test_version_mismatch():
    data = bytearray(encode_checkpoint(_sample_ckpt()))
    data[len(MAGIC)] = 99
    with pytest.raises(VersionMismatch):
        decode_checkpoint(bytes(data))


def test_config_hash_mismatch_warns():
    data = encode_checkpoint(_sample_ckpt())
    with pytest.warns(UserWarning):
        decode_checkpoint(data, expected_hash="different")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        decode_checkpoint(data, expected_hash="abc")


# --- curriculum ------------------------------------------------------------


def test_single_stage_iteration_count():
    cfg = load_config(TINY.split("[[stages]]")[0] + "[[stages]]\nname = 'only'\niterations = 3\n")
    res = run_curriculum(cfg)
    its = [r for r in res.records if r["type"] == "iteration"]
    assert len(its) == 3 and [r["iteration"] for r in its] == [1, 2, 3]


def test_stage_transition_records_and_totals():
    res = run_curriculum(load_config(TINY))
    types = [r["type"] for r in res.records]
    assert types.count("stage_start") == 2 and types.count("stage_end") == 2
    assert sum(s["iterations"] for s in res.stage_metrics) == types.count("iteration")


def test_stage_two_starts_from_stage_one_policy(model):
    cfg = load_config(TINY)
    res = run_curriculum(replace(cfg, stages=cfg.stages[:1]))
    trainer = build_trainer(cfg, 1, model)
    trainer.load_state_dict(res.checkpoint.trainer, policy_only=True)
    probe = np.random.default_rng(0).normal(size=(5, trainer.env.obs_dim))
    stage1 = build_trainer(cfg, 0, model)
    stage1.load_state_dict(res.checkpoint.trainer, policy_only=True)
    assert forward(trainer.actor, probe)[0].tobytes() == forward(stage1.actor, probe)[0].tobytes()


def test_return_threshold_stops_stage():
    cfg = load_config(TINY.replace('name = "free kick"\niterations = 2',
                                   'name = "free kick"\niterations = 50\nreturn_threshold = -1e9'))
    res = run_curriculum(cfg)
    assert res.stage_metrics[0]["reason"] == "return_threshold"
    assert res.stage_metrics[0]["iterations"] < 50


def test_metrics_log_bitwise_deterministic(tmp_path):
    cfg = load_config(TINY)
    run_curriculum(cfg, tmp_path / "a")
    run_curriculum(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert all("type" in json.loads(line) for line in a.decode().splitlines())


def test_resume_matches_unbroken_run(tmp_path):
    cfg = load_config(TINY)
    full = run_curriculum(cfg, tmp_path / "full")
    part = run_curriculum(cfg, tmp_path / "part", max_iterations=3)
    assert not part.finished
    rest = run_curriculum(cfg, tmp_path / "part", resume=tmp_path / "part" / "iter000003.ckpt")
    it = lambda recs: [r for r in recs if r["type"] == "iteration"]
    assert it(part.records) + it(rest.records) == it(full.records)
    assert encode_checkpoint(rest.checkpoint) == encode_checkpoint(full.checkpoint)


def test_training_error_tagged_with_stage(monkeypatch):
    from bezgym.rl.ppo import PpoTrainer

    def boom(self):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(PpoTrainer, "train_iteration", boom)
    with pytest.raises(FloatingPointError) as err:
        run_curriculum(load_config(TINY))
    assert err.value.stage == "free kick"
