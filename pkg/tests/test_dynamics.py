import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bezgym.dynamics import (
    AX12, MX28, CONTROL_DT, ContactParams, build_canonical_model, com_position, contact_force,
    make_world, model_from_dict, pd_torque, step, torso_com_height, total_energy,
)
from bezgym.dynamics.simulator import WorldState
from bezgym.errors import NumericalDivergence, ValidationError


@pytest.fixture(scope="module")
def model():
    return build_canonical_model()


def test_canonical_model_shape(model):
    assert model.N == 9
    assert model.total_mass == pytest.approx(2.3, abs=1e-9)
    assert model.ready_pose[0] == 0.564
    assert model.ready_pose[1] == -1.176
    assert model.ready_pose[2] == 0.613
    assert model.ready_pose[6] == 1.5
    for pts in model.foot_contact_points.values():
        assert len(pts) == 2
    for j in model.joints[:6]:
        assert j.motor.stall_torque == 2.5
    for j in model.joints[6:]:
        assert j.motor.stall_torque == 1.5


def test_canonical_model_height(model):
    from bezgym.dynamics import point_positions
    w = make_world(model)
    head_top = point_positions(model, w, model.head_link_id, [0.0, model.links[model.head_link_id].length])
    assert head_top[1] == pytest.approx(0.50, abs=0.01)


def test_motor_table_values():
    assert MX28.no_load_speed == pytest.approx(55 * 2 * math.pi / 60)
    assert AX12.no_load_speed == pytest.approx(59 * 2 * math.pi / 60)
    assert math.degrees(MX28.position_resolution) == pytest.approx(0.33)


def test_pd_torque_examples():
    assert pd_torque(MX28, 0.0, 0.0, 0.0) == 0.0
    assert pd_torque(MX28, 0.0, 0.0, math.pi) == 2.5
    # no-load speed in the demanded direction leaves nothing to give
    assert pd_torque(MX28, 0.0, MX28.no_load_speed, math.pi) == pytest.approx(0.0, abs=1e-12)
    # moving against the demand: full stall torque is still available
    assert pd_torque(MX28, 0.0, -MX28.no_load_speed, math.pi) == 2.5


def test_torque_speed_curve_midpoint():
    # kp * pi far exceeds stall: half the no-load speed leaves half the stall torque
    assert pd_torque(MX28, 0.0, 0.5 * MX28.no_load_speed, math.pi) == pytest.approx(1.25)


@given(q=st.floats(-3, 3), qd=st.floats(-20, 20), target=st.floats(-3, 3))
def test_pd_torque_bounded(q, qd, target):
    assert abs(pd_torque(MX28, q, qd, target)) <= MX28.stall_torque


def test_contact_force_examples():
    p = ContactParams(kn=1e4, mu=0.8)
    np.testing.assert_array_equal(contact_force(0.0, 0.3, 1.0, p), [0.0, 0.0])
    assert contact_force(0.001, 0.0, 0.0, p)[1] == pytest.approx(10.0)
    ft, fn = contact_force(0.001, 0.0, 5.0, p)
    assert fn == pytest.approx(10.0)
    assert abs(ft) == pytest.approx(8.0)
    assert ft < 0
    # separating fast enough: no pulling force
    assert contact_force(0.001, 1.0, 0.0, p)[1] == 0.0


def test_ballistic_ball_drop(model):
    w = make_world(model, ball_pos=(0.0, 5.0))
    w.ball_vel = np.array([0.4, 0.0])
    for _ in range(60):
        w = step(w, model, model.ready_pose, simulate_robot=False)
    assert w.time == pytest.approx(0.5)
    assert w.ball_pos[1] - 5.0 == pytest.approx(-0.5 * 9.81 * 0.25, abs=1e-3)
    assert w.ball_pos[0] == pytest.approx(0.2, abs=1e-9)


def test_ballistic_robot_com_parabola(model):
    w = make_world(model, base_pose=(0.0, 3.0, 0.0))
    w.base_vel = np.array([0.5, 1.0, 0.0])
    c0 = com_position(model, w)
    from bezgym.dynamics import com_velocity
    v0 = com_velocity(model, w)
    worst = 0.0
    for k in range(1, 61):
        w = step(w, model, model.ready_pose)
        t = k * CONTROL_DT
        expected = c0 + v0 * t + 0.5 * np.array([0.0, -9.81]) * t * t
        worst = max(worst, np.abs(com_position(model, w) - expected).max())
    assert worst < 1e-3


def _pendulum_model():
    cfg = {
        "robot": {"torso": "base", "ready_pose": [0.0]},
        "motors": {"M": {"stall_torque": 1.0, "no_load_speed_rpm": 60, "position_resolution_deg": 0.3}},
        "links": [
            {"name": "base", "mass": 1.0, "length": 0.1, "com_offset": 0.05, "width": 0.1, "axis": -1},
            {"name": "rod", "mass": 0.2, "length": 0.2, "com_offset": 0.1, "width": 0.02},
        ],
        "joints": [{"name": "pivot", "parent": "base", "child": "rod", "anchor": 0.0,
                    "limits": [-3.1, 3.1], "motor": "M"}],
        "contact_points": {},
    }
    return model_from_dict(cfg)


def test_passive_pendulum_energy():
    pend = _pendulum_model()
    theta0 = 1.0
    w = make_world(pend, q=[theta0], base_pose=(0.0, 1.0, 0.0))
    rod = pend.links[1]
    swing = rod.mass * 9.81 * rod.com_offset * (1 - math.cos(theta0))
    e0 = total_energy(pend, w)
    worst = 0.0
    for _ in range(240):
        w = step(w, pend, [0.0], fixed_base=True, passive=True)
        worst = max(worst, abs(total_energy(pend, w) - e0))
    assert np.all(w.base_pose == (0.0, 1.0, 0.0))
    assert worst / swing < 0.01


def test_standing_ready_pose_is_stable(model):
    w = make_world(model)
    h0 = torso_com_height(model, w)
    worst = 0.0
    for _ in range(120):
        w = step(w, model, model.ready_pose)
        worst = max(worst, abs(torso_com_height(model, w) - h0))
    assert worst < 5e-3


def test_joint_limit_clamp(model):
    w = make_world(model, base_pose=(0.0, 2.0, 0.0))
    lo, hi = model.limits
    targets = model.ready_pose.copy()
    targets[1] = hi[1] + 1.0  # knee past its 0.2 rad stop
    for _ in range(120):
        w = step(w, model, targets)
        assert np.all(w.q <= hi) and np.all(w.q >= lo)
    assert w.q[1] == pytest.approx(hi[1])


def test_applied_torque_within_stall(model):
    rng = np.random.default_rng(3)
    w = make_world(model, batch=16)
    stall = model.motor_arrays()["stall_torque"]
    for _ in range(60):
        targets = model.ready_pose + rng.uniform(-2, 2, size=(16, 9))
        w = step(w, model, targets)
        assert np.all(np.abs(w.torque) <= stall * (1 + 1e-9))


def test_step_is_deterministic(model):
    rng = np.random.default_rng(0)
    targets = model.ready_pose + 0.3 * rng.standard_normal(9)
    a = step(make_world(model), model, targets)
    b = step(make_world(model), model, targets)
    for name in ("base_pose", "base_vel", "q", "qd", "ball_pos", "ball_vel"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_step_does_not_mutate_input(model):
    w = make_world(model)
    before = w.copy()
    step(w, model, model.ready_pose + 0.2)
    np.testing.assert_array_equal(w.q, before.q)
    np.testing.assert_array_equal(w.base_pose, before.base_pose)


def test_sim_time_tracks_step_counter(model):
    w = make_world(model)
    for _ in range(7):
        w = step(w, model, model.ready_pose)
    assert w.steps == 7
    assert w.time == 7 * CONTROL_DT


def test_batched_matches_single(model):
    rng = np.random.default_rng(1)
    targets = model.ready_pose + 0.2 * rng.standard_normal((3, 9))
    wb = make_world(model, batch=3)
    wb = step(wb, model, targets)
    for i in range(3):
        ws = step(make_world(model), model, targets[i])
        np.testing.assert_allclose(wb.q[i], ws.q, atol=1e-12)


def test_divergence_is_reported(model):
    w = make_world(model)
    w.qd = w.qd.copy()
    w.qd[0] = np.nan
    with pytest.raises(NumericalDivergence):
        step(w, model, model.ready_pose)


def test_ball_bounces_off_shank(model):
    w = make_world(model, ball_pos=(0.3, 0.07))
    w.ball_vel = np.array([-1.0, 0.0])
    for _ in range(60):
        w = step(w, model, model.ready_pose)
    assert w.ball_vel[0] > 0  # rebounded forward


def test_model_validation():
    with pytest.raises(ValidationError):
        from bezgym.dynamics import LinkSpec
        LinkSpec("x", mass=0.0, length=1.0, com_offset=0.5, inertia=1.0)
    from bezgym.dynamics.model import CANONICAL_MODEL_TOML
    from bezgym.config import load_toml
    cfg = load_toml(text=CANONICAL_MODEL_TOML)
    cfg["robot"]["ready_pose"][1] = 1.0  # knee beyond its 0.2 rad limit
    with pytest.raises(ValidationError):
        model_from_dict(cfg)


def test_model_roundtrips_through_config_file(tmp_path, model):
    from bezgym.dynamics import load_model
    from bezgym.dynamics.model import CANONICAL_MODEL_TOML
    path = tmp_path / "robot.toml"
    path.write_text(CANONICAL_MODEL_TOML)
    loaded = load_model(path)
    assert loaded.links == model.links
    assert loaded.joints == model.joints
