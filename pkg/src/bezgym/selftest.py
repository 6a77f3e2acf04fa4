"""Quick oracle checks of the physics, advantage estimator and sensor noise.

Each check returns a :class:`Check` holding the measured value and its
threshold; ``run_selftest`` runs them all (a few seconds).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bezgym.dynamics import (
    CONTROL_DT, build_canonical_model, com_position, com_velocity, make_world, model_from_dict, step,
    torso_com_height, total_energy,
)
from bezgym.rl.gae import compute_gae
from bezgym.rl.ppo import ppo_surrogate
from bezgym.sensors import ImuNoiseSpec, imu_read

GRAVITY = 9.81


@dataclass
class Check:
    name: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.value < self.threshold)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3g} (limit {self.threshold:g})"


def ballistic_deviation(model=None, seconds: float = 0.5) -> float:
    """Largest gap between the free-flying COM and the analytic parabola, m."""
    model = model or build_canonical_model()
    w = make_world(model, base_pose=(0.0, 3.0, 0.0))
    w.base_vel = np.array([0.5, 1.0, 0.0])
    c0, v0 = com_position(model, w), com_velocity(model, w)
    worst = 0.0
    for k in range(1, int(round(seconds / CONTROL_DT)) + 1):
        w = step(w, model, model.ready_pose)
        t = k * CONTROL_DT
        expected = c0 + v0 * t + 0.5 * np.array([0.0, -GRAVITY]) * t * t
        worst = max(worst, float(np.abs(com_position(model, w) - expected).max()))
    return worst


def pendulum_model():
    """A single passive rod hinged to a fixed base."""
    return model_from_dict({
        "robot": {"torso": "base", "ready_pose": [0.0]},
        "motors": {"M": {"stall_torque": 1.0, "no_load_speed_rpm": 60, "position_resolution_deg": 0.3}},
        "links": [
            {"name": "base", "mass": 1.0, "length": 0.1, "com_offset": 0.05, "width": 0.1, "axis": -1},
            {"name": "rod", "mass": 0.2, "length": 0.2, "com_offset": 0.1, "width": 0.02},
        ],
        "joints": [{"name": "pivot", "parent": "base", "child": "rod", "anchor": 0.0,
                    "limits": [-3.1, 3.1], "motor": "M"}],
        "contact_points": {},
    })


def pendulum_energy_drift(seconds: float = 2.0, theta0: float = 1.0) -> float:
    """Worst energy error of a passive pendulum relative to its swing energy."""
    pend = pendulum_model()
    w = make_world(pend, q=[theta0], base_pose=(0.0, 1.0, 0.0))
    rod = pend.links[1]
    swing = rod.mass * GRAVITY * rod.com_offset * (1 - math.cos(theta0))
    e0 = total_energy(pend, w)
    worst = 0.0
    for _ in range(int(round(seconds / CONTROL_DT))):
        w = step(w, pend, [0.0], fixed_base=True, passive=True)
        worst = max(worst, abs(total_energy(pend, w) - e0))
    return worst / swing


def standing_drift(model=None, seconds: float = 1.0) -> float:
    """Largest torso-COM height change while holding the ready pose, m."""
    model = model or build_canonical_model()
    w = make_world(model)
    h0 = torso_com_height(model, w)
    worst = 0.0
    for _ in range(int(round(seconds / CONTROL_DT))):
        w = step(w, model, model.ready_pose)
        worst = max(worst, abs(float(torso_com_height(model, w)) - h0))
    return worst


def brute_force_advantages(r, v, d, boot, gamma, lam):
    """Explicit discounted sum of TD errors, cut at episode ends."""
    T = len(r)
    nxt = np.append(v[1:], boot)
    delta = [r[t] + gamma * nxt[t] * (1 - d[t]) - v[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total, w = 0.0, 1.0
        for k in range(t, T):
            total += w * delta[k]
            if d[k]:
                break
            w *= gamma * lam
        adv[t] = total
    return adv


def gae_oracle_error(n: int = 1000, seed: int = 0, max_len: int = 64) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        T = int(rng.integers(1, max_len + 1))
        r, v = rng.normal(size=T), rng.normal(size=T)
        d = rng.random(T) < 0.1
        boot = rng.normal()
        gamma, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
        adv, _ = compute_gae(r, v, d, boot, gamma, lam)
        worst = max(worst, float(np.abs(adv - brute_force_advantages(r, v, d, boot, gamma, lam)).max()))
    return worst


def imu_sigma_errors(n: int = 1_000_000, seed: int = 0, spec: ImuNoiseSpec = ImuNoiseSpec()):
    """Relative error of the empirical noise std per channel (accel x, accel z, gyro)."""
    rng = np.random.default_rng(seed)
    zeros = np.zeros((n, 2))
    s = imu_read(zeros, zeros, np.zeros(n), CONTROL_DT, spec, rng)
    accel = s.linear_acceleration - np.array([0.0, GRAVITY if spec.include_gravity else 0.0])
    out = {}
    for name, x, sigma in (("accel_x", accel[:, 0], spec.accel_sigma), ("accel_z", accel[:, 1], spec.accel_sigma),
                           ("gyro", s.angular_velocity, spec.gyro_sigma)):
        out[name] = abs(float(np.std(x)) / sigma - 1.0)
    return out


def surrogate_examples_error() -> float:
    got = (ppo_surrogate(0.3, 0.3, 1.7, 0.2), ppo_surrogate(math.log(2.0), 0.0, 1.0, 0.2),
           ppo_surrogate(math.log(0.5), 0.0, -1.0, 0.2))
    return float(max(abs(a - b) for a, b in zip(got, (1.7, 1.2, -0.8))))


def run_selftest(imu_samples: int = 1_000_000) -> list[Check]:
    model = build_canonical_model()
    checks = [
        Check("ballistic COM deviation over 0.5 s [m]", ballistic_deviation(model), 1e-3),
        Check("passive pendulum energy drift over 2 s [fraction]", pendulum_energy_drift(), 0.01),
        Check("standing torso drift over 1 s [m]", standing_drift(model), 5e-3),
        Check("GAE vs brute force, 1000 sequences [max abs]", gae_oracle_error(), 1e-10),
        Check("PPO clip examples [max abs]", surrogate_examples_error(), 1e-12),
    ]
    for name, err in imu_sigma_errors(imu_samples).items():
        checks.append(Check(f"IMU {name} sigma, {imu_samples} samples [rel error]", err, 0.03))
    return checks
