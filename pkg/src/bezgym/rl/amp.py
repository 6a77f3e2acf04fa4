"""Adversarial motion priors: transition features, reference clips, a
least-squares discriminator and the style reward derived from it."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bezgym.dynamics.model import RobotModel
from bezgym.dynamics.simulator import WorldState, standing_pelvis_height
from bezgym.errors import ParseError, ValidationError
from bezgym.network import (
    MlpParams, add_grads, backward, forward, input_gradient_penalty, mlp_init,
)
from bezgym.rl.optim import Adam

GRAVITY = 9.81


@dataclass(frozen=True)
class AmpConfig:
    hidden: tuple[int, ...] = (256, 128)
    learning_rate: float = 1e-4
    gp_coef: float = 10.0
    w_task: float = 0.5
    w_style: float = 0.5
    replay_size: int = 100_000
    batch_size: int = 512
    updates_per_iteration: int = 10
    features: str = "q,qd,height,base_vel,pitch"

    def __post_init__(self):
        if self.w_task < 0 or self.w_style < 0:
            raise ValueError("AMP blend weights must be non-negative")
        if self.w_task + self.w_style <= 0:
            raise ValueError("AMP blend weights must not both be zero")
        if self.gp_coef < 0 or self.learning_rate < 0:
            raise ValueError("gp_coef and learning_rate must be non-negative")


def feature_size(n_joints: int) -> int:
    return 2 * n_joints + 4


def amp_features_from(q_prev, q, base_prev, base, dt: float) -> np.ndarray:
    """Transition features from joint angles and (x, z, pitch) base poses.

    Layout: joint angles, joint velocities, pelvis height, pelvis (x, z)
    velocity, torso pitch.  Velocities are finite differences over ``dt``.
    """
    q_prev, q = np.asarray(q_prev, dtype=float), np.asarray(q, dtype=float)
    base_prev, base = np.asarray(base_prev, dtype=float), np.asarray(base, dtype=float)
    qd = (q - q_prev) / dt
    vel = (base[..., :2] - base_prev[..., :2]) / dt
    return np.concatenate([q, qd, base[..., 1:2], vel, base[..., 2:3]], axis=-1)


def amp_features(prev_state: WorldState, state: WorldState, model: RobotModel | None = None,
                 dt: float | None = None) -> np.ndarray:
    """Features of the simulated transition ``prev_state -> state``."""
    if dt is None:
        dt = float(np.ravel(state.time - prev_state.time)[0]) or 1.0 / 120.0
    return amp_features_from(prev_state.q, state.q, prev_state.base_pose, state.base_pose, dt)


# ---------------------------------------------------------------------------
# reference motion clips


@dataclass
class MotionClip:
    dt: float
    joints: tuple[str, ...]
    frames: np.ndarray  # (T, N + 1): joint angles then pelvis height

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.dt <= 0:
            raise ValidationError("clip dt must be positive", key="dt")
        if self.frames.ndim != 2 or self.frames.shape[0] < 2:
            raise ValidationError("a motion clip needs at least two frames", key="frames")
        if self.frames.shape[1] != len(self.joints) + 1:
            raise ValidationError("each frame needs one angle per joint plus the base height", key="frames")

    def check_model(self, model: RobotModel):
        if tuple(self.joints) != tuple(model.joint_names):
            raise ValidationError(f"clip joint order {list(self.joints)} does not match the robot's "
                                  f"{model.joint_names}", key="joints")

    def features(self) -> np.ndarray:
        """Transition features for every consecutive frame pair (upright torso, no drift)."""
        q = self.frames[:, :-1]
        base = np.zeros((len(self.frames), 3))
        base[:, 1] = self.frames[:, -1]
        return amp_features_from(q[:-1], q[1:], base[:-1], base[1:], self.dt)

    def to_text(self) -> str:
        lines = [f"dt={self.dt!r}", "joints=" + ",".join(self.joints)]
        lines.extend(" ".join(repr(float(v)) for v in row) for row in self.frames)
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())


def parse_motion_clip(text: str) -> MotionClip:
    dt, joints, rows = None, None, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("dt="):
            try:
                dt = float(line[3:])
            except ValueError as exc:
                raise ParseError(f"bad dt value {line[3:]!r}", lineno) from exc
        elif line.startswith("joints="):
            joints = tuple(j.strip() for j in line[7:].split(",") if j.strip())
        else:
            if dt is None or joints is None:
                raise ParseError("frame rows must follow the dt= and joints= headers", lineno)
            try:
                row = [float(v) for v in line.split()]
            except ValueError as exc:
                raise ParseError(f"non-numeric frame entry in {line!r}", lineno) from exc
            if len(row) != len(joints) + 1:
                raise ParseError(f"expected {len(joints) + 1} values, found {len(row)}", lineno)
            rows.append(row)
    if dt is None or joints is None:
        raise ParseError("missing dt= or joints= header", 1)
    return MotionClip(dt=dt, joints=joints, frames=np.array(rows).reshape(-1, len(joints) + 1))


def load_motion_clip(path, model: RobotModel | None = None) -> MotionClip:
    clip = parse_motion_clip(Path(path).read_text())
    if model is not None:
        clip.check_model(model)
    return clip


def _flat_foot_pose(model: RobotModel, hip: float, knee: float, arm: float) -> np.ndarray:
    q = model.ready_pose.copy()
    ankle = -(hip + knee)  # keeps the sole parallel to the ground with an upright torso
    q[[0, 3]] = hip
    q[[1, 4]] = knee
    q[[2, 5]] = ankle
    q[[6, 7]] = arm
    return q


def procedural_jump_clip(model: RobotModel, dt: float = 1.0 / 30.0, flight_time: float = 0.3,
                         hops: int = 1) -> MotionClip:
    """Keyframed crouch, extend, flight and landing, repeated ``hops`` times.

    Ground phases place the pelvis so the feet rest on the ground; the flight
    phase follows a ballistic pelvis arc whose take-off speed matches
    ``flight_time``.
    """
    ready = model.ready_pose
    crouch = _flat_foot_pose(model, 0.95, -1.9, 1.0)
    extend = _flat_foot_pose(model, 0.12, -0.25, 0.3)
    tuck = _flat_foot_pose(model, 0.45, -0.9, 0.6)

    def blend(a, b, n):
        s = 0.5 - 0.5 * np.cos(np.linspace(0.0, np.pi, n, endpoint=False))
        return a[None] + s[:, None] * (b - a)[None]

    def grounded(qs):
        return np.array([standing_pelvis_height(model, q) for q in qs])

    q_parts, h_parts = [], []

    def add_ground(a, b, duration):
        n = max(2, int(round(duration / dt)))
        qs = blend(a, b, n)
        q_parts.append(qs)
        h_parts.append(grounded(qs))

    add_ground(ready, ready, 0.2)
    for _ in range(hops):
        add_ground(ready, crouch, 0.3)
        add_ground(crouch, extend, 0.15)
        n_air = max(2, int(round(flight_time / dt)))
        t = np.arange(n_air) * dt
        v0 = 0.5 * GRAVITY * flight_time
        h0 = standing_pelvis_height(model, extend)
        half = n_air // 2
        q_air = np.concatenate([blend(extend, tuck, half), blend(tuck, extend, n_air - half)])
        q_parts.append(q_air)
        h_parts.append(h0 + v0 * t - 0.5 * GRAVITY * t * t)
        add_ground(extend, crouch, 0.15)
        add_ground(crouch, ready, 0.3)
    q_parts.append(ready[None])
    h_parts.append(grounded(ready[None]))
    frames = np.concatenate([np.concatenate(q_parts), np.concatenate(h_parts)[:, None]], axis=1)
    return MotionClip(dt=dt, joints=tuple(model.joint_names), frames=frames)


# ---------------------------------------------------------------------------
# discriminator


def style_reward(d):
    """Bounded style reward from a least-squares discriminator score."""
    d = np.asarray(d, dtype=float)
    out = np.maximum(0.0, 1.0 - 0.25 * (d - 1.0) ** 2)
    return float(out) if out.ndim == 0 else out


def discriminator_init(n_features: int, rng: np.random.Generator, config: AmpConfig = AmpConfig(),
                       dtype=np.float64) -> MlpParams:
    return mlp_init(n_features, 1, rng, hidden=config.hidden, dtype=dtype)


def discriminator_loss_and_grads(disc: MlpParams, real, fake, gp_coef: float):
    """Least-squares loss (real -> +1, fake -> -1) plus a gradient penalty on real samples."""
    real = np.asarray(real, dtype=disc.weights[0].dtype)
    fake = np.asarray(fake, dtype=disc.weights[0].dtype)
    d_real, c_real = forward(disc, real)
    d_fake, c_fake = forward(disc, fake)
    n_r, n_f = len(real), len(fake)
    loss_real = float(np.mean((d_real - 1.0) ** 2))
    loss_fake = float(np.mean((d_fake + 1.0) ** 2))
    g_real = backward(disc, c_real, (d_real - 1.0) / n_r)
    g_fake = backward(disc, c_fake, (d_fake + 1.0) / n_f)
    grads = add_grads(g_real, g_fake)
    penalty = 0.0
    if gp_coef > 0:
        penalty, g_pen, _ = input_gradient_penalty(disc, c_real, 0.5 * gp_coef)
        grads = add_grads(grads, g_pen)
    loss = 0.5 * (loss_real + loss_fake) + penalty
    acc = 0.5 * (float(np.mean(d_real[:, 0] > 0)) + float(np.mean(d_fake[:, 0] < 0)))
    return loss, grads, {"disc_loss": loss, "disc_loss_real": loss_real, "disc_loss_fake": loss_fake,
                         "grad_penalty": penalty, "disc_accuracy": acc}


def discriminator_step(disc: MlpParams, optimizer: Adam, real, fake, config: AmpConfig = AmpConfig()):
    """One optimizer step on the discriminator (in place); returns the loss dict."""
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("discriminator batches must be non-empty")
    _, grads, stats = discriminator_loss_and_grads(disc, real, fake, config.gp_coef)
    optimizer.step(disc.arrays(), grads.arrays())
    return disc, stats


STD_FLOOR = 0.1


class AmpModule:
    """Discriminator, its optimizer, reference features and a replay of policy features."""

    def __init__(self, reference_features, config: AmpConfig, rng: np.random.Generator,
                 dtype=np.float64):
        ref = np.asarray(reference_features, dtype=float)
        self.config = config
        self.reference = ref
        self.mean = ref.mean(axis=0)
        # floor keeps dims the clip never varies (e.g. pitch) from dominating
        self.std = np.maximum(ref.std(axis=0), STD_FLOOR)
        self.disc = discriminator_init(ref.shape[1], rng, config, dtype)
        self.optimizer = Adam(self.disc.arrays(), lr=config.learning_rate)
        self.replay = np.zeros((0, ref.shape[1]))
        self._cursor = 0

    def normalize(self, feats):
        return (np.asarray(feats, dtype=float) - self.mean) / self.std

    def score(self, feats) -> np.ndarray:
        d, _ = forward(self.disc, self.normalize(feats).reshape(-1, self.reference.shape[1]))
        return d[:, 0].reshape(np.shape(feats)[:-1])

    def reward(self, feats) -> np.ndarray:
        return style_reward(self.score(feats))

    def add_policy_features(self, feats):
        feats = np.asarray(feats, dtype=float).reshape(-1, self.reference.shape[1])
        cap = self.config.replay_size
        if len(self.replay) < cap:
            take = min(cap - len(self.replay), len(feats))
            self.replay = np.concatenate([self.replay, feats[:take]])
            feats = feats[take:]
        if len(feats):
            feats = feats[-cap:]
            idx = (self._cursor + np.arange(len(feats))) % cap
            self.replay[idx] = feats
            self._cursor = int((self._cursor + len(feats)) % cap)

    def update(self, rng: np.random.Generator, recent=None) -> dict:
        """Several discriminator steps on reference vs. policy (recent + replay) batches."""
        cfg = self.config
        pool = self.replay if recent is None else np.concatenate([np.asarray(recent).reshape(
            -1, self.reference.shape[1]), self.replay])
        if len(pool) == 0:
            return {}
        history = []
        for _ in range(cfg.updates_per_iteration):
            ri = rng.integers(0, len(self.reference), cfg.batch_size)
            fi = rng.integers(0, len(pool), cfg.batch_size)
            _, stats = discriminator_step(self.disc, self.optimizer, self.normalize(self.reference[ri]),
                                          self.normalize(pool[fi]), cfg)
            history.append(stats)
        return {k: float(np.mean([h[k] for h in history])) for k in history[0]}

    def state_dict(self) -> dict:
        return {"disc": self.disc.arrays(), "optimizer": self.optimizer.state_dict(),
                "replay": self.replay.copy(), "cursor": self._cursor}

    def load_state_dict(self, d: dict):
        for a, b in zip(self.disc.arrays(), d["disc"]):
            a[...] = b
        self.optimizer.load_state_dict(d["optimizer"])
        self.replay = np.array(d["replay"])
        self._cursor = int(d["cursor"])
