"""Episode machinery: reset, observation assembly, action scaling, stepping and
termination.

Every function accepts either a single environment or a batch (leading axis on
all arrays); the vectorized runner in :mod:`bezgym.envs.vec` uses the batched
form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from bezgym.dynamics.model import RobotModel
from bezgym.dynamics.simulator import (
    CONTROL_DT, BatchPhysics, ContactParams, WorldState, imu_kinematics, make_world, step,
    torso_com_height,
)
from bezgym.envs.task import SensorConfig, TaskKind, TaskSpec
from bezgym.rewards import (
    ball_flight_angle, ball_velocity_forward_reward, bound_penalty, velocity_forward_reward,
)
from bezgym.sensors import ImuSample, drift_bias, foot_contacts, imu_read

ACTION_LIMIT = math.pi


@dataclass
class EpisodeState:
    """Everything an episode carries between steps besides the policy.

    ``world`` is the physical state; the rest is episode bookkeeping: the goal
    point on the ground (x, y), the IMU velocity from the previous step (for
    the finite-difference accelerometer), the accelerometer bias, the robot x
    at first ball contact (NaN before) and per-episode sensor noise scale.
    """

    world: WorldState
    goal: np.ndarray
    v_prev: np.ndarray
    imu_bias: np.ndarray
    contact_x: np.ndarray
    noise_scale: np.ndarray
    phys: BatchPhysics | None = None

    @property
    def batched(self) -> bool:
        return self.world.batched

    def copy(self) -> "EpisodeState":
        out = {f.name: np.array(getattr(self, f.name), copy=True)
               for f in fields(self) if f.name not in ("world", "phys")}
        phys = None if self.phys is None else BatchPhysics(
            **{f.name: getattr(self.phys, f.name).copy() for f in fields(BatchPhysics)})
        return EpisodeState(world=self.world.copy(), phys=phys, **out)

    def set_rows(self, mask, other: "EpisodeState") -> "EpisodeState":
        def pick(a, b):
            m = mask.reshape((-1,) + (1,) * (np.ndim(a) - 1))
            return np.where(m, b, a)
        out = {f.name: pick(getattr(self, f.name), getattr(other, f.name))
               for f in fields(self) if f.name not in ("world", "phys")}
        phys = self.phys
        if phys is not None and other.phys is not None:
            phys = BatchPhysics(**{f.name: pick(getattr(self.phys, f.name), getattr(other.phys, f.name))
                                   for f in fields(BatchPhysics)})
        return EpisodeState(world=self.world.set_rows(mask, other.world), phys=phys, **out)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: np.ndarray | float
    done: np.ndarray | bool
    info: dict


def scale_action(raw) -> np.ndarray:
    """Clip to [-1, 1] and map to joint targets in [-pi, pi]."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw action must be finite")
    return np.clip(raw, -1.0, 1.0) * ACTION_LIMIT


def sample_goal(task: TaskSpec, rng: np.random.Generator, start_x: float = 0.0) -> np.ndarray:
    """Ground-plane goal point for a new episode.

    The uniform sampler redraws any goal that would already count as reached.
    """
    if task.goal_sampler == "fixed":
        return np.array(task.goal_position, dtype=float)
    lo, hi = task.goal_interval
    while True:
        x = rng.uniform(lo, hi)
        if abs(x - start_x) > task.win_radius:
            return np.array([x, 0.0])


def robot_ground_position(world: WorldState) -> np.ndarray:
    x = world.base_pose[..., 0]
    return np.stack([x, np.zeros_like(x)], axis=-1)


def _ground(v2) -> np.ndarray:
    """(x, z) world vector to its (x, y) ground-plane projection."""
    v2 = np.asarray(v2, dtype=float)
    return np.stack([v2[..., 0], np.zeros_like(v2[..., 0])], axis=-1)


def quantize(q, resolution) -> np.ndarray:
    return np.round(np.asarray(q) / resolution) * resolution


def build_observation(world: WorldState, task: TaskSpec, model: RobotModel, imu: ImuSample,
                      contacts, goal=None, sensors: SensorConfig | None = None) -> np.ndarray:
    """Concatenate the observation blocks in the fixed layout order."""
    sensors = sensors or SensorConfig(noise=False, quantize_joint_positions=False)
    goal = np.asarray(task.goal_position if goal is None else goal, dtype=float)
    q = world.q
    if sensors.quantize_joint_positions:
        q = quantize(q, model.motor_arrays()["position_resolution"])
    robot = robot_ground_position(world)
    offset = goal - robot
    dist = np.linalg.norm(offset, axis=-1)
    goal_dir = np.where(dist > 1e-6, offset[..., 0] / np.where(dist > 1e-6, dist, 1.0), 0.0)
    parts = [q, world.qd, np.asarray(imu.angular_velocity, dtype=float)[..., None],
             np.asarray(imu.linear_velocity, dtype=float), goal_dir[..., None]]
    if task.kind is TaskKind.KICK:
        parts.append((world.ball_pos[..., 0] - world.base_pose[..., 0])[..., None])
    if task.include_feet_contacts:
        parts.append(np.asarray(contacts, dtype=float))
    return np.concatenate(parts, axis=-1)


def check_termination(world: WorldState, task: TaskSpec, model: RobotModel, goal=None):
    """(done, fell, timeout).  Walk episodes also end when the robot reaches the goal."""
    height = torso_com_height(model, world)
    fell = height < task.termination_height
    timeout = world.steps >= task.max_steps
    complete = np.zeros_like(fell)
    if task.kind is TaskKind.WALK:
        goal = np.asarray(task.goal_position if goal is None else goal, dtype=float)
        dist = np.linalg.norm(goal - robot_ground_position(world), axis=-1)
        complete = dist <= task.win_radius
    done = fell | timeout | complete
    if np.ndim(done) == 0:
        return bool(done), bool(fell), bool(timeout)
    return done, fell, timeout


def _sense(state: EpisodeState, world: WorldState, task: TaskSpec, model: RobotModel,
           sensors: SensorConfig, rng: np.random.Generator, dt: float):
    v, omega = imu_kinematics(model, world)
    imu = imu_read(v, state.v_prev, omega, dt, sensors.effective_imu(), rng,
                   bias=state.imu_bias, noise_scale=state.noise_scale)
    contacts = foot_contacts(world, model, task.contact_threshold)
    return imu, contacts


def reset(task: TaskSpec, model: RobotModel, rng: np.random.Generator,
          sensors: SensorConfig | None = None, noise_scale: float = 1.0,
          phys: BatchPhysics | None = None) -> tuple[EpisodeState, np.ndarray]:
    """Start an episode: ready pose at the origin, ball ahead for kicking, goal drawn."""
    sensors = sensors or SensorConfig()
    ball = (10.0, 0.07)
    if task.ball_start is not None:
        ball = (task.ball_start[0], 0.07)
    world = make_world(model, ball_pos=ball)
    goal = sample_goal(task, rng, start_x=0.0)
    state = EpisodeState(
        world=world, goal=goal, v_prev=np.zeros(2), imu_bias=np.zeros(2),
        contact_x=np.array(np.nan), noise_scale=np.array(float(noise_scale)), phys=phys,
    )
    imu, contacts = _sense(state, world, task, model, sensors, rng, CONTROL_DT)
    state.v_prev = imu.linear_velocity
    return state, build_observation(world, task, model, imu, contacts, goal, sensors)


def batch_states(states: list[EpisodeState]) -> EpisodeState:
    """Stack single-environment states (each ``phys`` must have a batch of one)."""
    phys = None
    if all(s.phys is not None for s in states):
        phys = BatchPhysics(**{f.name: np.concatenate([getattr(s.phys, f.name) for s in states])
                               for f in fields(BatchPhysics)})
    return EpisodeState(
        world=WorldState.stack([s.world for s in states]),
        goal=np.stack([s.goal for s in states]),
        v_prev=np.stack([s.v_prev for s in states]),
        imu_bias=np.stack([s.imu_bias for s in states]),
        contact_x=np.stack([s.contact_x for s in states]),
        noise_scale=np.stack([s.noise_scale for s in states]),
        phys=phys,
    )


def task_reward(world: WorldState, prev: WorldState, state: EpisodeState, task: TaskSpec,
                imu_velocity, progress: float, complete):
    """Per-step task reward and its raw terms (true, pre-noise state)."""
    w = task.weights
    robot = robot_ground_position(world)
    robot_v = _ground(imu_velocity)
    terms = {}
    if task.kind is TaskKind.KICK:
        ball = _ground(world.ball_pos)
        approach = velocity_forward_reward(robot, ball, robot_v)
        ball_term = ball_velocity_forward_reward(ball, state.goal, _ground(world.ball_vel))
        goal_sign = np.sign(state.goal[..., 0] - world.ball_pos[..., 0])
        angle = ball_flight_angle(world.ball_vel, np.where(goal_sign == 0, 1.0, goal_sign))
        drift = np.where(np.isnan(state.contact_x), 0.0,
                         np.abs(world.base_pose[..., 0] - np.nan_to_num(state.contact_x)))
        pen_angle = bound_penalty(angle, task.ball_angle_bound, progress, w.w_bound_penalty)
        pen_drift = bound_penalty(drift, task.drift_bound, progress, w.w_bound_penalty)
        reward = (w.w_velocity_forward * np.asarray(approach)
                  + w.w_ball_velocity_forward * np.asarray(ball_term) - pen_angle - pen_drift)
        terms.update(approach=approach, ball_velocity=ball_term, angle_penalty=pen_angle,
                     drift_penalty=pen_drift)
    elif task.kind is TaskKind.WALK:
        forward = velocity_forward_reward(robot, state.goal, robot_v)
        remaining = task.max_steps - world.steps
        bonus = np.where(complete, w.win_bonus_scale * remaining, 0.0)
        reward = w.w_velocity_forward * np.asarray(forward) + bonus
        terms.update(velocity_forward=forward, win_bonus=bonus)
    else:
        # jumping is driven by the style reward alone
        reward = np.zeros_like(world.time, dtype=float)
    return np.asarray(reward, dtype=float), terms


BALL_MOVING = 0.05  # m/s; first step the ball exceeds this counts as first contact


def env_step(state: EpisodeState, task: TaskSpec, model: RobotModel, action,
             rng: np.random.Generator, *, sensors: SensorConfig | None = None,
             params: ContactParams = ContactParams(), progress: float = 1.0,
             dt: float = CONTROL_DT) -> tuple[EpisodeState, StepResult]:
    """Apply joint targets for one control step and score the outcome.

    On a fall the step's task reward is replaced by ``-fall_penalty``.
    """
    sensors = sensors or SensorConfig()
    action = np.asarray(action, dtype=float)
    if np.any(np.abs(action) > ACTION_LIMIT + 1e-12) or not np.all(np.isfinite(action)):
        raise ValueError("action entries must be finite and within [-pi, pi]")
    prev = state.world
    world = step(prev, model, action, params, dt=dt, phys=state.phys)

    contact_x = state.contact_x
    if task.kind is TaskKind.KICK:
        moving = np.linalg.norm(world.ball_vel, axis=-1) > BALL_MOVING
        contact_x = np.where(np.isnan(contact_x) & moving, world.base_pose[..., 0], contact_x)

    imu, contacts = _sense(state, world, task, model, sensors, rng, dt)
    bias = drift_bias(state.imu_bias, sensors.effective_imu(), dt, rng)
    new_state = replace(state, world=world, v_prev=imu.linear_velocity, imu_bias=bias,
                        contact_x=np.asarray(contact_x, dtype=float))

    done, fell, timeout = check_termination(world, task, model, state.goal)
    complete = np.asarray(done) & ~np.asarray(fell) & ~np.asarray(timeout)
    v_true, _ = imu_kinematics(model, world)
    reward, terms = task_reward(world, prev, new_state, task, v_true, progress, complete)
    reward = np.where(fell, -task.weights.fall_penalty, reward)
    obs = build_observation(world, task, model, imu, contacts, state.goal, sensors)
    info = {"fell": fell, "timeout": timeout, "complete": complete, "terms": terms,
            "contacts": contacts}
    if np.ndim(reward) == 0:
        reward = float(reward)
        complete = bool(complete)
        info["complete"] = complete
    return new_state, StepResult(observation=obs, reward=reward, done=done, info=info)
