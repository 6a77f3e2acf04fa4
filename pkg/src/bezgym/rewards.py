"""Task rewards for kicking and walking, plus curriculum bound penalties.

Positions and velocities passed to the forward-reward terms are ground-plane
vectors; in the planar model the lateral component is always zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_DISTANCE = 1e-6


@dataclass(frozen=True)
class RewardWeights:
    w_velocity_forward: float = 1.0
    w_ball_velocity_forward: float = 1.0
    w_bound_penalty: float = 1.0
    fall_penalty: float = 2.5
    win_bonus_scale: float = 0.01  # bonus per remaining step when the goal is reached
    w_style: float = 0.5
    w_task: float = 0.5

    def __post_init__(self):
        if not all(np.isfinite(v) for v in vars(self).values()):
            raise ValueError("reward weights must be finite")


@dataclass(frozen=True)
class BoundSchedule:
    """A bound that tightens linearly from ``initial_bound`` to ``final_bound``
    over the first ``decay`` fraction of training."""

    initial_bound: float
    final_bound: float
    decay: float = 1.0

    def __post_init__(self):
        if not self.initial_bound >= self.final_bound >= 0:
            raise ValueError("bound schedule needs initial_bound >= final_bound >= 0")
        if self.decay <= 0:
            raise ValueError("decay must be positive")

    def active(self, progress):
        frac = np.minimum(1.0, np.asarray(progress, dtype=float) / self.decay)
        return self.initial_bound + (self.final_bound - self.initial_bound) * frac


def _toward(src, dst, v):
    """Component of ``v`` along the unit vector from ``src`` to ``dst``; 0 if they coincide."""
    offset = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    dist = np.linalg.norm(offset, axis=-1)
    safe = np.where(dist > DEGENERATE_DISTANCE, dist, 1.0)
    proj = np.sum(offset * np.asarray(v, dtype=float), axis=-1) / safe
    out = np.where(dist > DEGENERATE_DISTANCE, proj, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def velocity_forward_reward(pos, target, v):
    """Speed of the robot toward ``target`` (negative when retreating)."""
    return _toward(pos, target, v)


def ball_velocity_forward_reward(ball, goal, ball_v):
    """Speed of the ball toward ``goal``."""
    return _toward(ball, goal, ball_v)


def bound_penalty(deviation, schedule: BoundSchedule | None, progress, weight: float = 1.0):
    """``weight`` wherever ``|deviation|`` exceeds the bound active at ``progress``."""
    if schedule is None:
        return np.zeros_like(np.asarray(deviation, dtype=float)) if np.ndim(deviation) else 0.0
    progress = np.asarray(progress, dtype=float)
    if np.any(progress < 0) or np.any(progress > 1):
        raise ValueError("progress must lie in [0, 1]")
    out = np.where(np.abs(deviation) > schedule.active(progress), weight, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def ball_flight_angle(ball_v, goal_direction, min_speed: float = 0.05):
    """Angle between the ball's (x, z) velocity and the ground direction to the goal.

    0 for a ball rolling at the goal, up to pi for one rolling away from it; a
    lofted ball sits in between.  Returns 0 while the ball is (nearly) still.
    """
    ball_v = np.asarray(ball_v, dtype=float)
    speed = np.linalg.norm(ball_v, axis=-1)
    along = ball_v[..., 0] * goal_direction
    cosang = np.clip(along / np.where(speed > 0, speed, 1.0), -1.0, 1.0)
    return np.where(speed > min_speed, np.arccos(cosang), 0.0)


def kick_reward(robot_pos, robot_v, ball_pos, ball_v, goal, weights: RewardWeights,
                penalties=0.0):
    """Approach-the-ball term plus ball-toward-goal term, minus active penalties."""
    approach = velocity_forward_reward(robot_pos, ball_pos, robot_v)
    ball_term = ball_velocity_forward_reward(ball_pos, goal, ball_v)
    return (weights.w_velocity_forward * approach
            + weights.w_ball_velocity_forward * ball_term - penalties)


def walk_reward(robot_pos, robot_v, goal, weights: RewardWeights, reached=False, remaining_steps=0):
    """Weighted speed toward the goal plus a win bonus on the step the goal is reached."""
    base = weights.w_velocity_forward * velocity_forward_reward(robot_pos, goal, robot_v)
    bonus = np.where(reached, weights.win_bonus_scale * np.asarray(remaining_steps, dtype=float), 0.0)
    out = base + bonus
    return float(out) if np.ndim(out) == 0 else out


def style_task_blend(task_reward, style_reward, weights: RewardWeights):
    return weights.w_task * np.asarray(task_reward) + weights.w_style * np.asarray(style_reward)
