"""Per-episode metrics computed from recorded trajectories.

Every function takes :class:`~bezgym.envs.Trajectory` objects (row 0 is the
reset state) and returns plain floats.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bezgym.envs.trajectory import Trajectory

BALL_MOVING = 0.05        # m/s; the ball rests at reset, so its first motion marks first contact
GOAL_TOLERANCE = 0.25     # m
MIN_AIRBORNE_STEPS = 3


def first_ball_contact(traj: Trajectory, threshold: float = BALL_MOVING) -> int | None:
    """Row index of the first step with the ball moving, or None."""
    speed = np.linalg.norm(traj.array("ball_vel"), axis=1)
    moving = np.flatnonzero(speed > threshold)
    return int(moving[0]) if len(moving) else None


def metric_kick_velocity(traj: Trajectory) -> tuple[float, bool]:
    """Maximum ball speed from the first foot-ball contact on, and whether contact happened.

    An episode without contact reports (0.0, False).
    """
    start = first_ball_contact(traj)
    if start is None:
        return 0.0, False
    speed = np.linalg.norm(traj.array("ball_vel")[start:], axis=1)
    return float(speed.max()), True


def ball_reached_goal(traj: Trajectory, goal=(1.0, 0.0), tolerance: float = GOAL_TOLERANCE) -> bool:
    """True if the ball's ground position comes within ``tolerance`` of ``goal``
    at any recorded step (a fall ends the episode, so later motion never counts)."""
    ball_x = traj.array("ball_pos")[:, 0]
    d = np.hypot(ball_x - goal[0], goal[1])
    return bool(np.any(d <= tolerance))


def metric_accuracy(trajs: list[Trajectory], goal=(1.0, 0.0), tolerance: float = GOAL_TOLERANCE) -> float:
    if not trajs:
        raise ValueError("accuracy needs at least one trajectory")
    return float(np.mean([ball_reached_goal(t, goal, tolerance) for t in trajs]))


def metric_pitch_angle(traj: Trajectory, model=None) -> float:
    """Mean absolute torso pitch in degrees over the steps before a fall."""
    pitch = traj.array("base_pose")[:, 2]
    fell = traj.array("fell") > 0
    upright = pitch[~fell]
    if len(upright) == 0:
        return 0.0
    return float(np.degrees(np.mean(np.abs(upright))))


def metric_walk_velocity(traj: Trajectory, goal=None) -> float:
    """Net pelvis displacement toward the goal divided by the episode's elapsed time.

    Episodes end on reaching the goal, so elapsed time runs to goal-reach or
    episode end.  Motion away from the goal is reported as 0 (speeds are
    non-negative).
    """
    goal = np.asarray(traj.goal if goal is None else goal, dtype=float)
    x = traj.array("base_pose")[:, 0]
    t = traj.array("time")
    elapsed = t[-1] - t[0]
    if elapsed <= 0:
        return 0.0
    offset = goal - np.array([x[0], 0.0])
    dist = np.linalg.norm(offset)
    if dist == 0:
        return 0.0
    toward = (x[-1] - x[0]) * offset[0] / dist
    return float(max(toward, 0.0) / elapsed)


@dataclass
class JumpStats:
    distance_x: float = 0.0      # mean COM horizontal travel per jump, m
    distance_z: float = 0.0      # mean peak COM rise above standing height, m
    foot_clearance: float = 0.0  # mean peak height of the lowest foot point, m
    velocity_x: float = 0.0      # mean COM velocity at take-off, m/s
    velocity_z: float = 0.0
    jumps: int = 0               # jumps completed before the first fall


def airborne_intervals(contacts, min_steps: int = MIN_AIRBORNE_STEPS) -> list[tuple[int, int]]:
    """(start, end) row ranges, end exclusive, where every foot point is off the ground."""
    air = np.all(np.asarray(contacts) < 0, axis=1)
    out, start = [], None
    for i, a in enumerate(air):
        if a and start is None:
            start = i
        elif not a and start is not None:
            if i - start >= min_steps:
                out.append((start, i))
            start = None
    if start is not None and len(air) - start >= min_steps:
        out.append((start, len(air)))
    return out


def metric_jump(traj: Trajectory) -> JumpStats:
    """Jump statistics; a jump is at least three consecutive steps with no foot contact.

    Take-off is the last grounded row before the airborne interval; the COM
    velocity there gives the take-off velocity.  Travel is measured from
    take-off to the first grounded row after the interval (or the last row).
    """
    contacts = traj.array("contacts")
    com = traj.array("com")
    com_vel = traj.array("com_vel")
    fell = np.flatnonzero(traj.array("fell") > 0)
    first_fall = int(fell[0]) if len(fell) else len(contacts)
    standing = com[0, 1]
    jumps = [(s, e) for s, e in airborne_intervals(contacts) if s > 0 and e <= first_fall]
    if not jumps:
        return JumpStats()
    foot_z = traj.array("foot_z")
    rows = []
    for s, e in jumps:
        take, land = s - 1, min(e, len(com) - 1)
        rows.append((com[land, 0] - com[take, 0], com[s:e, 1].max() - standing, foot_z[s:e].max(),
                     com_vel[take, 0], com_vel[take, 1]))
    m = np.mean(rows, axis=0)
    return JumpStats(distance_x=float(abs(m[0])), distance_z=float(max(m[1], 0.0)),
                     foot_clearance=float(max(m[2], 0.0)), velocity_x=float(abs(m[3])),
                     velocity_z=float(max(m[4], 0.0)), jumps=len(jumps))

