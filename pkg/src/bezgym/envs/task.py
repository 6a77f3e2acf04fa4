"""Task descriptions and the observation layout they induce."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np

from bezgym.rewards import BoundSchedule, RewardWeights
from bezgym.sensors import ImuNoiseSpec


class TaskKind(str, Enum):
    KICK = "kick"
    WALK = "walk"
    JUMP = "jump"


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    goal_position: tuple[float, float] = (1.0, 0.0)
    ball_start: tuple[float, float] | None = None
    max_steps: int = 600
    termination_height: float = 0.275
    include_feet_contacts: bool = False
    goal_sampler: str = "fixed"  # or "uniform": goal x ~ U(goal_interval)
    goal_interval: tuple[float, float] = (-1.0, 1.0)
    win_radius: float = 0.1
    contact_threshold: float = 1e-3
    weights: RewardWeights = field(default_factory=RewardWeights)
    ball_angle_bound: BoundSchedule | None = None
    drift_bound: BoundSchedule | None = None
    drift_allowance: float = 0.1  # free forward travel after first ball contact, m
    fall_height_source: str = "torso_com"

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.termination_height <= 0:
            raise ValueError("termination_height must be positive")
        if self.goal_sampler not in ("fixed", "uniform"):
            raise ValueError(f"unknown goal sampler {self.goal_sampler!r}")
        if self.kind is TaskKind.KICK and self.ball_start is None:
            object.__setattr__(self, "ball_start", (0.2, 0.0))

    def with_overrides(self, **changes) -> "TaskSpec":
        return replace(self, **changes)


def kick_task(**kw) -> TaskSpec:
    return TaskSpec(kind=TaskKind.KICK, **kw)


def walk_task(**kw) -> TaskSpec:
    return TaskSpec(kind=TaskKind.WALK, **kw)


def jump_task(**kw) -> TaskSpec:
    return TaskSpec(kind=TaskKind.JUMP, **kw)


@dataclass(frozen=True)
class SensorConfig:
    imu: ImuNoiseSpec = field(default_factory=ImuNoiseSpec)
    quantize_joint_positions: bool = True
    noise: bool = True

    def effective_imu(self) -> ImuNoiseSpec:
        return self.imu if self.noise else replace(self.imu, accel_noise_frac=0.0, gyro_noise_frac=0.0)


# planar sizes of each observation block
ANGULAR_DIM = 1
LINEAR_DIM = 2
GOAL_DIM = 1
BALL_DIM = 1


def observation_layout(task: TaskSpec, n_joints: int, n_contacts: int = 4) -> list[tuple[str, int]]:
    """Ordered (block name, width) pairs of the observation vector."""
    layout = [
        ("joint_positions", n_joints),
        ("joint_velocities", n_joints),
        ("angular_velocity", ANGULAR_DIM),
        ("linear_velocity", LINEAR_DIM),
        ("goal_direction", GOAL_DIM),
    ]
    if task.kind is TaskKind.KICK:
        layout.append(("ball_position", BALL_DIM))
    if task.include_feet_contacts:
        layout.append(("feet_contacts", n_contacts))
    return layout


def observation_size(task: TaskSpec, n_joints: int, n_contacts: int = 4) -> int:
    return sum(w for _, w in observation_layout(task, n_joints, n_contacts))


def observation_slices(task: TaskSpec, n_joints: int, n_contacts: int = 4) -> dict[str, slice]:
    out, start = {}, 0
    for name, width in observation_layout(task, n_joints, n_contacts):
        out[name] = slice(start, start + width)
        start += width
    return out


def task_to_dict(task: TaskSpec) -> dict:
    out = {}
    for f in fields(task):
        v = getattr(task, f.name)
        if isinstance(v, TaskKind):
            v = v.value
        elif hasattr(v, "__dataclass_fields__"):
            v = {k: getattr(v, k) for k in v.__dataclass_fields__}
        out[f.name] = v
    return out
