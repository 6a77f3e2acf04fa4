"""Kick, walk and jump episodes on the planar Bez model."""
from bezgym.envs.core import (
    ACTION_LIMIT, EpisodeState, StepResult, build_observation, check_termination, env_step, reset,
    sample_goal, scale_action,
)
from bezgym.envs.task import (
    SensorConfig, TaskKind, TaskSpec, jump_task, kick_task, observation_layout, observation_size,
    observation_slices, walk_task,
)
from bezgym.envs.trajectory import Trajectory
from bezgym.envs.vec import VecEnv

__all__ = [
    "ACTION_LIMIT", "EpisodeState", "StepResult", "build_observation", "check_termination",
    "env_step", "reset", "sample_goal", "scale_action",
    "SensorConfig", "TaskKind", "TaskSpec", "jump_task", "kick_task", "observation_layout",
    "observation_size", "observation_slices", "walk_task", "Trajectory", "VecEnv",
]
