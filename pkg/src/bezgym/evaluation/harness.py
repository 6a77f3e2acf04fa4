"""Deterministic evaluation: nominal physics, sensor noise on, mean actions."""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bezgym.config import config_hash
from bezgym.dynamics import build_canonical_model
from bezgym.dynamics.model import RobotModel
from bezgym.envs import SensorConfig, TaskKind, TaskSpec, VecEnv
from bezgym.evaluation.metrics import (
    metric_accuracy, metric_jump, metric_kick_velocity, metric_pitch_angle, metric_walk_velocity,
)
from bezgym.evaluation.report import EvalReport
from bezgym.network import MlpParams, clamped_log_std, forward
from bezgym.orchestration.checkpoint import Checkpoint, load_checkpoint
from bezgym.orchestration.schedule import TrainConfig, load_config_dict
from bezgym.rl.normalize import RunningMeanStd


class ReadyPosePolicy:
    """Holds the ready pose: every raw action is the ready angle divided by pi."""

    def __init__(self, model: RobotModel):
        self.raw = model.ready_pose / np.pi

    def __call__(self, obs, rng=None):
        return np.tile(self.raw, (len(obs), 1))


@dataclass
class MlpPolicy:
    actor: MlpParams
    obs_norm: RunningMeanStd | None = None
    deterministic: bool = True

    def __call__(self, obs, rng: np.random.Generator | None = None):
        x = obs if self.obs_norm is None else self.obs_norm.normalize(obs)
        mean, _ = forward(self.actor, x)
        mean = mean.astype(float)
        if self.deterministic:
            return mean
        return mean + np.exp(clamped_log_std(self.actor)) * rng.standard_normal(mean.shape)


def actor_from_arrays(arrays) -> MlpParams:
    """Rebuild the actor from its ``arrays()`` list (weight/bias pairs then log-std)."""
    arrays = [np.array(a) for a in arrays]
    log_std = arrays.pop() if len(arrays) % 2 else None
    return MlpParams(arrays[0::2], arrays[1::2], log_std)


def policy_from_checkpoint(ckpt: Checkpoint, deterministic: bool = True) -> MlpPolicy:
    tr = ckpt.trainer
    norm = None
    if "obs_norm" in tr:
        norm = RunningMeanStd(len(tr["obs_norm"]["mean"]))
        norm.load_state_dict(tr["obs_norm"])
    return MlpPolicy(actor_from_arrays(tr["actor"]), norm, deterministic)


def checkpoint_task(ckpt: Checkpoint) -> tuple[TaskSpec, TrainConfig]:
    """The task of the stage the checkpoint was taken in."""
    cfg = load_config_dict(ckpt.config)
    return cfg.stage_task(ckpt.stage_index), cfg


def collect_episodes(policy, task: TaskSpec, n: int, seed: int = 0, model: RobotModel | None = None,
                     sensors: SensorConfig | None = None, max_steps: int | None = None):
    """First episode of each of ``n`` parallel environments, without randomization."""
    if n < 1:
        raise ValueError("n must be at least 1")
    model = model or build_canonical_model()
    env = VecEnv(task, model, n, seed=seed, sensors=sensors or SensorConfig(), randomization=None,
                 record=True)
    obs = env.reset()
    act_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    owner = {}
    limit = max_steps or task.max_steps
    for _ in range(limit + 1):
        before = len(env.finished)
        obs, _, done, info = env.step(policy(obs, act_rng))
        for traj, ep in zip(env.finished[before:], info["episodes"]):
            owner.setdefault(ep["env"], traj)
        if len(owner) == n:
            break
    return [owner[i] for i in sorted(owner)]


def summarize(trajs, task: TaskSpec, seed: int = 0, cfg_hash: str | None = None,
              wall_time: float = 0.0) -> EvalReport:
    n = len(trajs)
    fell = [bool(t.array("fell")[-1] > 0) for t in trajs]
    report = EvalReport(task=task.kind.value, n_episodes=n, fell_fraction=float(np.mean(fell)),
                        pitch_angle=float(np.mean([metric_pitch_angle(t) for t in trajs])),
                        wall_time=wall_time, config_hash=cfg_hash, seed=seed)
    if task.kind is TaskKind.KICK:
        kicks = [metric_kick_velocity(t) for t in trajs]
        report.kick_velocity = float(np.mean([v for v, _ in kicks]))
        report.no_contact_episodes = sum(1 for _, hit in kicks if not hit)
        report.accuracy_fraction = metric_accuracy(trajs, task.goal_position)
    elif task.kind is TaskKind.WALK:
        report.avg_velocity = float(np.mean([metric_walk_velocity(t) for t in trajs]))
        report.goal_sampler = task.goal_sampler
    else:
        stats = [metric_jump(t) for t in trajs]
        for key in ("distance_x", "distance_z", "foot_clearance", "velocity_x", "velocity_z"):
            setattr(report, key, float(np.mean([getattr(s, key) for s in stats])))
        report.avg_jumps_in_row = float(np.mean([s.jumps for s in stats]))
    return report


def run_eval(policy, task: TaskSpec, n: int = 10, seed: int = 0, *, model: RobotModel | None = None,
             sensors: SensorConfig | None = None, out_dir=None, cfg_hash: str | None = None) -> EvalReport:
    """Run ``n`` episodes and aggregate the task's metrics.

    ``policy`` maps a batch of observations (and an rng) to raw actions.
    Per-episode trajectories are written to ``out_dir`` when given.
    """
    t0 = time.perf_counter()
    trajs = collect_episodes(policy, task, n, seed, model, sensors)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(trajs):
            t.write_jsonl(out / f"episode_{i:03d}.jsonl")
    return summarize(trajs, task, seed, cfg_hash, time.perf_counter() - t0)


def evaluate_checkpoint(path, task_kind: str | None = None, n: int = 10, seed: int = 0, out_dir=None,
                        deterministic: bool = True) -> EvalReport:
    ckpt = load_checkpoint(path)
    task, cfg = checkpoint_task(ckpt)
    if task_kind is not None and TaskKind(task_kind) is not task.kind:
        raise ValueError(f"checkpoint was trained on {task.kind.value!r}, not {task_kind!r}")
    policy = policy_from_checkpoint(ckpt, deterministic)
    return run_eval(policy, task, n, seed, sensors=cfg.sensors, out_dir=out_dir,
                    cfg_hash=ckpt.config_hash or config_hash(ckpt.config))
