"""Sequential curriculum controller: stages, checkpoint threading and the metrics log.

The metrics log (``metrics.jsonl``) holds one JSON record per line, each with a
``type`` field: ``run``, ``stage_start``, ``iteration``, ``stage_end`` and
``checkpoint``.  It contains no wall-clock values, so two runs with the same
config and seed produce byte-identical logs; timings go to ``timing.jsonl``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bezgym.dynamics import build_canonical_model
from bezgym.dynamics.model import RobotModel
from bezgym.envs import VecEnv
from bezgym.orchestration.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from bezgym.orchestration.schedule import INIT_FRESH, INIT_PREVIOUS, TrainConfig
from bezgym.rl.amp import AmpModule, load_motion_clip, procedural_jump_clip
from bezgym.rl.ppo import PpoTrainer

METRICS_FILE = "metrics.jsonl"
TIMING_FILE = "timing.jsonl"
TIMING_KEYS = ("wall_time",)


def stage_seed(seed: int, index: int) -> int:
    """Independent per-stage seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def reference_features(config: TrainConfig, model: RobotModel) -> np.ndarray:
    if config.amp.clip == "procedural":
        clip = procedural_jump_clip(model)
    else:
        clip = load_motion_clip(config.amp.clip, model)
    return clip.features()


def build_trainer(config: TrainConfig, stage_index: int, model: RobotModel | None = None) -> PpoTrainer:
    """Fresh environments, networks and optimizer for one stage."""
    model = model or build_canonical_model()
    task = config.stage_task(stage_index)
    seed = stage_seed(config.seed, stage_index)
    env = VecEnv(task, model, config.ppo.num_envs, seed=seed, sensors=config.sensors,
                 randomization=config.randomization, amp=config.amp.enabled)
    amp = None
    if config.amp.enabled:
        amp = AmpModule(reference_features(config, model), config.amp.config,
                        np.random.default_rng(stage_seed(seed, 1)))
    trainer = PpoTrainer(env, config.ppo, seed=seed, amp=amp,
                         amp_weights=(task.weights.w_task, task.weights.w_style))
    trainer.set_action_offset(model.ready_pose / np.pi)
    return trainer


@dataclass
class CurriculumResult:
    checkpoint: Checkpoint
    stage_metrics: list[dict] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    finished: bool = True


class _Log:
    def __init__(self, out_dir: Path | None, append: bool):
        self.records: list[dict] = []
        self._files = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            mode = "a" if append else "w"
            self._files = (open(out_dir / METRICS_FILE, mode), open(out_dir / TIMING_FILE, mode))

    def write(self, record: dict):
        timing = {k: record.pop(k) for k in TIMING_KEYS if k in record}
        self.records.append(record)
        if self._files:
            self._files[0].write(json.dumps(record, sort_keys=True) + "\n")
            self._files[0].flush()
            if timing:
                timing.update(type=record["type"], iteration=record.get("iteration"))
                self._files[1].write(json.dumps(timing, sort_keys=True) + "\n")

    def close(self):
        if self._files:
            for f in self._files:
                f.close()


def _clean(stats: dict) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in stats.items()}


def _initial_policy(config: TrainConfig, index: int, previous: dict | None):
    init = config.stages[index].init_from
    if init == INIT_FRESH:
        return None
    if init == INIT_PREVIOUS:
        return previous
    return load_checkpoint(init).trainer


def run_curriculum(config: TrainConfig, out_dir=None, *, resume: Checkpoint | str | Path | None = None,
                   max_iterations: int | None = None, model: RobotModel | None = None,
                   verbose: bool = False) -> CurriculumResult:
    """Run every stage in order, threading the policy from one stage to the next.

    ``resume`` continues from a checkpoint written by an earlier call; the
    remaining records are identical to those an uninterrupted run would log.
    ``max_iterations`` stops after that many iterations in total (counting
    any resumed ones) and returns a mid-run checkpoint.
    """
    model = model or build_canonical_model()
    out = Path(out_dir) if out_dir is not None else None
    if isinstance(resume, (str, Path)):
        resume = load_checkpoint(resume, expected_hash=config.hash)
    log = _Log(out, append=resume is not None)
    stage_metrics: list[dict] = []
    total = 0 if resume is None else resume.iteration
    start_stage, previous = 0, None
    if resume is None:
        log.write({"type": "run", "config_hash": config.hash, "seed": config.seed,
                   "stages": [s.name for s in config.stages]})
    else:
        start_stage = resume.stage_index + (1 if resume.stage_done else 0)
        previous = resume.trainer
        stage_metrics = list(resume.extra.get("stage_metrics", []))

    ckpt = resume
    try:
        for index in range(start_stage, len(config.stages)):
            stage = config.stages[index]
            trainer = build_trainer(config, index, model)
            done_in_stage = 0
            if resume is not None and not resume.stage_done and index == resume.stage_index:
                trainer.load_state_dict(resume.trainer)
                done_in_stage = resume.stage_iteration
            else:
                init = _initial_policy(config, index, previous)
                if init is not None:
                    trainer.load_state_dict(init, policy_only=True)
                trainer.iteration = total
                log.write({"type": "stage_start", "stage": index, "name": stage.name,
                           "init_from": stage.init_from, "iteration": total})
            reason, last_return = "iterations", None
            while done_in_stage < stage.iterations:
                if max_iterations is not None and total >= max_iterations:
                    ckpt = _checkpoint(config, trainer, index, done_in_stage, False, stage_metrics)
                    _save(out, ckpt, f"iter{total:06d}.ckpt", log)
                    return CurriculumResult(ckpt, stage_metrics, log.records, finished=False)
                trainer.progress = done_in_stage / stage.iterations
                try:
                    stats = trainer.train_iteration()
                except Exception as exc:
                    exc.stage = stage.name
                    raise
                done_in_stage += 1
                total += 1
                rec = {"type": "iteration", "stage": index, "stage_iteration": done_in_stage}
                rec.update(_clean(stats))
                log.write(rec)
                if verbose:
                    shown = {k: stats.get(k) for k in ("mean_return", "mean_length", "fell_fraction",
                                                        "mean_task_reward", "mean_style_reward")}
                    text = " ".join(f"{k}={v:.3g}" for k, v in shown.items() if v is not None)
                    print(f"[{stage.name}] it {done_in_stage}/{stage.iterations} {text}", flush=True)
                if stats.get("mean_return") is not None:
                    last_return = stats["mean_return"]
                if config.checkpoint_every and total % config.checkpoint_every == 0:
                    ckpt = _checkpoint(config, trainer, index, done_in_stage, False, stage_metrics)
                    _save(out, ckpt, f"iter{total:06d}.ckpt", log)
                if (stage.return_threshold is not None and last_return is not None
                        and last_return >= stage.return_threshold):
                    reason = "return_threshold"
                    break
            summary = {"type": "stage_end", "stage": index, "name": stage.name,
                       "iterations": done_in_stage, "reason": reason, "final_mean_return": last_return}
            log.write(summary)
            stage_metrics.append({k: v for k, v in summary.items() if k != "type"})
            ckpt = _checkpoint(config, trainer, index, done_in_stage, True, stage_metrics)
            _save(out, ckpt, f"stage{index + 1}.ckpt", log)
            previous = ckpt.trainer
        if out is not None and ckpt is not None:
            save_checkpoint(out / "final.ckpt", ckpt)
    finally:
        log.close()
    return CurriculumResult(ckpt, stage_metrics, log.records)


def _checkpoint(config, trainer, index, done_in_stage, stage_done, stage_metrics) -> Checkpoint:
    return Checkpoint(trainer=trainer.state_dict(), config=config.raw, config_hash=config.hash,
                      stage_index=index, stage_iteration=done_in_stage, stage_done=stage_done,
                      extra={"stage_metrics": list(stage_metrics)})


def _save(out: Path | None, ckpt: Checkpoint, name: str, log: _Log):
    if out is None:
        return
    save_checkpoint(out / name, ckpt)
    log.write({"type": "checkpoint", "stage": ckpt.stage_index, "iteration": ckpt.iteration, "file": name})
