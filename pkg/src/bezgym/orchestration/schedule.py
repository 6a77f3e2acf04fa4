"""The training config file: base task, PPO, randomization, AMP and curriculum stages.

The file is TOML.  Every section is optional except at least one ``[[stages]]``
entry; unknown keys anywhere are rejected with the dotted key in the error.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from bezgym.config import config_hash, load_toml
from bezgym.envs.task import SensorConfig, TaskSpec
from bezgym.errors import ValidationError
from bezgym.orchestration.randomization import DomainRandSpec
from bezgym.rewards import BoundSchedule, RewardWeights
from bezgym.rl.amp import AmpConfig
from bezgym.rl.ppo import PpoConfig
from bezgym.sensors import ImuNoiseSpec

INIT_FRESH = "fresh"
INIT_PREVIOUS = "previous"


@dataclass(frozen=True)
class CurriculumStage:
    name: str
    iterations: int
    task_overrides: dict = field(default_factory=dict)
    init_from: str = INIT_PREVIOUS  # "previous", "fresh" or a checkpoint path
    return_threshold: float | None = None  # stop early once mean return reaches this

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValidationError(f"stage {self.name!r}: iterations must be positive", "iterations")


@dataclass(frozen=True)
class AmpSettings:
    enabled: bool = False
    clip: str = "procedural"  # or a path to a motion clip file
    config: AmpConfig = field(default_factory=AmpConfig)


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    task: TaskSpec
    sensors: SensorConfig
    ppo: PpoConfig
    randomization: DomainRandSpec | None
    amp: AmpSettings
    stages: tuple[CurriculumStage, ...]
    checkpoint_every: int = 0
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def stage_task(self, index: int) -> TaskSpec:
        return apply_task_overrides(self.task, self.stages[index].task_overrides)


def _names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def _check_keys(table: dict, allowed: set[str], prefix: str):
    for key in table:
        if key not in allowed:
            raise ValidationError(f"unknown config key '{prefix}{key}'", prefix + key)


def _table(raw: dict, key: str, prefix: str = "") -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ValidationError(f"{prefix}{key} must be a table", prefix + key)
    return value


def _build(cls, table: dict, prefix: str, **fixed):
    try:
        return cls(**table, **fixed)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"[{prefix.rstrip('.')}] {exc}", prefix.rstrip(".")) from exc


TASK_SCALARS = _names(TaskSpec) - {"weights", "ball_angle_bound", "drift_bound"}
TUPLE_KEYS = {"goal_position", "ball_start", "goal_interval"}


def _task_fields(table: dict, prefix: str) -> dict:
    """Validated TaskSpec keyword arguments from a (possibly partial) task table."""
    _check_keys(table, _names(TaskSpec), prefix)
    out = {}
    for key, value in table.items():
        if key == "weights":
            sub = _table(table, key, prefix)
            _check_keys(sub, _names(RewardWeights), f"{prefix}weights.")
            out[key] = sub
        elif key in ("ball_angle_bound", "drift_bound"):
            if value is False:
                out[key] = None
                continue
            sub = _table(table, key, prefix)
            _check_keys(sub, _names(BoundSchedule), f"{prefix}{key}.")
            out[key] = _build(BoundSchedule, sub, f"{prefix}{key}.")
        elif key in TUPLE_KEYS:
            out[key] = tuple(float(v) for v in value)
        else:
            out[key] = value
    return out


def apply_task_overrides(base: TaskSpec, overrides: dict) -> TaskSpec:
    changes = dict(overrides)
    if "weights" in changes:
        changes["weights"] = replace(base.weights, **changes["weights"])
    try:
        return base.with_overrides(**changes)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad task override: {exc}", "task") from exc


def _parse_stages(raw: dict) -> tuple[CurriculumStage, ...]:
    stages = raw.get("stages", [])
    if not isinstance(stages, list) or not stages:
        raise ValidationError("the config needs at least one [[stages]] entry", "stages")
    out = []
    allowed = {"name", "iterations", "task", "init_from", "return_threshold"}
    for i, st in enumerate(stages):
        prefix = f"stages[{i}]."
        _check_keys(st, allowed, prefix)
        if "iterations" not in st:
            raise ValidationError(f"{prefix}iterations is required", prefix + "iterations")
        overrides = _task_fields(_table(st, "task", prefix), prefix + "task.")
        if "kind" in overrides:
            raise ValidationError("a stage cannot change the task kind", prefix + "task.kind")
        init = st.get("init_from", INIT_FRESH if i == 0 else INIT_PREVIOUS)
        if i == 0 and init == INIT_PREVIOUS:
            raise ValidationError("the first stage has no previous stage to start from", prefix + "init_from")
        out.append(CurriculumStage(name=str(st.get("name", f"stage{i + 1}")), iterations=int(st["iterations"]),
                                   task_overrides=overrides, init_from=str(init),
                                   return_threshold=st.get("return_threshold")))
    return tuple(out)


def load_schedule(text: str) -> list[CurriculumStage]:
    """Ordered curriculum stages from config text."""
    return list(load_config(text).stages)


TOP_LEVEL = {"seed", "checkpoint_every", "task", "sensors", "ppo", "randomization", "amp", "stages"}


def load_config(text: str) -> TrainConfig:
    """Parse and validate config text (TOML)."""
    return load_config_dict(load_toml(text=text))


def load_config_file(path) -> TrainConfig:
    return load_config(Path(path).read_text())


def load_config_dict(raw: dict) -> TrainConfig:
    """Validate an already-parsed config mapping."""
    _check_keys(raw, TOP_LEVEL, "")

    task_kw = _task_fields(_table(raw, "task"), "task.")
    if "weights" in task_kw:
        task_kw["weights"] = _build(RewardWeights, task_kw["weights"], "task.weights.")
    task_kw.setdefault("kind", "walk")
    task = _build(TaskSpec, task_kw, "task.")

    sens = dict(_table(raw, "sensors"))
    imu_keys = _names(ImuNoiseSpec)
    _check_keys(sens, imu_keys | {"noise", "quantize_joint_positions"}, "sensors.")
    imu = _build(ImuNoiseSpec, {k: v for k, v in sens.items() if k in imu_keys}, "sensors.")
    sensors = SensorConfig(imu=imu, noise=bool(sens.get("noise", True)),
                           quantize_joint_positions=bool(sens.get("quantize_joint_positions", True)))

    ppo_t = dict(_table(raw, "ppo"))
    _check_keys(ppo_t, _names(PpoConfig), "ppo.")
    if "hidden" in ppo_t:
        ppo_t["hidden"] = tuple(int(h) for h in ppo_t["hidden"])
    ppo = _build(PpoConfig, ppo_t, "ppo.")

    rand_t = dict(_table(raw, "randomization"))
    _check_keys(rand_t, _names(DomainRandSpec) | {"enabled"}, "randomization.")
    enabled = rand_t.pop("enabled", True)
    randomization = _build(DomainRandSpec, rand_t, "randomization.") if enabled else None

    amp_t = dict(_table(raw, "amp"))
    _check_keys(amp_t, _names(AmpConfig) | {"enabled", "clip"}, "amp.")
    amp_enabled, clip = bool(amp_t.pop("enabled", False)), str(amp_t.pop("clip", "procedural"))
    if "hidden" in amp_t:
        amp_t["hidden"] = tuple(int(h) for h in amp_t["hidden"])
    amp = AmpSettings(amp_enabled, clip, _build(AmpConfig, amp_t, "amp."))

    stages = _parse_stages(raw)
    for i in range(len(stages)):
        apply_task_overrides(task, stages[i].task_overrides)
    every = int(raw.get("checkpoint_every", 0))
    if every < 0:
        raise ValidationError("checkpoint_every must be non-negative", "checkpoint_every")
    return TrainConfig(seed=int(raw.get("seed", 0)), task=task, sensors=sensors, ppo=ppo,
                       randomization=randomization, amp=amp, stages=stages, checkpoint_every=every, raw=raw)
