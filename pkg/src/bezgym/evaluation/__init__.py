"""Evaluation harness and metric suite."""
from bezgym.evaluation.harness import (
    MlpPolicy, ReadyPosePolicy, collect_episodes, evaluate_checkpoint, policy_from_checkpoint, run_eval,
    summarize,
)
from bezgym.evaluation.metrics import (
    JumpStats, airborne_intervals, metric_accuracy, metric_jump, metric_kick_velocity, metric_pitch_angle,
    metric_walk_velocity,
)
from bezgym.evaluation.report import PAPER_REFERENCE, EvalReport, format_report

__all__ = [
    "MlpPolicy", "ReadyPosePolicy", "collect_episodes", "evaluate_checkpoint", "policy_from_checkpoint",
    "run_eval", "summarize", "JumpStats", "airborne_intervals", "metric_accuracy", "metric_jump",
    "metric_kick_velocity", "metric_pitch_angle", "metric_walk_velocity", "PAPER_REFERENCE", "EvalReport",
    "format_report",
]
