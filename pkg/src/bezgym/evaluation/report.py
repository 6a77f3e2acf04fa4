"""Evaluation report, its text table and the published reference columns."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

NA = "n/a"


@dataclass
class EvalReport:
    """Aggregate metrics; ``None`` marks a metric that does not apply to the task."""

    task: str
    n_episodes: int
    fell_fraction: float
    pitch_angle: float                      # degrees
    kick_velocity: float | None = None      # m/s
    no_contact_episodes: int | None = None  # kick episodes whose ball never moved
    accuracy_fraction: float | None = None
    avg_velocity: float | None = None       # m/s toward the goal
    goal_sampler: str | None = None
    distance_x: float | None = None         # m
    distance_z: float | None = None         # m, COM rise
    foot_clearance: float | None = None     # m, lowest foot point at apex
    velocity_x: float | None = None         # m/s at take-off
    velocity_z: float | None = None
    avg_jumps_in_row: float | None = None
    wall_time: float = 0.0
    config_hash: str | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({"type": "eval_report", **self.to_dict()}, sort_keys=True)

    def comparable(self) -> dict:
        """Every field except wall time (which is the only non-deterministic one)."""
        d = self.to_dict()
        d.pop("wall_time")
        return d


# (label, report field, unit) rows shown per task
ROWS = {
    "kick": [("Kick Velocity", "kick_velocity", "m/s"), ("Accuracy (of n)", "accuracy_fraction", "%"),
             ("Pitch Angle", "pitch_angle", "deg"), ("Fell (of n)", "fell_fraction", "%")],
    "walk": [("Avg Velocity", "avg_velocity", "m/s"), ("Pitch Angle", "pitch_angle", "deg"),
             ("Fell (of n)", "fell_fraction", "%")],
    "jump": [("Distance X", "distance_x", "m"), ("Distance Z (COM rise)", "distance_z", "m"),
             ("Foot clearance", "foot_clearance", "m"), ("Velocity X", "velocity_x", "m/s"),
             ("Velocity Z", "velocity_z", "m/s"), ("Avg Jumps in a Row", "avg_jumps_in_row", ""),
             ("Pitch Angle", "pitch_angle", "deg"), ("Fell (of n)", "fell_fraction", "%")],
}

# Published values: trained policy and the earlier hand-designed controller.
PAPER_REFERENCE = {
    "kick": {"kick_velocity": (1.3, 0.3), "accuracy_fraction": (0.9, 0.4), "pitch_angle": (7.0, 3.0),
             "fell_fraction": (0.2, 0.0)},
    "walk": {"avg_velocity": (1.0, 0.1), "avg_velocity_random": (0.55, 0.1), "pitch_angle": (6.0, 3.0),
             "fell_fraction": (0.2, 0.0)},
    "jump": {"distance_x": (0.8, None), "distance_z": (0.35, None), "velocity_x": (1.82, None),
             "velocity_z": (1.51, None), "avg_jumps_in_row": (6.0, None), "pitch_angle": (6.5, None),
             "fell_fraction": (0.1, None)},
}


def _fmt(value, unit: str) -> str:
    if value is None:
        return NA
    if unit == "%":
        return f"{100 * value:.0f}%"
    return f"{value:.3g} {unit}".strip()


def format_report(report: EvalReport, compare_paper: bool = False) -> str:
    header = ["Metric", "This run"]
    if compare_paper:
        header += ["Paper policy", "Paper previous"]
    lines = [header]
    for label, key, unit in ROWS[report.task]:
        row = [label, _fmt(getattr(report, key), unit)]
        if compare_paper:
            ref_key = key
            if key == "avg_velocity" and report.goal_sampler == "uniform":
                ref_key = "avg_velocity_random"
            ref = PAPER_REFERENCE[report.task].get(ref_key, (None, None))
            row += [_fmt(ref[0], unit), _fmt(ref[1], unit)]
        lines.append(row)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    out = [" | ".join(c.ljust(w) for c, w in zip(r, widths)) for r in lines]
    out.insert(1, "-+-".join("-" * w for w in widths))
    title = f"{report.task} evaluation, {report.n_episodes} episodes (seed {report.seed})"
    if report.no_contact_episodes:
        title += f"; {report.no_contact_episodes} without ball contact"
    return "\n".join([title] + out)
