"""Per-step episode recording and its line-delimited JSON form."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FIELDS = ("time", "q", "qd", "base_pose", "base_vel", "ball_pos", "ball_vel", "action",
          "reward", "done", "fell", "contacts", "com", "com_vel", "foot_z")


@dataclass
class Trajectory:
    """One episode of a single environment.  Row 0 is the reset state (no action)."""

    task: str = ""
    goal: tuple[float, float] = (1.0, 0.0)
    rows: dict = field(default_factory=lambda: {k: [] for k in FIELDS})

    def append(self, **values):
        for k in FIELDS:
            v = values.get(k)
            self.rows[k].append(None if v is None else np.asarray(v, dtype=float).tolist())

    def __len__(self) -> int:
        return len(self.rows["time"])

    def array(self, name: str) -> np.ndarray:
        vals = self.rows[name]
        if name in ("action",):
            n = next((len(v) for v in vals if v is not None), 0)
            return np.array([v if v is not None else [np.nan] * n for v in vals], dtype=float)
        if name in ("reward",):
            return np.array([np.nan if v is None else v for v in vals], dtype=float)
        return np.array(vals, dtype=float)

    def write_jsonl(self, path):
        path = Path(path)
        with path.open("w") as fh:
            fh.write(json.dumps({"type": "header", "task": self.task, "goal": list(self.goal)}) + "\n")
            for i in range(len(self)):
                rec = {"type": "step"}
                rec.update({k: self.rows[k][i] for k in FIELDS})
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def read_jsonl(cls, path) -> "Trajectory":
        traj = cls()
        with Path(path).open() as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec.get("type") == "header":
                    traj.task = rec.get("task", "")
                    traj.goal = tuple(rec.get("goal", (1.0, 0.0)))
                else:
                    for k in FIELDS:
                        traj.rows[k].append(rec.get(k))
        return traj

    def to_csv(self) -> str:
        """Flat CSV with one column per scalar (vector fields expanded as name_i)."""
        header, cols = [], []
        for k in FIELDS:
            arr = self.array(k)
            if arr.ndim == 1:
                header.append(k)
                cols.append(arr[:, None])
            else:
                header.extend(f"{k}_{i}" for i in range(arr.shape[1]))
                cols.append(arr)
        table = np.concatenate(cols, axis=1) if cols else np.zeros((0, 0))
        lines = [",".join(header)]
        lines.extend(",".join(repr(float(x)) for x in row) for row in table)
        return "\n".join(lines) + "\n"
