"""Running mean / variance observation normalization."""
from __future__ import annotations

import numpy as np


class RunningMeanStd:
    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = eps
        self.clip = clip
        self.eps = eps

    def update(self, batch):
        batch = np.asarray(batch, dtype=float).reshape(-1, self.mean.shape[0])
        b_mean, b_var, n = batch.mean(axis=0), batch.var(axis=0), batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * n / total
        m2 = self.var * self.count + b_var * n + delta ** 2 * self.count * n / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x):
        return np.clip((np.asarray(x) - self.mean) / np.sqrt(self.var + self.eps), -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": self.count}

    def load_state_dict(self, d: dict):
        self.mean = np.array(d["mean"])
        self.var = np.array(d["var"])
        self.count = float(d["count"])
