"""A one-dimensional point-mass reaching task for sanity-checking the learner.

The mass starts at x0 ~ U(-1, 1); each step moves it by ``max_step * clip(a, -1, 1)``
and pays ``1 - |x|``.  Episodes last ``horizon`` steps.
"""
from __future__ import annotations

import numpy as np


def optimal_return(max_step: float = 0.1, horizon: int = 20) -> float:
    """Expected return of heading straight for the origin (and stopping there).

    With d = |x0| ~ U(0, 1) the distance after step t is max(d - t*max_step, 0),
    so the expected shortfall of each step is E[(d - t*s)+] = (1 - t*s)^2 / 2.
    """
    shortfall = sum(0.5 * max(0.0, 1.0 - t * max_step) ** 2 for t in range(1, horizon + 1))
    return horizon - shortfall


class PointMassEnv:
    def __init__(self, n_envs: int, seed: int = 0, max_step: float = 0.1, horizon: int = 20):
        self.n_envs = n_envs
        self.max_step = max_step
        self.horizon = horizon
        self.rng = np.random.default_rng(seed)
        self.x = np.zeros(n_envs)
        self.t = np.zeros(n_envs, dtype=np.int64)
        self.ep_return = np.zeros(n_envs)

    obs_dim = 1
    act_dim = 1

    def _obs(self):
        return self.x[:, None].copy()

    def reset(self):
        self.x = self.rng.uniform(-1.0, 1.0, self.n_envs)
        self.t[:] = 0
        self.ep_return[:] = 0
        return self._obs()

    def step(self, raw_actions):
        a = np.clip(np.asarray(raw_actions, dtype=float).reshape(self.n_envs), -1.0, 1.0)
        self.x = self.x + self.max_step * a
        self.t += 1
        reward = 1.0 - np.abs(self.x)
        self.ep_return += reward
        done = self.t >= self.horizon
        info = {"timeout": done.copy(), "fell": np.zeros(self.n_envs, bool), "final_obs": self._obs(),
                "episodes": [{"return": float(r), "length": self.horizon} for r in self.ep_return[done]]}
        if np.any(done):
            self.x[done] = self.rng.uniform(-1.0, 1.0, int(done.sum()))
            self.t[done] = 0
            self.ep_return[done] = 0
        return self._obs(), reward, done, info

    def state_dict(self) -> dict:
        return {"x": self.x.copy(), "t": self.t.copy(), "ep_return": self.ep_return.copy(),
                "rng": self.rng.bit_generator.state}

    def load_state_dict(self, d: dict):
        self.x = np.array(d["x"])
        self.t = np.array(d["t"])
        self.ep_return = np.array(d["ep_return"])
        self.rng.bit_generator.state = d["rng"]
