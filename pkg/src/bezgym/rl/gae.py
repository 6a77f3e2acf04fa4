"""Generalized advantage estimation."""
from __future__ import annotations

import numpy as np

from bezgym.errors import LengthMismatch


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Advantages and returns over the leading (time) axis.

    ``rewards``, ``values`` and ``dones`` share shape ``(T,)`` or ``(T, n_envs)``;
    ``bootstrap_value`` is the critic's value of the state after the last step.
    A ``done`` at step t cuts both the bootstrap and the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not rewards.shape == values.shape == dones.shape:
        raise LengthMismatch(f"rewards {rewards.shape}, values {values.shape} and dones "
                             f"{dones.shape} must align")
    bootstrap_value = np.asarray(bootstrap_value, dtype=float)
    if bootstrap_value.shape != rewards.shape[1:]:
        raise LengthMismatch(f"bootstrap value shape {bootstrap_value.shape} does not match "
                             f"one time step {rewards.shape[1:]}")
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    not_done = 1.0 - dones.astype(float)
    next_value = bootstrap_value
    running = np.zeros_like(bootstrap_value)
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        running = delta + gamma * lam * not_done[t] * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values
