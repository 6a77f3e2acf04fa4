"""Finite-difference checks of the hand-written network gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bezgym.network import (
    MlpParams, backward, clamped_log_std, forward, gaussian_log_prob, input_gradient_penalty, mlp_init,
)
from bezgym.rl.amp import discriminator_loss_and_grads
from bezgym.rl.ppo import PpoConfig, ppo_loss_and_grads

EPS = 1e-5
DENOM_FLOOR = 1e-6


@dataclass
class GradcheckResult:
    kind: str
    n_params: int
    max_rel_error: float


def relative_error(analytic, numeric) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), DENOM_FLOOR)))


def numeric_gradient(loss_fn, params: list[MlpParams], eps: float = EPS) -> np.ndarray:
    """Central differences of ``loss_fn()`` over every entry of every array in ``params``."""
    out = []
    for p in params:
        for arr in p.arrays():
            flat = arr.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = loss_fn()
                flat[i] = orig - eps
                lo = loss_fn()
                flat[i] = orig
                out.append((hi - lo) / (2 * eps))
    return np.array(out)


def _random_net(rng, n_in, n_out, log_std=False):
    depth = int(rng.integers(1, 4))
    hidden = tuple(int(h) for h in rng.integers(3, 9, depth))
    p = mlp_init(n_in, n_out, rng, hidden, with_log_std=log_std)
    for b in p.biases:
        b[...] = rng.normal(0, 0.3, b.shape)
    if log_std:
        p.log_std[...] = rng.normal(-0.3, 0.3, p.log_std.shape)
    return p


def check_weighted_sum(rng) -> GradcheckResult:
    n_in, n_out = int(rng.integers(2, 6)), int(rng.integers(1, 4))
    net = _random_net(rng, n_in, n_out)
    x = rng.normal(size=(4, n_in))
    c = rng.normal(size=(4, n_out))

    def loss():
        y, _ = forward(net, x)
        return float(np.sum(c * np.tanh(y)))

    y, cache = forward(net, x)
    g = backward(net, cache, c * (1 - np.tanh(y) ** 2))
    return GradcheckResult("mlp", net.flat().size, relative_error(g.flat(), numeric_gradient(loss, [net])))


def check_ppo_loss(rng) -> GradcheckResult:
    n_in, n_act, batch = int(rng.integers(2, 6)), int(rng.integers(1, 4)), 6
    actor = _random_net(rng, n_in, n_act, log_std=True)
    critic = _random_net(rng, n_in, 1)
    obs = rng.normal(size=(batch, n_in))
    actions = rng.normal(size=(batch, n_act))
    mean, _ = forward(actor, obs)
    # old log-probs near the current ones so both clip branches appear
    old = gaussian_log_prob(actions, mean, clamped_log_std(actor)) + rng.normal(0, 0.3, batch)
    adv = rng.normal(size=batch)
    ret = rng.normal(size=batch)
    cfg = PpoConfig(num_envs=1, horizon=batch, minibatch_size=batch, vf_coef=float(rng.uniform(0.001, 1)),
                    ent_coef=float(rng.uniform(0, 0.1)))

    def loss():
        return ppo_loss_and_grads(actor, critic, obs, actions, old, adv, ret, cfg)[0]

    _, ga, gc, _ = ppo_loss_and_grads(actor, critic, obs, actions, old, adv, ret, cfg)
    analytic = np.concatenate([ga.flat(), gc.flat()])
    numeric = numeric_gradient(loss, [actor, critic])
    return GradcheckResult("ppo", analytic.size, relative_error(analytic, numeric))


def check_discriminator(rng) -> GradcheckResult:
    n_in = int(rng.integers(2, 6))
    disc = _random_net(rng, n_in, 1)
    real = rng.normal(size=(5, n_in))
    fake = rng.normal(1.0, 1.0, size=(5, n_in))
    gp = float(rng.uniform(0, 10))

    def loss():
        return discriminator_loss_and_grads(disc, real, fake, gp)[0]

    _, g, _ = discriminator_loss_and_grads(disc, real, fake, gp)
    return GradcheckResult("discriminator", disc.flat().size,
                           relative_error(g.flat(), numeric_gradient(loss, [disc])))


def check_gradient_penalty(rng) -> GradcheckResult:
    n_in = int(rng.integers(2, 6))
    disc = _random_net(rng, n_in, 1)
    x = rng.normal(size=(5, n_in))

    def loss():
        _, cache = forward(disc, x)
        return input_gradient_penalty(disc, cache, 1.0)[0]

    _, cache = forward(disc, x)
    _, g, _ = input_gradient_penalty(disc, cache, 1.0)
    return GradcheckResult("gradient_penalty", disc.flat().size,
                           relative_error(g.flat(), numeric_gradient(loss, [disc])))


CHECKS = (check_weighted_sum, check_ppo_loss, check_discriminator, check_gradient_penalty)


def run_gradcheck(trials: int = 20, seed: int = 0) -> list[GradcheckResult]:
    """``trials`` random instances cycling through every loss family."""
    rng = np.random.default_rng(seed)
    return [CHECKS[i % len(CHECKS)](rng) for i in range(trials)]
