"""Proximal policy optimization with separate actor and critic networks."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from bezgym.errors import NumericalDivergence
from bezgym.network import (
    LOG_STD_MAX, LOG_STD_MIN, MlpParams, backward, clamped_log_std, forward, gaussian_entropy,
    gaussian_log_prob, mlp_init,
)
from bezgym.rl.amp import AmpModule
from bezgym.rl.gae import compute_gae
from bezgym.rl.normalize import RunningMeanStd
from bezgym.rl.optim import Adam


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.95
    gae_lambda: float = 0.99
    clip: float = 0.2
    learning_rate: float = 3e-4
    minibatch_size: int = 32768
    mini_epochs: int = 5
    vf_coef: float = 0.001
    ent_coef: float = 0.0
    num_envs: int = 512
    horizon: int = 64
    normalize_advantages: bool = True
    target_kl: float | None = 0.03
    max_grad_norm: float | None = None
    hidden: tuple[int, ...] = (400, 200, 100)
    init_log_std: float = 0.0
    actor_output_scale: float = 0.01
    normalize_observations: bool = False
    bootstrap_timeouts: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        if self.num_envs <= 0 or self.horizon <= 0 or self.mini_epochs <= 0:
            raise ValueError("num_envs, horizon and mini_epochs must be positive")
        if not 0 < self.minibatch_size <= self.num_envs * self.horizon:
            raise ValueError("minibatch_size must be positive and at most num_envs * horizon")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RolloutBuffer:
    """Per-step arrays shaped ``(horizon, num_envs, ...)``."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap_values: np.ndarray | None = None
    amp_features: np.ndarray | None = None

    @classmethod
    def allocate(cls, horizon: int, n_envs: int, obs_dim: int, act_dim: int) -> "RolloutBuffer":
        return cls(
            obs=np.zeros((horizon, n_envs, obs_dim)),
            actions=np.zeros((horizon, n_envs, act_dim)),
            log_probs=np.zeros((horizon, n_envs)),
            values=np.zeros((horizon, n_envs)),
            rewards=np.zeros((horizon, n_envs)),
            dones=np.zeros((horizon, n_envs), dtype=bool),
        )


def ppo_surrogate(log_prob_new, log_prob_old, advantage, clip: float):
    """Elementwise clipped surrogate ``min(r A, clip(r, 1-e, 1+e) A)``."""
    ratio = np.exp(np.asarray(log_prob_new, dtype=float) - np.asarray(log_prob_old, dtype=float))
    advantage = np.asarray(advantage, dtype=float)
    out = np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantage)
    return float(out) if out.ndim == 0 else out


def surrogate_grad(log_prob_new, log_prob_old, advantage, clip: float):
    """d/d(log_prob_new) of the elementwise surrogate (zero where the clipped branch binds)."""
    ratio = np.exp(log_prob_new - log_prob_old)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantage
    return np.where(unclipped <= clipped, unclipped, 0.0)


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_loss_and_grads(actor: MlpParams, critic: MlpParams, obs, actions, old_log_probs, advantages,
                       returns, config: PpoConfig):
    """Total loss ``-surrogate + vf_coef * value_loss - ent_coef * entropy`` (batch means)
    and its exact gradients for both networks."""
    n = len(obs)
    mean, a_cache = forward(actor, obs)
    log_std = clamped_log_std(actor)
    logp = gaussian_log_prob(actions, mean, log_std)
    surr = ppo_surrogate(logp, old_log_probs, advantages, config.clip)
    entropy = float(gaussian_entropy(log_std))
    value, c_cache = forward(critic, obs)
    v = value[:, 0]
    value_loss = 0.5 * float(np.mean((v - returns) ** 2))
    policy_loss = -float(np.mean(surr))
    loss = policy_loss + config.vf_coef * value_loss
    if config.ent_coef != 0:
        loss -= config.ent_coef * entropy

    # dloss/dlogp per row, then through the Gaussian
    dlogp = -surrogate_grad(logp, old_log_probs, advantages, config.clip) / n
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    g_mean = dlogp[:, None] * diff * inv_var
    g_actor = backward(actor, a_cache, g_mean)
    g_log_std = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    if config.ent_coef != 0:
        g_log_std = g_log_std - config.ent_coef
    inside = (actor.log_std >= LOG_STD_MIN) & (actor.log_std <= LOG_STD_MAX)
    g_actor.log_std = np.where(inside, g_log_std, 0.0).astype(actor.log_std.dtype)
    g_critic = backward(critic, c_cache, (config.vf_coef * (v - returns) / n)[:, None])

    ratio = np.exp(logp - old_log_probs)
    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(old_log_probs - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip)),
    }
    return loss, g_actor, g_critic, stats


class PpoTrainer:
    """Actor, critic, optimizer and rollout state for one vectorized environment.

    ``env`` needs ``reset()``, ``step(raw_actions)``, ``obs_dim``, ``act_dim``,
    ``n_envs`` and ``state_dict()/load_state_dict()``.
    """

    def __init__(self, env, config: PpoConfig, seed: int = 0, amp: AmpModule | None = None,
                 amp_weights: tuple[float, float] | None = None):
        if env.n_envs != config.num_envs:
            raise ValueError(f"config expects {config.num_envs} envs, got {env.n_envs}")
        self.env = env
        self.config = config
        self.rng = np.random.default_rng(seed)
        dtype = np.dtype(config.dtype)
        self.actor = mlp_init(env.obs_dim, env.act_dim, self.rng, config.hidden, with_log_std=True, dtype=dtype,
                              output_scale=config.actor_output_scale)
        self.actor.log_std[:] = config.init_log_std
        self.critic = mlp_init(env.obs_dim, 1, self.rng, config.hidden, dtype=dtype)
        self.actor_opt = Adam(self.actor.arrays(), lr=config.learning_rate, max_grad_norm=config.max_grad_norm)
        self.critic_opt = Adam(self.critic.arrays(), lr=config.learning_rate, max_grad_norm=config.max_grad_norm)
        self.obs_norm = RunningMeanStd(env.obs_dim) if config.normalize_observations else None
        self.amp = amp
        if amp is not None:
            w = amp_weights or (amp.config.w_task, amp.config.w_style)
            self.amp_weights = w
        self.iteration = 0
        self.progress = 0.0
        self.obs = env.reset()

    def set_action_offset(self, raw_offset):
        """Start the policy mean at ``raw_offset`` (e.g. the ready pose / pi)."""
        self.actor.biases[-1][...] = raw_offset

    def _params(self) -> list[np.ndarray]:
        return self.actor.arrays() + self.critic.arrays()

    def _prep(self, obs):
        return obs if self.obs_norm is None else self.obs_norm.normalize(obs)

    def act(self, obs, deterministic: bool = False, rng: np.random.Generator | None = None):
        """Raw (unscaled) actions for a batch of observations."""
        mean, _ = forward(self.actor, self._prep(obs))
        if deterministic:
            return mean.astype(float)
        rng = rng or self.rng
        return mean + np.exp(clamped_log_std(self.actor)) * rng.standard_normal(mean.shape)

    def value(self, obs):
        v, _ = forward(self.critic, self._prep(obs))
        return v[..., 0].astype(float)

    # ------------------------------------------------------------------
    def collect(self) -> tuple[RolloutBuffer, dict]:
        cfg, env = self.config, self.env
        if hasattr(env, "progress"):
            env.progress = self.progress
        buf = RolloutBuffer.allocate(cfg.horizon, env.n_envs, env.obs_dim, env.act_dim)
        feats = [] if self.amp is not None else None
        episodes, task_rewards = [], np.zeros((cfg.horizon, env.n_envs))
        log_std = clamped_log_std(self.actor)
        obs = self.obs
        for t in range(cfg.horizon):
            if self.obs_norm is not None:
                self.obs_norm.update(obs)
            x = self._prep(obs)
            mean, _ = forward(self.actor, x)
            v, _ = forward(self.critic, x)
            action = mean + np.exp(log_std) * self.rng.standard_normal(mean.shape)
            logp = gaussian_log_prob(action, mean, log_std)
            next_obs, reward, done, info = env.step(action)
            reward = np.asarray(reward, dtype=float)
            task_rewards[t] = reward
            if self.amp is not None:
                f = info["amp_features"]
                feats.append(f)
                w_task, w_style = self.amp_weights
                reward = w_task * reward + w_style * self.amp.reward(f)
            if cfg.bootstrap_timeouts:
                trunc = np.asarray(info.get("timeout", np.zeros(env.n_envs, bool))) & np.asarray(done)
                trunc &= ~np.asarray(info.get("fell", np.zeros(env.n_envs, bool)))
                if np.any(trunc):
                    reward = reward + cfg.gamma * np.where(trunc, self.value(info["final_obs"]), 0.0)
            buf.obs[t] = x
            buf.actions[t] = action
            buf.log_probs[t] = logp
            buf.values[t] = v[:, 0]
            buf.rewards[t] = reward
            buf.dones[t] = done
            episodes.extend(info.get("episodes", []))
            obs = next_obs
        self.obs = obs
        buf.bootstrap_values = self.value(obs)
        if feats is not None:
            buf.amp_features = np.stack(feats)
        if not np.all(np.isfinite(buf.rewards)):
            raise NumericalDivergence("non-finite reward in rollout")
        stats = {"mean_step_reward": float(buf.rewards.mean()),
                 "mean_task_reward": float(task_rewards.mean()),
                 "episodes": len(episodes)}
        if episodes:
            stats["mean_return"] = float(np.mean([e["return"] for e in episodes]))
            stats["mean_length"] = float(np.mean([e["length"] for e in episodes]))
            stats["fell_fraction"] = float(np.mean([e.get("fell", False) for e in episodes]))
        else:
            stats["mean_return"] = None
        return buf, stats

    def update(self, buf: RolloutBuffer) -> dict:
        cfg = self.config
        adv, returns = compute_gae(buf.rewards, buf.values, buf.dones, buf.bootstrap_values,
                                   cfg.gamma, cfg.gae_lambda)
        n = adv.size
        obs = buf.obs.reshape(n, -1)
        actions = buf.actions.reshape(n, -1)
        old_logp = buf.log_probs.reshape(n)
        adv = adv.reshape(n)
        returns = returns.reshape(n)
        if cfg.normalize_advantages:
            adv = normalize_advantages(adv)
        mb = min(cfg.minibatch_size, n)
        history, critic_only = [], []
        epochs_done = 0
        stop = False
        # Past the KL limit the actor is frozen; the critic still gets every mini-epoch.
        for _ in range(cfg.mini_epochs):
            perm = self.rng.permutation(n)
            for start in range(0, n - mb + 1, mb):
                idx = perm[start:start + mb]
                loss, g_actor, g_critic, stats = ppo_loss_and_grads(
                    self.actor, self.critic, obs[idx], actions[idx], old_logp[idx], adv[idx],
                    returns[idx], cfg)
                if not np.isfinite(loss):
                    raise NumericalDivergence("PPO loss became non-finite")
                stats["critic_grad_norm"] = self.critic_opt.step(self.critic.arrays(), g_critic.arrays())
                if not stop:
                    stats["grad_norm"] = self.actor_opt.step(self.actor.arrays(), g_actor.arrays())
                    history.append(stats)
                    if cfg.target_kl is not None and stats["approx_kl"] > cfg.target_kl:
                        stop = True
                else:
                    critic_only.append(stats)
            if not stop:
                epochs_done += 1
        if not (self.actor.is_finite() and self.critic.is_finite()):
            raise NumericalDivergence("network parameters became non-finite")
        out = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
        if critic_only:
            # value statistics over every critic step
            for k in ("value_loss", "critic_grad_norm"):
                out[k] = float(np.mean([h[k] for h in history + critic_only]))
        out["epochs"] = epochs_done
        out["actor_minibatches"] = len(history)
        out["early_stop"] = stop
        return out

    def train_iteration(self) -> dict:
        t0 = time.perf_counter()
        buf, stats = self.collect()
        stats.update(self.update(buf))
        if self.amp is not None:
            recent = buf.amp_features.reshape(-1, buf.amp_features.shape[-1])
            stats.update(self.amp.update(self.rng, recent))
            self.amp.add_policy_features(recent)
            stats["mean_style_reward"] = float(np.mean(self.amp.reward(recent)))
        self.iteration += 1
        stats["iteration"] = self.iteration
        stats["wall_time"] = time.perf_counter() - t0
        return stats

    # ------------------------------------------------------------------
    def state_dict(self) -> dict:
        d = {
            "actor": [a.copy() for a in self.actor.arrays()],
            "critic": [a.copy() for a in self.critic.arrays()],
            "actor_opt": self.actor_opt.state_dict(),
            "critic_opt": self.critic_opt.state_dict(),
            "rng": self.rng.bit_generator.state,
            "iteration": self.iteration,
            "progress": self.progress,
            "obs": self.obs.copy(),
            "env": self.env.state_dict(),
        }
        if self.obs_norm is not None:
            d["obs_norm"] = self.obs_norm.state_dict()
        if self.amp is not None:
            d["amp"] = self.amp.state_dict()
        return d

    def load_state_dict(self, d: dict, policy_only: bool = False):
        """Restore a snapshot.  ``policy_only`` copies the networks (and obs
        normalizer) but keeps this trainer's optimizer, rng and environments,
        which is how a curriculum stage starts from the previous one."""
        for a, b in zip(self.actor.arrays(), d["actor"]):
            a[...] = b
        for a, b in zip(self.critic.arrays(), d["critic"]):
            a[...] = b
        if self.obs_norm is not None and "obs_norm" in d:
            self.obs_norm.load_state_dict(d["obs_norm"])
        if self.amp is not None and "amp" in d:
            self.amp.load_state_dict(d["amp"])
        if policy_only:
            return
        self.actor_opt.load_state_dict(d["actor_opt"])
        self.critic_opt.load_state_dict(d["critic_opt"])
        self.rng.bit_generator.state = d["rng"]
        self.iteration = int(d["iteration"])
        self.progress = float(d["progress"])
        self.env.load_state_dict(d["env"])
        self.obs = np.array(d["obs"])


def train_iteration(trainer: PpoTrainer) -> dict:
    return trainer.train_iteration()
