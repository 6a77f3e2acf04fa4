"""Vectorized runner stepping many independent environments as one batch."""
from __future__ import annotations

from dataclasses import fields

import numpy as np

from bezgym.dynamics.model import RobotModel
from bezgym.dynamics.simulator import (
    CONTROL_DT, BatchPhysics, ContactParams, WorldState, com_position, com_velocity,
    contact_point_positions,
)
from bezgym.envs.core import EpisodeState, batch_states, env_step, reset, scale_action
from bezgym.envs.task import SensorConfig, TaskSpec, observation_size
from bezgym.envs.trajectory import Trajectory
from bezgym.orchestration.randomization import (
    DomainRandSpec, PhysicsParams, apply_randomization, to_batch_physics,
)
from bezgym.rl.amp import amp_features_from


class VecEnv:
    """``n_envs`` environments with their own rng streams, auto-reset on done.

    Each environment owns a generator spawned from ``seed`` that drives its
    resets (goal draws, randomization); per-step sensor noise for the whole
    batch comes from one extra spawned generator.  Results therefore depend
    only on ``seed`` and the action sequence.
    """

    def __init__(self, task: TaskSpec, model: RobotModel, n_envs: int, seed: int = 0, *,
                 sensors: SensorConfig | None = None, contact: ContactParams = ContactParams(),
                 randomization: DomainRandSpec | None = None, record: bool = False,
                 amp: bool = False):
        if n_envs <= 0:
            raise ValueError("n_envs must be positive")
        self.task = task
        self.model = model
        self.n_envs = n_envs
        self.sensors = sensors or SensorConfig()
        self.contact = contact
        self.randomization = randomization
        self.record = record
        self.amp = amp
        self.progress = 0.0
        seqs = np.random.SeedSequence(seed).spawn(n_envs + 1)
        self.env_rngs = [np.random.default_rng(s) for s in seqs[:n_envs]]
        self.noise_rng = np.random.default_rng(seqs[-1])
        self._base_params = PhysicsParams.nominal(model, contact)
        self.state: EpisodeState | None = None
        self.obs: np.ndarray | None = None
        self.ep_return = np.zeros(n_envs)
        self.ep_length = np.zeros(n_envs, dtype=np.int64)
        self.trajectories: list[Trajectory | None] = [None] * n_envs
        self.finished: list[Trajectory] = []

    @property
    def obs_dim(self) -> int:
        return observation_size(self.task, self.model.n_joints)

    @property
    def act_dim(self) -> int:
        return self.model.n_joints

    # ------------------------------------------------------------------
    def _reset_one(self, i: int) -> tuple[EpisodeState, np.ndarray]:
        rng = self.env_rngs[i]
        phys, noise_scale = None, 1.0
        if self.randomization is not None:
            p = apply_randomization(self._base_params, self.randomization, rng)
            phys = to_batch_physics([p], self.model)
            noise_scale = p.sensor_noise_scale
        return reset(self.task, self.model, rng, self.sensors, noise_scale=noise_scale, phys=phys)

    def reset(self) -> np.ndarray:
        pairs = [self._reset_one(i) for i in range(self.n_envs)]
        self.state = batch_states([s for s, _ in pairs])
        self.obs = np.stack([o for _, o in pairs])
        self.ep_return[:] = 0
        self.ep_length[:] = 0
        if self.record:
            for i in range(self.n_envs):
                self._start_traj(i)
        return self.obs.copy()

    def _start_traj(self, i: int):
        st = self.state
        traj = Trajectory(task=self.task.kind.value, goal=tuple(float(v) for v in st.goal[i]))
        traj.append(**_row(self, i), done=0.0, fell=0.0, contacts=_contacts_of(self, i))
        self.trajectories[i] = traj

    def step(self, raw_actions):
        """Scale raw policy outputs, step every environment, reset the finished ones.

        Returns (obs, reward, done, info).  ``info`` holds per-row ``fell``,
        ``timeout`` and ``complete`` flags, the observation each finished row
        ended on (``final_obs``) and a list of finished-episode summaries.
        """
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        targets = scale_action(raw_actions)
        prev_world = self.state.world
        self.state, res = env_step(self.state, self.task, self.model, targets, self.noise_rng,
                                   sensors=self.sensors, params=self.contact, progress=self.progress)
        reward = np.asarray(res.reward, dtype=float)
        done = np.asarray(res.done, dtype=bool)
        self.ep_return += reward
        self.ep_length += 1
        info = {k: res.info[k] for k in ("fell", "timeout", "complete")}
        info["terms"] = res.info["terms"]
        info["final_obs"] = res.observation.copy()
        if self.amp:
            info["amp_features"] = amp_features_from(prev_world.q, self.state.world.q, prev_world.base_pose,
                                                     self.state.world.base_pose, CONTROL_DT)
        episodes = []
        if self.record:
            for i in range(self.n_envs):
                self.trajectories[i].append(
                    **_row(self, i), action=targets[i], reward=reward[i], done=float(done[i]),
                    fell=float(info["fell"][i]), contacts=res.info["contacts"][i])
        obs = res.observation
        idx = np.flatnonzero(done)
        for i in idx:
            episodes.append({
                "env": int(i), "return": float(self.ep_return[i]), "length": int(self.ep_length[i]),
                "fell": bool(info["fell"][i]), "timeout": bool(info["timeout"][i]),
                "complete": bool(info["complete"][i]),
            })
            if self.record:
                self.finished.append(self.trajectories[i])
        if len(idx):
            self._reset_rows(idx, obs)
            self.ep_return[idx] = 0
            self.ep_length[idx] = 0
            if self.record:
                for i in idx:
                    self._start_traj(i)
        self.obs = obs
        info["episodes"] = episodes
        return obs.copy(), reward, done, info

    def _reset_rows(self, idx, obs):
        pairs = [self._reset_one(i) for i in idx]
        sub = batch_states([s for s, _ in pairs])
        st = self.state
        for f in fields(WorldState):
            getattr(st.world, f.name)[idx] = getattr(sub.world, f.name)
        for name in ("goal", "v_prev", "imu_bias", "contact_x", "noise_scale"):
            getattr(st, name)[idx] = getattr(sub, name)
        if st.phys is not None:
            for f in fields(BatchPhysics):
                getattr(st.phys, f.name)[idx] = getattr(sub.phys, f.name)
        obs[idx] = np.stack([o for _, o in pairs])

    # ------------------------------------------------------------------
    def state_dict(self) -> dict:
        """Everything needed to continue stepping bit-identically."""
        st = self.state
        arrays = {f"world.{f.name}": getattr(st.world, f.name).copy() for f in fields(WorldState)}
        for name in ("goal", "v_prev", "imu_bias", "contact_x", "noise_scale"):
            arrays[name] = getattr(st, name).copy()
        if st.phys is not None:
            for f in fields(BatchPhysics):
                arrays[f"phys.{f.name}"] = getattr(st.phys, f.name).copy()
        arrays["obs"] = self.obs.copy()
        arrays["ep_return"] = self.ep_return.copy()
        arrays["ep_length"] = self.ep_length.copy()
        return {
            "arrays": arrays,
            "env_rngs": [r.bit_generator.state for r in self.env_rngs],
            "noise_rng": self.noise_rng.bit_generator.state,
            "progress": self.progress,
        }

    def load_state_dict(self, d: dict):
        a = d["arrays"]
        world = WorldState(**{f.name: np.array(a[f"world.{f.name}"]) for f in fields(WorldState)})
        phys = None
        if "phys.gravity" in a:
            phys = BatchPhysics(**{f.name: np.array(a[f"phys.{f.name}"]) for f in fields(BatchPhysics)})
        self.state = EpisodeState(world=world, phys=phys,
                                  **{k: np.array(a[k]) for k in ("goal", "v_prev", "imu_bias",
                                                                 "contact_x", "noise_scale")})
        self.obs = np.array(a["obs"])
        self.ep_return = np.array(a["ep_return"])
        self.ep_length = np.array(a["ep_length"])
        for r, s in zip(self.env_rngs, d["env_rngs"]):
            r.bit_generator.state = s
        self.noise_rng.bit_generator.state = d["noise_rng"]
        self.progress = float(d["progress"])


def _row(env: VecEnv, i: int) -> dict:
    """Recorded state of row ``i``: world state, whole-body COM and lowest foot point."""
    w = env.state.world.index(i)
    return dict(time=w.time, q=w.q, qd=w.qd, base_pose=w.base_pose, base_vel=w.base_vel,
                ball_pos=w.ball_pos, ball_vel=w.ball_vel, com=com_position(env.model, w),
                com_vel=com_velocity(env.model, w),
                foot_z=np.min(contact_point_positions(env.model, w)[..., 1]))


def _contacts_of(env: VecEnv, i: int) -> np.ndarray:
    from bezgym.sensors import foot_contacts
    return foot_contacts(env.state.world.index(i), env.model, env.task.contact_threshold)
