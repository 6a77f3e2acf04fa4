"""Per-episode domain randomization of physical and sensor parameters."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from bezgym.dynamics.model import RobotModel
from bezgym.dynamics.simulator import BatchPhysics, ContactParams

MIN_FRACTION = 0.01  # perturbed values are clamped to at least this fraction of base


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float
    friction: float
    link_masses: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    sensor_noise_scale: float = 1.0

    @classmethod
    def nominal(cls, model: RobotModel, contact: ContactParams = ContactParams()) -> "PhysicsParams":
        motors = model.motor_arrays()
        return cls(
            gravity=contact.gravity,
            friction=contact.mu,
            link_masses=np.array([l.mass for l in model.links]),
            kp=motors["kp"],
            kd=motors["kd"],
        )

    def validate(self):
        if self.gravity <= 0 or self.friction < 0 or self.sensor_noise_scale < 0:
            raise ValueError("physics params need gravity > 0, friction >= 0, noise scale >= 0")
        if np.any(self.link_masses <= 0) or np.any(self.kp <= 0) or np.any(self.kd < 0):
            raise ValueError("link masses and kp must be positive, kd non-negative")


@dataclass(frozen=True)
class DomainRandSpec:
    """Relative Gaussian standard deviations, resampled once per episode."""

    gravity: float = 0.02
    friction: float = 0.10
    link_masses: float = 0.05
    pd_gains: float = 0.10
    sensor_noise: float = 0.0

    def __post_init__(self):
        for name, v in vars(self).items():
            if not v >= 0:
                raise ValueError(f"randomization std {name!r} must be non-negative")

    @classmethod
    def off(cls) -> "DomainRandSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def _perturb(base, std, rng, size=None):
    """base * (1 + N(0, std)), clamped to MIN_FRACTION * base.  Always consumes draws."""
    z = rng.standard_normal(size)
    if std == 0:
        return base
    out = base * (1.0 + std * z)
    return np.maximum(out, MIN_FRACTION * base)


def apply_randomization(base: PhysicsParams, spec: DomainRandSpec,
                        rng: np.random.Generator) -> PhysicsParams:
    """Draw one perturbed parameter set.

    Draw order is fixed: gravity, friction, one per link mass, one per joint
    gain (kp and kd share the draw), sensor noise scale.  The same number of
    normals is consumed whatever the stds, so enabling one parameter never
    shifts the others' streams.
    """
    n_links, n_joints = len(base.link_masses), len(base.kp)
    gravity = _perturb(base.gravity, spec.gravity, rng)
    friction = _perturb(base.friction, spec.friction, rng)
    masses = _perturb(base.link_masses, spec.link_masses, rng, n_links)
    gain_z = rng.standard_normal(n_joints)
    noise = _perturb(base.sensor_noise_scale, spec.sensor_noise, rng)
    kp, kd = base.kp, base.kd
    if spec.pd_gains != 0:
        factor = np.maximum(1.0 + spec.pd_gains * gain_z, MIN_FRACTION)
        kp, kd = base.kp * factor, base.kd * factor
    return replace(base, gravity=float(gravity), friction=float(friction), link_masses=masses,
                   kp=kp, kd=kd, sensor_noise_scale=float(noise))


def to_batch_physics(params: list[PhysicsParams], model: RobotModel) -> BatchPhysics:
    """Stack parameter sets into the per-row overrides understood by the simulator."""
    nominal = PhysicsParams.nominal(model)
    return BatchPhysics(
        gravity=np.array([p.gravity for p in params]),
        mu=np.array([p.friction for p in params]),
        mass_scale=np.stack([p.link_masses / nominal.link_masses for p in params]),
        gain_scale=np.stack([p.kp / nominal.kp for p in params]),
    )
