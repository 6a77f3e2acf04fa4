"""IMU emulation and binary foot-contact detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from bezgym.dynamics.simulator import WorldState, contact_point_positions

STANDARD_GRAVITY = 9.81


@dataclass(frozen=True)
class ImuNoiseSpec:
    """Gaussian noise levels as fractions of each channel's full-scale range.

    Defaults are the LSM6DSOX noise percentages at +/-4 g and +/-2000 deg/s.
    """

    accel_noise_frac: float = 0.00203
    gyro_noise_frac: float = 0.00804
    accel_full_scale: float = 4 * STANDARD_GRAVITY
    gyro_full_scale: float = math.radians(2000.0)
    include_gravity: bool = True
    bias_walk_std: float = 0.0  # accel bias random walk, (m/s^2)/sqrt(s); 0 disables

    def __post_init__(self):
        if self.accel_noise_frac < 0 or self.gyro_noise_frac < 0:
            raise ValueError("noise fractions must be non-negative")
        if self.accel_full_scale <= 0 or self.gyro_full_scale <= 0:
            raise ValueError("full-scale ranges must be positive")

    @property
    def accel_sigma(self) -> float:
        return self.accel_noise_frac * self.accel_full_scale

    @property
    def gyro_sigma(self) -> float:
        return self.gyro_noise_frac * self.gyro_full_scale

    def scaled(self, factor: float) -> "ImuNoiseSpec":
        return replace(self, accel_noise_frac=self.accel_noise_frac * factor,
                       gyro_noise_frac=self.gyro_noise_frac * factor)


NOISELESS = ImuNoiseSpec(accel_noise_frac=0.0, gyro_noise_frac=0.0)


@dataclass
class ImuSample:
    linear_acceleration: np.ndarray  # (..., 2) x, z in m/s^2
    angular_velocity: np.ndarray     # (...,) pitch rate in rad/s
    linear_velocity: np.ndarray      # (..., 2) m/s


def imu_read(v_now, v_prev, omega, dt, noise: ImuNoiseSpec, rng: np.random.Generator,
             bias=None, noise_scale=1.0) -> ImuSample:
    """Finite-difference accelerometer plus gyro, each with additive Gaussian noise.

    Acceleration is reported as specific force in the world frame, so a sensor
    at rest reads +g on z.  ``noise_scale`` (scalar or per-row array) multiplies
    both standard deviations.  Noise is drawn accel first, then gyro.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_now = np.asarray(v_now, dtype=float)
    v_prev = np.asarray(v_prev, dtype=float)
    omega = np.asarray(omega, dtype=float)
    accel = (v_now - v_prev) / dt
    if noise.include_gravity:
        accel = accel + np.array([0.0, STANDARD_GRAVITY])
    if bias is not None:
        accel = accel + bias
    scale = np.asarray(noise_scale, dtype=float)
    if noise.accel_sigma > 0:
        accel = accel + rng.standard_normal(accel.shape) * (noise.accel_sigma * scale)[..., None]
    gyro = omega
    if noise.gyro_sigma > 0:
        gyro = omega + rng.standard_normal(omega.shape) * noise.gyro_sigma * scale
    return ImuSample(linear_acceleration=accel, angular_velocity=gyro, linear_velocity=v_now)


def drift_bias(bias, noise: ImuNoiseSpec, dt, rng: np.random.Generator):
    """One step of the optional accelerometer bias random walk."""
    if noise.bias_walk_std <= 0:
        return bias
    return bias + rng.standard_normal(np.shape(bias)) * noise.bias_walk_std * math.sqrt(dt)


def foot_contacts(world: WorldState, model, threshold: float = 1e-3) -> np.ndarray:
    """+1 for every foot contact point at or below ``threshold`` height, else -1.

    Order is (right toe, right heel, left toe, left heel) for the canonical model.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    z = contact_point_positions(model, world)[..., 1]
    return np.where(z <= threshold, 1.0, -1.0)


def to_corner_layout(contacts) -> np.ndarray:
    """Expand planar toe/heel flags to the 8-corner (4 per foot) layout.

    Each planar point stands for the inner and outer corner at that fore/aft
    position, so every flag is duplicated.
    """
    return np.repeat(np.asarray(contacts), 2, axis=-1)
