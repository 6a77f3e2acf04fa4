"""Kinematic and inertial description of the planar Bez robot.

Conventions
-----------
The world is the sagittal (x, z) plane, x forward and z up.  Every link has an
absolute angle ``phi`` measured counter-clockwise.  A link's *axis* points
down (``axis=+1``, legs and arms) or up (``axis=-1``, torso and head); at
``phi = 0`` a down-link hangs vertically.  Points on a link are given in
local ``(forward, along_axis)`` coordinates.

Positive hip pitch swings the thigh forward, a negative knee angle folds the
shank back, which is how the ready pose (hip 0.564, knee -1.176,
ankle 0.613) reads as a crouch with the feet flat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from bezgym.config import load_toml
from bezgym.errors import ValidationError

RPM = 2.0 * math.pi / 60.0
DEG = math.pi / 180.0


@dataclass(frozen=True)
class MotorSpec:
    stall_torque: float
    no_load_speed: float
    position_resolution: float
    kp: float = 8.0
    kd: float = 0.2

    def __post_init__(self):
        if self.stall_torque <= 0 or self.no_load_speed <= 0:
            raise ValidationError("motor stall torque and no-load speed must be positive")
        if self.kp <= 0 or self.kd < 0:
            raise ValidationError("motor gains need kp > 0 and kd >= 0")


MX28 = MotorSpec(stall_torque=2.5, no_load_speed=55 * RPM, position_resolution=0.33 * DEG)
AX12 = MotorSpec(stall_torque=1.5, no_load_speed=59 * RPM, position_resolution=0.29 * DEG)


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float
    length: float
    com_offset: float
    inertia: float
    axis: int = 1  # +1 hangs down from its joint, -1 points up

    def __post_init__(self):
        if self.mass <= 0 or self.inertia <= 0:
            raise ValidationError(f"link {self.name!r}: mass and inertia must be positive")
        if not 0 <= self.com_offset <= self.length:
            raise ValidationError(f"link {self.name!r}: com_offset outside [0, length]")
        if self.axis not in (1, -1):
            raise ValidationError(f"link {self.name!r}: axis must be +1 or -1")


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: int
    child: int
    anchor: float  # distance along the parent axis
    limit_lo: float
    limit_hi: float
    motor: MotorSpec

    def __post_init__(self):
        if not self.limit_lo < self.limit_hi:
            raise ValidationError(f"joint {self.name!r}: limit_lo must be below limit_hi")


@dataclass(frozen=True)
class RobotModel:
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    # link id -> (n_points, 2) array of (forward, along_axis) points
    foot_contact_points: dict[int, np.ndarray]
    ready_pose: np.ndarray
    torso_link_id: int = 0
    head_link_id: int = 9
    imu_point: tuple[float, float] = (0.0, 0.15)
    # (link id, segment start, segment end) in local coords; the ball collides with these
    strike_segments: tuple[tuple[int, tuple[float, float], tuple[float, float]], ...] = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ready = np.asarray(self.ready_pose, dtype=float)
        object.__setattr__(self, "ready_pose", ready)
        if ready.shape != (len(self.joints),):
            raise ValidationError("ready_pose must have one angle per joint")
        for j, angle in zip(self.joints, ready):
            if not j.limit_lo <= angle <= j.limit_hi:
                raise ValidationError(f"ready angle of {j.name!r} lies outside its limits")
        for j in self.joints:
            if not (0 <= j.parent < len(self.links) and 0 < j.child < len(self.links)):
                raise ValidationError(f"joint {j.name!r} references a missing link")
        for link_id, pts in self.foot_contact_points.items():
            if np.shape(pts) != (2, 2):
                raise ValidationError("planar feet carry exactly 2 contact points (toe, heel)")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    N = n_joints

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def total_mass(self) -> float:
        return float(sum(link.mass for link in self.links))

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    @property
    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.limit_lo for j in self.joints])
        hi = np.array([j.limit_hi for j in self.joints])
        return lo, hi

    def motor_arrays(self) -> dict[str, np.ndarray]:
        ms = [j.motor for j in self.joints]
        return {
            "stall_torque": np.array([m.stall_torque for m in ms]),
            "no_load_speed": np.array([m.no_load_speed for m in ms]),
            "position_resolution": np.array([m.position_resolution for m in ms]),
            "kp": np.array([m.kp for m in ms]),
            "kd": np.array([m.kd for m in ms]),
        }

    def contact_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened contact points: (link ids, local points) ordered by foot."""
        ids, pts = [], []
        for link_id in sorted(self.foot_contact_points):
            for p in np.asarray(self.foot_contact_points[link_id], dtype=float):
                ids.append(link_id)
                pts.append(p)
        return np.array(ids, dtype=int), np.array(pts, dtype=float).reshape(-1, 2)

    def with_overrides(self, *, link_mass_scale=None, motor_gain_scale=None) -> "RobotModel":
        """Copy with per-link mass and/or per-joint PD gain multipliers (inertia scales with mass)."""
        links = self.links
        joints = self.joints
        if link_mass_scale is not None:
            links = tuple(
                replace(link, mass=link.mass * s, inertia=link.inertia * s)
                for link, s in zip(links, np.broadcast_to(link_mass_scale, (len(links),)))
            )
        if motor_gain_scale is not None:
            joints = tuple(
                replace(j, motor=replace(j.motor, kp=j.motor.kp * s, kd=j.motor.kd * s))
                for j, s in zip(joints, np.broadcast_to(motor_gain_scale, (len(joints),)))
            )
        return replace(self, links=links, joints=joints, _cache={})


def _rod_inertia(mass, length, width):
    return mass * (length**2 + width**2) / 12.0


# Joint order is fixed; everything downstream (observations, actions, clips) uses it.
JOINT_NAMES = (
    "right_hip", "right_knee", "right_ankle",
    "left_hip", "left_knee", "left_ankle",
    "right_shoulder", "left_shoulder",
    "head",
)

CANONICAL_MODEL_TOML = """
# Planar (sagittal) Bez analog: 10 links, 9 joints, 2.3 kg, ~0.50 m tall.
[robot]
torso = "torso"
head = "head"
imu_point = [0.0, 0.15]
ready_pose = [0.564, -1.176, 0.613, 0.564, -1.176, 0.613, 1.5, 1.5, 0.0]

[motors.MX28]
stall_torque = 2.5          # N m
no_load_speed_rpm = 55.0
position_resolution_deg = 0.33
kp = 8.0                    # N m / rad
kd = 0.2                    # N m s / rad

[motors.AX12]
stall_torque = 1.5
no_load_speed_rpm = 59.0
position_resolution_deg = 0.29
kp = 8.0
kd = 0.2

# mass fractions: torso 40 %, each leg link 8 %, each arm 4 %, head 4 %
[[links]]
name = "torso"
mass = 0.92
length = 0.20
com_offset = 0.11
width = 0.10
axis = -1
[[links]]
name = "right_thigh"
mass = 0.184
length = 0.11
com_offset = 0.055
width = 0.04
[[links]]
name = "right_shank"
mass = 0.184
length = 0.11
com_offset = 0.055
width = 0.04
[[links]]
name = "right_foot"
mass = 0.184
length = 0.03
com_offset = 0.02
width = 0.10
[[links]]
name = "left_thigh"
mass = 0.184
length = 0.11
com_offset = 0.055
width = 0.04
[[links]]
name = "left_shank"
mass = 0.184
length = 0.11
com_offset = 0.055
width = 0.04
[[links]]
name = "left_foot"
mass = 0.184
length = 0.03
com_offset = 0.02
width = 0.10
[[links]]
name = "right_arm"
mass = 0.092
length = 0.16
com_offset = 0.08
width = 0.03
[[links]]
name = "left_arm"
mass = 0.092
length = 0.16
com_offset = 0.08
width = 0.03
[[links]]
name = "head"
mass = 0.092
length = 0.085
com_offset = 0.045
width = 0.08
axis = -1

[[joints]]
name = "right_hip"
parent = "torso"
child = "right_thigh"
anchor = 0.0
limits = [-2.6, 2.6]
motor = "MX28"
[[joints]]
name = "right_knee"
parent = "right_thigh"
child = "right_shank"
anchor = 0.11
limits = [-2.6, 0.2]
motor = "MX28"
[[joints]]
name = "right_ankle"
parent = "right_shank"
child = "right_foot"
anchor = 0.11
limits = [-2.6, 2.6]
motor = "MX28"
[[joints]]
name = "left_hip"
parent = "torso"
child = "left_thigh"
anchor = 0.0
limits = [-2.6, 2.6]
motor = "MX28"
[[joints]]
name = "left_knee"
parent = "left_thigh"
child = "left_shank"
anchor = 0.11
limits = [-2.6, 0.2]
motor = "MX28"
[[joints]]
name = "left_ankle"
parent = "left_shank"
child = "left_foot"
anchor = 0.11
limits = [-2.6, 2.6]
motor = "MX28"
[[joints]]
name = "right_shoulder"
parent = "torso"
child = "right_arm"
anchor = 0.18
limits = [-2.6, 2.6]
motor = "AX12"
[[joints]]
name = "left_shoulder"
parent = "torso"
child = "left_arm"
anchor = 0.18
limits = [-2.6, 2.6]
motor = "AX12"
[[joints]]
name = "head"
parent = "torso"
child = "head"
anchor = 0.20
limits = [-2.6, 2.6]
motor = "AX12"

# (forward, along_axis) points on each foot: toe then heel
[contact_points]
right_foot = [[0.065, 0.03], [-0.035, 0.03]]
left_foot = [[0.065, 0.03], [-0.035, 0.03]]

# segments the ball can hit: [link, [start], [end]]
[[strike_segments]]
link = "right_shank"
start = [0.0, 0.0]
end = [0.0, 0.11]
[[strike_segments]]
link = "right_foot"
start = [-0.035, 0.03]
end = [0.065, 0.03]
[[strike_segments]]
link = "left_shank"
start = [0.0, 0.0]
end = [0.0, 0.11]
[[strike_segments]]
link = "left_foot"
start = [-0.035, 0.03]
end = [0.065, 0.03]
"""


def model_from_dict(cfg: dict) -> RobotModel:
    """Build a :class:`RobotModel` from a parsed robot config mapping."""
    try:
        motors = {}
        for name, m in cfg["motors"].items():
            motors[name] = MotorSpec(
                stall_torque=float(m["stall_torque"]),
                no_load_speed=float(m["no_load_speed_rpm"]) * RPM,
                position_resolution=float(m["position_resolution_deg"]) * DEG,
                kp=float(m.get("kp", 8.0)),
                kd=float(m.get("kd", 0.2)),
            )
        links = []
        for entry in cfg["links"]:
            inertia = entry.get("inertia")
            if inertia is None:
                inertia = _rod_inertia(entry["mass"], entry["length"], entry.get("width", 0.0))
            links.append(LinkSpec(
                name=entry["name"], mass=float(entry["mass"]), length=float(entry["length"]),
                com_offset=float(entry["com_offset"]), inertia=float(inertia),
                axis=int(entry.get("axis", 1)),
            ))
        index = {link.name: i for i, link in enumerate(links)}
        joints = []
        for entry in cfg["joints"]:
            lo, hi = entry["limits"]
            joints.append(JointSpec(
                name=entry["name"], parent=index[entry["parent"]], child=index[entry["child"]],
                anchor=float(entry["anchor"]), limit_lo=float(lo), limit_hi=float(hi),
                motor=motors[entry["motor"]],
            ))
        robot = cfg["robot"]
        contacts = {index[k]: np.asarray(v, dtype=float) for k, v in cfg["contact_points"].items()}
        segments = tuple(
            (index[s["link"]], tuple(map(float, s["start"])), tuple(map(float, s["end"])))
            for s in cfg.get("strike_segments", [])
        )
    except KeyError as exc:
        raise ValidationError(f"robot config is missing or references unknown key {exc}", str(exc)) from exc
    _check_tree(links, joints)
    return RobotModel(
        links=tuple(links),
        joints=tuple(joints),
        foot_contact_points=contacts,
        ready_pose=np.asarray(robot["ready_pose"], dtype=float),
        torso_link_id=index[robot.get("torso", "torso")],
        head_link_id=index[robot["head"]] if robot.get("head") else index[robot.get("torso", "torso")],
        imu_point=tuple(robot.get("imu_point", (0.0, 0.15))),
        strike_segments=segments,
    )


def _check_tree(links, joints):
    children = [j.child for j in joints]
    if len(set(children)) != len(children) or 0 in children:
        raise ValidationError("joints must form a tree rooted at link 0")
    for k, j in enumerate(joints):
        if j.child != k + 1 or j.parent >= j.child:
            raise ValidationError("joint k must attach link k+1 to an earlier link")
    if len(links) != len(joints) + 1:
        raise ValidationError("a tree with N joints has N+1 links")


def load_model(path) -> RobotModel:
    return model_from_dict(load_toml(path))


def build_canonical_model() -> RobotModel:
    """The embedded 9-joint planar Bez analog."""
    return model_from_dict(load_toml(text=CANONICAL_MODEL_TOML))
