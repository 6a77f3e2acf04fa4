"""Sagittal-plane rigid-body simulation of the Bez analog."""
from bezgym.dynamics.model import (
    AX12, MX28, JOINT_NAMES, JointSpec, LinkSpec, MotorSpec, RobotModel,
    build_canonical_model, load_model, model_from_dict,
)
from bezgym.dynamics.simulator import (
    CONTROL_DT, ContactParams, WorldState, com_position, com_velocity, contact_force,
    contact_point_positions, imu_kinematics, link_com_positions, make_world, pd_torque,
    point_positions, standing_pelvis_height, step, torque_limit, torso_com_height, total_energy,
)

__all__ = [
    "AX12", "MX28", "JOINT_NAMES", "JointSpec", "LinkSpec", "MotorSpec", "RobotModel",
    "build_canonical_model", "load_model", "model_from_dict",
    "CONTROL_DT", "ContactParams", "WorldState", "com_position", "com_velocity", "contact_force",
    "contact_point_positions", "imu_kinematics", "link_com_positions", "make_world", "pd_torque",
    "point_positions", "standing_pelvis_height", "step", "torque_limit", "torso_com_height",
    "total_energy",
]
