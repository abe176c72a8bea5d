"""Batched rigid-body hand/object simulation."""

from .hand import FKResult, HandModel, default_hand
from .rotation import (
    quat_angle_about_axis,
    quat_conj,
    quat_exp,
    quat_from_axis_angle,
    quat_identity,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_rotate_inv,
    quat_to_mat,
    rpy_to_mat,
)
from .world import (
    PALM_SENTINEL,
    ContactBatch,
    ContactEvent,
    PhysicsConfig,
    ShapeTable,
    World,
    pd_torque,
)

__all__ = [
    "FKResult",
    "HandModel",
    "default_hand",
    "quat_angle_about_axis",
    "quat_conj",
    "quat_exp",
    "quat_from_axis_angle",
    "quat_identity",
    "quat_mul",
    "quat_normalize",
    "quat_rotate",
    "quat_rotate_inv",
    "quat_to_mat",
    "rpy_to_mat",
    "PALM_SENTINEL",
    "ContactBatch",
    "ContactEvent",
    "PhysicsConfig",
    "ShapeTable",
    "World",
    "pd_torque",
]
