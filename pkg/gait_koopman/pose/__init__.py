"""Pose layer: SMPL shape/pose value types and rotation conversions."""

from gait_koopman.pose.rotations import (
    log_map_torch,
    nearest_rotation,
    nearest_rotations,
    rotation_from_triple,
    rotations_from_triples,
    triple_from_rotation,
    triples_from_rotations,
)
from gait_koopman.pose.types import (
    FRAME_DIM,
    NUM_JOINTS,
    POSE_DIM,
    SHAPE_DIM,
    LabeledSequence,
    PoseFrame,
    PoseSequence,
    RotationFrame,
    ShapeVector,
    flatten_frame,
    pose_frames_from_vectors,
    unflatten_frame,
)

__all__ = [
    "FRAME_DIM",
    "NUM_JOINTS",
    "POSE_DIM",
    "SHAPE_DIM",
    "LabeledSequence",
    "PoseFrame",
    "PoseSequence",
    "RotationFrame",
    "ShapeVector",
    "flatten_frame",
    "log_map_torch",
    "nearest_rotation",
    "nearest_rotations",
    "pose_frames_from_vectors",
    "rotation_from_triple",
    "rotations_from_triples",
    "triple_from_rotation",
    "triples_from_rotations",
    "unflatten_frame",
]
