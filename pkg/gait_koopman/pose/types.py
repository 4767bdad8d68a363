"""Domain types for SMPL shape vectors and pose sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import Logger, getLogger
from typing import Iterable, Sequence

import numpy as np
import torch
from numpy.typing import ArrayLike, NDArray

from gait_koopman.pose.rotations import (
    nearest_rotations,
    rotations_from_triples,
    triples_from_rotations,
)

logger: Logger = getLogger(__name__)

SHAPE_DIM = 10
NUM_JOINTS = 24
POSE_DIM = NUM_JOINTS * 3
FRAME_DIM = NUM_JOINTS * 9
ROTATION_TOLERANCE = 1e-9


def _frozen(array: NDArray[np.float64]) -> NDArray[np.float64]:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ShapeVector:
    """SMPL shape coefficients (10 dimensionless deformation weights).

    Args:
        coefficients: Array of 10 finite reals
    """

    coefficients: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.asarray(self.coefficients, dtype=np.float64)
        if values.shape != (SHAPE_DIM,):
            raise ValueError(f"Shape vector needs {SHAPE_DIM} entries, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Shape vector contains non-finite values")
        object.__setattr__(self, "coefficients", _frozen(values))

    @staticmethod
    def average(shapes: Iterable["ShapeVector"]) -> "ShapeVector":
        """Average per-frame shape estimates into a single sequence shape."""
        stacked = np.stack([s.coefficients for s in shapes])
        return ShapeVector(stacked.mean(axis=0))


@dataclass(frozen=True)
class PoseFrame:
    """One SMPL pose: 24 axis-angle triples (23 joints + global orientation).

    Args:
        joints: Array of shape (24, 3), radians
    """

    joints: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.asarray(self.joints, dtype=np.float64)
        if values.size == POSE_DIM:
            values = values.reshape(NUM_JOINTS, 3)
        if values.shape != (NUM_JOINTS, 3):
            raise ValueError(f"Pose frame needs {NUM_JOINTS} triples, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Pose frame contains non-finite values")
        object.__setattr__(self, "joints", _frozen(values))

    def canonical(self) -> "PoseFrame":
        """Return the frame with every rotation angle folded into [0, pi]."""
        return PoseFrame(triples_from_rotations(rotations_from_triples(self.joints)))

    def as_vector(self) -> NDArray[np.float64]:
        """Return the 72-vector of angle values."""
        return self.joints.reshape(POSE_DIM)


@dataclass(frozen=True)
class RotationFrame:
    """24 proper rotation matrices, one per joint.

    Args:
        matrices: Array of shape (24, 3, 3)
    """

    matrices: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.asarray(self.matrices, dtype=np.float64)
        if values.shape != (NUM_JOINTS, 3, 3):
            raise ValueError(f"Rotation frame needs shape ({NUM_JOINTS}, 3, 3), got {values.shape}")
        gram = np.swapaxes(values, -1, -2) @ values
        if np.max(np.abs(gram - np.eye(3))) >= ROTATION_TOLERANCE:
            raise ValueError("Rotation frame contains a non-orthonormal matrix")
        if np.max(np.abs(np.linalg.det(values) - 1.0)) > ROTATION_TOLERANCE:
            raise ValueError("Rotation frame contains a matrix with determinant != 1")
        object.__setattr__(self, "matrices", _frozen(values))

    def to_pose_frame(self) -> PoseFrame:
        """Convert back to canonical axis-angle triples."""
        return PoseFrame(triples_from_rotations(self.matrices))

    def as_vector(self) -> NDArray[np.float64]:
        """Flatten joint-major, row-major to a 216-vector."""
        return self.matrices.reshape(FRAME_DIM)


@dataclass(frozen=True)
class PoseSequence:
    """Time-ordered pose frames.

    Args:
        angles: Array of shape (N, 24, 3), radians
        frame_rate: Frames per second (metadata only)
    """

    angles: NDArray[np.float64]
    frame_rate: float = 30.0

    def __post_init__(self) -> None:
        values = np.asarray(self.angles, dtype=np.float64)
        if values.ndim == 2 and values.shape[1] == POSE_DIM:
            values = values.reshape(-1, NUM_JOINTS, 3)
        if values.ndim != 3 or values.shape[1:] != (NUM_JOINTS, 3):
            raise ValueError(f"Pose sequence needs shape (N, {NUM_JOINTS}, 3), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Pose sequence contains non-finite values")
        if not np.isfinite(self.frame_rate) or self.frame_rate <= 0:
            raise ValueError(f"Frame rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "angles", _frozen(values))

    @staticmethod
    def from_frames(frames: Sequence[PoseFrame], frame_rate: float = 30.0) -> "PoseSequence":
        """Build a sequence from individual frames."""
        if not frames:
            return PoseSequence(np.zeros((0, NUM_JOINTS, 3)), frame_rate)
        return PoseSequence(np.stack([f.joints for f in frames]), frame_rate)

    def __len__(self) -> int:
        return self.angles.shape[0]

    @property
    def frames(self) -> list[PoseFrame]:
        return [PoseFrame(a) for a in self.angles]

    def require_length(self, minimum: int = 2) -> None:
        """Raise unless the sequence has at least `minimum` frames."""
        if len(self) < minimum:
            raise ValueError(f"Sequence needs at least {minimum} frames, got {len(self)}")

    def truncated(self, n_frames: int) -> "PoseSequence":
        """Return the first n_frames frames."""
        if n_frames < 0:
            raise ValueError(f"Cannot truncate to {n_frames} frames")
        return PoseSequence(self.angles[:n_frames], self.frame_rate)

    def extended(self, frames: Sequence[PoseFrame]) -> "PoseSequence":
        """Return the sequence with frames appended."""
        if not frames:
            return self
        extra = np.stack([f.joints for f in frames])
        return PoseSequence(np.concatenate([self.angles, extra]), self.frame_rate)

    def pose_matrix(self) -> NDArray[np.float64]:
        """Return the (N, 72) angle matrix."""
        return self.angles.reshape(len(self), POSE_DIM)

    def frame_matrix(self) -> NDArray[np.float64]:
        """Return the (N, 216) flattened rotation matrices fed to the encoder."""
        return rotations_from_triples(self.angles).reshape(len(self), FRAME_DIM)

    def to_tensor(self) -> torch.Tensor:
        """Return the (N, 216) encoder input as a float64 tensor."""
        return torch.from_numpy(self.frame_matrix())


@dataclass(frozen=True)
class LabeledSequence:
    """A pose sequence with its identity label and sequence-level shape.

    Args:
        label: Identity label
        sequence: Pose parameters (pseudo ground-truth theta')
        shape: Sequence-averaged shape (pseudo ground-truth beta')
        sequence_id: Unique identifier of this recording
    """

    label: str
    sequence: PoseSequence
    shape: ShapeVector
    sequence_id: str = field(default="")


def flatten_frame(frame: PoseFrame) -> NDArray[np.float64]:
    """Convert a pose frame to the 216-vector of joint-major, row-major rotations."""
    if not isinstance(frame, PoseFrame):
        frame = PoseFrame(frame)
    return rotations_from_triples(frame.joints).reshape(FRAME_DIM)


def unflatten_frame(vector: ArrayLike) -> RotationFrame:
    """Convert a (possibly unconstrained) 216-vector to a rotation frame.

    Each 3x3 block is projected onto the nearest proper rotation.

    Raises:
        ValueError: If the vector does not have 216 finite entries
    """
    values = np.asarray(vector, dtype=np.float64)
    if values.shape != (FRAME_DIM,):
        raise ValueError(f"Expected a {FRAME_DIM}-vector, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("Frame vector contains non-finite values")
    return RotationFrame(nearest_rotations(values.reshape(NUM_JOINTS, 3, 3)))


def pose_frames_from_vectors(vectors: ArrayLike) -> list[PoseFrame]:
    """Project a batch of (M, 216) raw vectors to pose frames."""
    values = np.asarray(vectors, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != FRAME_DIM:
        raise ValueError(f"Expected shape (M, {FRAME_DIM}), got {values.shape}")
    if len(values) == 0:
        return []
    if not np.all(np.isfinite(values)):
        raise ValueError("Frame vectors contain non-finite values")
    rotations = nearest_rotations(values.reshape(-1, NUM_JOINTS, 3, 3))
    triples = triples_from_rotations(rotations)
    return [PoseFrame(t) for t in triples]
