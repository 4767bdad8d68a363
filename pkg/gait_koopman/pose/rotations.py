"""Axis-angle / rotation-matrix conversions.

Joint rotations are stored as axis-angle triples (the exponential-map
coordinates used by SMPL). All numpy functions accept arbitrary leading
batch dimensions.
"""

from __future__ import annotations

from logging import Logger, getLogger

import numpy as np
import torch
from numpy.typing import ArrayLike, NDArray

from gait_koopman.errors import DegenerateInputError, DomainError

logger: Logger = getLogger(__name__)

ORTHONORMAL_TOLERANCE = 1e-6
_SMALL_ANGLE = 1e-4


def _hat(r: NDArray[np.float64]) -> NDArray[np.float64]:
    """Skew-symmetric cross-product matrices of (..., 3) vectors."""
    zeros = np.zeros(r.shape[:-1])
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    return np.stack(
        [
            np.stack([zeros, -z, y], axis=-1),
            np.stack([z, zeros, -x], axis=-1),
            np.stack([-y, x, zeros], axis=-1),
        ],
        axis=-2,
    )


def _vee_antisymmetric(m: NDArray[np.float64]) -> NDArray[np.float64]:
    """Return vee(M - M^T), which equals 2 sin(angle) * axis for a rotation."""
    return np.stack(
        [
            m[..., 2, 1] - m[..., 1, 2],
            m[..., 0, 2] - m[..., 2, 0],
            m[..., 1, 0] - m[..., 0, 1],
        ],
        axis=-1,
    )


def rotations_from_triples(triples: ArrayLike) -> NDArray[np.float64]:
    """Convert axis-angle triples to rotation matrices (Rodrigues formula).

    Args:
        triples: Array of shape (..., 3), radians

    Returns:
        Array of shape (..., 3, 3)

    Raises:
        ValueError: If the input is non-finite or the last axis is not 3
    """
    r = np.asarray(triples, dtype=np.float64)
    if r.shape[-1:] != (3,):
        raise ValueError(f"Expected trailing dimension 3, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("Rotation triple contains non-finite values")

    theta2 = np.sum(r * r, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)

    # sin(t)/t and (1 - cos(t))/t^2, with series near zero
    a = np.where(small, 1.0 - theta2 / 6.0 + theta2**2 / 120.0, np.sin(safe) / safe)
    half = np.sin(safe / 2.0) / safe
    b = np.where(small, 0.5 - theta2 / 24.0 + theta2**2 / 720.0, 2.0 * half * half)

    k = _hat(r)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def rotation_from_triple(triple: ArrayLike) -> NDArray[np.float64]:
    """Convert one axis-angle triple to a 3x3 rotation matrix."""
    r = np.asarray(triple, dtype=np.float64)
    if r.shape != (3,):
        raise ValueError(f"Expected a 3-vector, got shape {r.shape}")
    return rotations_from_triples(r)


def _canonical_axis_sign(axis: NDArray[np.float64]) -> NDArray[np.float64]:
    """Flip axes so their largest-magnitude component is positive."""
    idx = np.argmax(np.abs(axis), axis=-1)[..., None]
    lead = np.take_along_axis(axis, idx, axis=-1)
    return np.where(lead < 0, -axis, axis)


def triples_from_rotations(
    matrices: ArrayLike, tolerance: float = ORTHONORMAL_TOLERANCE
) -> NDArray[np.float64]:
    """Convert rotation matrices to canonical axis-angle triples.

    The returned angle (triple magnitude) lies in [0, pi]. At exactly pi the
    axis sign is fixed by making its largest component positive.

    Args:
        matrices: Array of shape (..., 3, 3)
        tolerance: Maximum allowed deviation from a proper rotation

    Returns:
        Array of shape (..., 3)

    Raises:
        ValueError: If the input is non-finite or badly shaped
        DomainError: If an input is further than tolerance from a proper rotation
    """
    m = np.asarray(matrices, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise ValueError(f"Expected trailing dimensions (3, 3), got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("Rotation matrix contains non-finite values")

    gram = np.swapaxes(m, -1, -2) @ m
    orth_error = np.max(np.abs(gram - np.eye(3)), axis=(-2, -1))
    det_error = np.abs(np.linalg.det(m) - 1.0)
    if np.any(orth_error > tolerance) or np.any(det_error > tolerance):
        raise DomainError(
            f"Matrix is not a proper rotation (orthonormality error "
            f"{float(np.max(orth_error)):.3e}, determinant error {float(np.max(det_error)):.3e})"
        )

    v = _vee_antisymmetric(m)
    s = 0.5 * np.linalg.norm(v, axis=-1)
    c = 0.5 * (np.trace(m, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)

    # Small and moderate angles: axis from the antisymmetric part
    ratio = np.where(s > 0.0, theta / np.where(s > 0.0, s, 1.0), 1.0)
    near = 0.5 * v * ratio[..., None]

    # Angles beyond pi/2: axis from the symmetric part, (M + M^T)/2 - c I = (1 - c) a a^T
    sym = 0.5 * (m + np.swapaxes(m, -1, -2)) - c[..., None, None] * np.eye(3)
    k = np.argmax(np.diagonal(sym, axis1=-2, axis2=-1), axis=-1)
    column = np.take_along_axis(sym, k[..., None, None], axis=-1)[..., 0]
    column_norm = np.linalg.norm(column, axis=-1, keepdims=True)
    axis = column / np.where(column_norm > 0.0, column_norm, 1.0)
    alignment = np.sum(axis * v, axis=-1)
    axis = np.where(
        (s > 1e-10)[..., None],
        np.where((alignment < 0.0)[..., None], -axis, axis),
        _canonical_axis_sign(axis),
    )
    far = axis * theta[..., None]

    return np.where((c > 0.0)[..., None], near, far)


def triple_from_rotation(
    matrix: ArrayLike, tolerance: float = ORTHONORMAL_TOLERANCE
) -> NDArray[np.float64]:
    """Convert one 3x3 rotation matrix to a canonical axis-angle triple."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"Expected a 3x3 matrix, got shape {m.shape}")
    return triples_from_rotations(m, tolerance=tolerance)


def nearest_rotations(matrices: ArrayLike) -> NDArray[np.float64]:
    """Project near-rotations onto SO(3) via the orthogonal polar factor.

    When the polar factor is a reflection the closest proper rotation is
    returned instead (smallest singular direction flipped).

    Args:
        matrices: Array of shape (..., 3, 3)

    Returns:
        Array of shape (..., 3, 3) with det = 1

    Raises:
        ValueError: If the input is non-finite or badly shaped
        DegenerateInputError: If any matrix is rank-deficient
    """
    m = np.asarray(matrices, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise ValueError(f"Expected trailing dimensions (3, 3), got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("Matrix contains non-finite values")

    u, singular, vt = np.linalg.svd(m)
    if np.any(singular[..., -1] <= 1e-12 * np.maximum(singular[..., 0], 1e-300)):
        raise DegenerateInputError("Cannot project a rank-deficient matrix onto a rotation")

    d = np.sign(np.linalg.det(u @ vt))
    correction = np.ones(singular.shape)
    correction[..., -1] = d
    return (u * correction[..., None, :]) @ vt


def nearest_rotation(matrix: ArrayLike) -> NDArray[np.float64]:
    """Project one near-rotation 3x3 matrix onto SO(3)."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"Expected a 3x3 matrix, got shape {m.shape}")
    return nearest_rotations(m)


def log_map_torch(matrices: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Differentiable axis-angle triples of (..., 3, 3) matrices.

    Raw decoder blocks are not exactly orthonormal; the triple is read from
    the antisymmetric part and the trace. Gradients are well defined away
    from a rotation angle of pi.
    """
    v = torch.stack(
        [
            matrices[..., 2, 1] - matrices[..., 1, 2],
            matrices[..., 0, 2] - matrices[..., 2, 0],
            matrices[..., 1, 0] - matrices[..., 0, 1],
        ],
        dim=-1,
    )
    s = 0.5 * torch.linalg.vector_norm(v, dim=-1)
    c = 0.5 * (matrices.diagonal(dim1=-2, dim2=-1).sum(-1) - 1.0)
    theta = torch.atan2(s, c)
    s_safe = torch.where(s > eps, s, torch.ones_like(s))
    ratio = torch.where(s > eps, theta / s_safe, 1.0 + s * s / 6.0)
    return 0.5 * v * ratio.unsqueeze(-1)
