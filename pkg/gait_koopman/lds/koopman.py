"""Latent states, unit-modulus Koopman operators, and forecasting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from logging import Logger, getLogger
from typing import Literal, Sequence

import numpy as np
import torch
from numpy.typing import ArrayLike, NDArray

from gait_koopman.lds.model import LdsModel
from gait_koopman.pose.types import FRAME_DIM, PoseFrame, PoseSequence, pose_frames_from_vectors

logger: Logger = getLogger(__name__)


def _readonly(values: NDArray[np.float64]) -> NDArray[np.float64]:
    values = np.array(values, dtype=np.float64, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class LatentState:
    """Complex latent vector stored as split real/imaginary parts.

    Args:
        re: Real parts, one per channel
        im: Imaginary parts, one per channel
    """

    re: NDArray[np.float64]
    im: NDArray[np.float64]

    def __post_init__(self) -> None:
        re = np.asarray(self.re, dtype=np.float64)
        im = np.asarray(self.im, dtype=np.float64)
        if re.ndim != 1 or re.shape != im.shape:
            raise ValueError(f"Latent parts need equal 1-D shapes, got {re.shape} and {im.shape}")
        if not (np.all(np.isfinite(re)) and np.all(np.isfinite(im))):
            raise ValueError("Latent state contains non-finite values")
        object.__setattr__(self, "re", _readonly(re))
        object.__setattr__(self, "im", _readonly(im))

    @staticmethod
    def from_vector(vector: ArrayLike) -> "LatentState":
        """Split a 2C-vector into C real then C imaginary parts."""
        values = np.asarray(vector, dtype=np.float64)
        if values.ndim != 1 or values.size % 2:
            raise ValueError(f"Latent vector needs an even 1-D length, got shape {values.shape}")
        half = values.size // 2
        return LatentState(values[:half], values[half:])

    @property
    def channels(self) -> int:
        return self.re.size

    def to_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.re, self.im])

    def as_complex(self) -> NDArray[np.complex128]:
        return self.re + 1j * self.im

    def norm(self) -> float:
        """Complex 2-norm."""
        return float(np.sqrt(np.sum(self.re * self.re + self.im * self.im)))


@dataclass(frozen=True)
class KoopmanOperator:
    """Diagonal operator K with K_jj = exp(i * phase_j).

    Args:
        phases: Radians; values outside (-pi, pi] are wrapped
    """

    phases: NDArray[np.float64]

    def __post_init__(self) -> None:
        phases = np.asarray(self.phases, dtype=np.float64)
        if phases.ndim != 1:
            raise ValueError(f"Phases must be 1-D, got shape {phases.shape}")
        if not np.all(np.isfinite(phases)):
            raise ValueError("Koopman phases contain non-finite values")
        inside = (phases > -math.pi) & (phases <= math.pi)
        wrapped = np.mod(phases + math.pi, 2.0 * math.pi) - math.pi
        wrapped = np.where(wrapped <= -math.pi, math.pi, wrapped)
        object.__setattr__(self, "phases", _readonly(np.where(inside, phases, wrapped)))

    @staticmethod
    def identity(channels: int) -> "KoopmanOperator":
        return KoopmanOperator(np.zeros(channels))

    @property
    def channels(self) -> int:
        return self.phases.size

    def diagonal(self) -> NDArray[np.complex128]:
        return np.cos(self.phases) + 1j * np.sin(self.phases)

    def moduli(self) -> NDArray[np.float64]:
        return np.abs(self.diagonal())


def rotate_latents(
    latents: torch.Tensor, phases: torch.Tensor, steps: torch.Tensor | float = 1.0
) -> torch.Tensor:
    """Multiply split re/im latents by exp(i * steps * phases).

    Args:
        latents: (..., 2C) latent vectors
        phases: (..., C) phases broadcastable against the latents
        steps: Number of applications, broadcastable against phases

    Returns:
        Rotated (..., 2C) latents
    """
    half = latents.shape[-1] // 2
    re, im = latents[..., :half], latents[..., half:]
    angle = phases * steps
    c, s = torch.cos(angle), torch.sin(angle)
    return torch.cat([re * c - im * s, re * s + im * c], dim=-1)


def prefix_length(n_frames: int) -> int:
    """Number of leading frames the K-estimator consumes: ceil(N / 2)."""
    return (n_frames + 1) // 2


def _frame_vector(frame216: ArrayLike) -> torch.Tensor:
    values = np.asarray(frame216, dtype=np.float64)
    if values.shape != (FRAME_DIM,):
        raise ValueError(f"Expected a {FRAME_DIM}-vector, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("Frame vector contains non-finite values")
    return torch.from_numpy(values.copy())


def encode(model: LdsModel, frame216: ArrayLike) -> LatentState:
    """Encode one flattened rotation frame into a latent state."""
    with torch.no_grad():
        latent = model.encode(_frame_vector(frame216))
    return LatentState.from_vector(latent.numpy())


def decode(model: LdsModel, z: LatentState) -> NDArray[np.float64]:
    """Decode a latent state into a raw (unprojected) 216-vector."""
    if z.channels != model.architecture.latent_channels:
        raise ValueError(
            f"Model expects {model.architecture.latent_channels} channels, got {z.channels}"
        )
    with torch.no_grad():
        frame = model.decode(torch.from_numpy(z.to_vector()))
    return frame.numpy().copy()


def encode_sequence(model: LdsModel, sequence: PoseSequence) -> NDArray[np.float64]:
    """Encode every frame of a sequence; returns an (N, 2C) array."""
    with torch.no_grad():
        return model.encode(sequence.to_tensor()).numpy().copy()


def estimate_koopman(
    model: LdsModel, latents: Sequence[LatentState] | NDArray[np.float64]
) -> KoopmanOperator:
    """Estimate K from a prefix of latent states (normally the first ceil(N/2)).

    Raises:
        ValueError: If no latents are given
    """
    if isinstance(latents, np.ndarray):
        stacked = np.asarray(latents, dtype=np.float64)
        if stacked.ndim != 2 or len(stacked) == 0:
            raise ValueError("Koopman estimation needs at least one latent state")
    else:
        if len(latents) == 0:
            raise ValueError("Koopman estimation needs at least one latent state")
        stacked = np.stack([z.to_vector() for z in latents])
    with torch.no_grad():
        phases = model.estimate_phases(torch.from_numpy(stacked.copy()))
    return KoopmanOperator(phases.numpy())


def apply_koopman(K: KoopmanOperator, z: LatentState, steps: int) -> LatentState:
    """Apply K `steps` times; zero steps is the identity.

    Raises:
        ValueError: If steps is negative or the channel counts differ
    """
    if steps < 0:
        raise ValueError(f"Steps must be non-negative, got {steps}")
    if K.channels != z.channels:
        raise ValueError(f"Operator has {K.channels} channels, latent has {z.channels}")
    angle = steps * K.phases
    c, s = np.cos(angle), np.sin(angle)
    return LatentState(z.re * c - z.im * s, z.re * s + z.im * c)


def summarize_sequence(model: LdsModel, sequence: PoseSequence) -> tuple[LatentState, KoopmanOperator]:
    """Return the first latent state and the K estimated from the sequence prefix."""
    sequence.require_length(2)
    latents = encode_sequence(model, sequence)
    K = estimate_koopman(model, latents[: prefix_length(len(sequence))])
    return LatentState.from_vector(latents[0]), K


def forecast(
    model: LdsModel,
    sequence: PoseSequence,
    m: int,
    anchor: Literal["first", "last"] = "first",
) -> list[PoseFrame]:
    """Predict the m poses following a sequence.

    With anchor="first", frame N+i is D(K^(N-1+i) E(frame 1)); with
    anchor="last" it is D(K^i E(frame N)). K is estimated from the first
    ceil(N/2) encoded frames. Decoded frames are projected onto rotations.

    Args:
        model: Trained LDS model
        sequence: Observed poses, at least 2 frames
        m: Number of frames to predict (0 returns an empty list)
        anchor: Which observed latent the operator is applied to

    Returns:
        List of m pose frames
    """
    sequence.require_length(2)
    if m < 0:
        raise ValueError(f"Forecast length must be non-negative, got {m}")
    if anchor not in ("first", "last"):
        raise ValueError(f"Unknown forecast anchor '{anchor}'")
    if m == 0:
        return []

    n = len(sequence)
    with torch.no_grad():
        latents = model.encode(sequence.to_tensor())
        phases = model.estimate_phases(latents[: prefix_length(n)])
        offset = n - 1 if anchor == "first" else 0
        base = latents[0] if anchor == "first" else latents[n - 1]
        steps = torch.arange(1, m + 1, dtype=torch.float64).unsqueeze(-1) + offset
        predicted = model.decode(rotate_latents(base.unsqueeze(0), phases.unsqueeze(0), steps))

    logger.debug(f"Forecast {m} frames from a {n}-frame sequence (anchor={anchor})")
    return pose_frames_from_vectors(predicted.numpy())


def dominant_channel(latents: NDArray[np.float64], K: KoopmanOperator) -> tuple[int, float]:
    """Return the latent channel whose oscillation carries the most energy, and its phase.

    Each channel's mean over time is removed first, so a large static offset
    does not outrank a channel that actually rotates.

    Args:
        latents: (N, 2C) encoded frames
        K: Operator estimated for the same sequence

    Returns:
        Tuple of (channel index, phase in radians)
    """
    values = np.asarray(latents, dtype=np.float64)
    half = values.shape[-1] // 2
    centered = values - values.mean(axis=0)
    energy = np.mean(centered[:, :half] ** 2 + centered[:, half:] ** 2, axis=0)
    idx = int(np.argmax(energy))
    return idx, float(K.phases[idx])
