"""Unsupervised LDS losses: reconstruction, linearity, recurrent reconstruction."""

from __future__ import annotations

from dataclasses import dataclass
from logging import Logger, getLogger

import torch
import torch.nn.functional as F

from gait_koopman.lds.koopman import KoopmanOperator, prefix_length, rotate_latents
from gait_koopman.lds.model import LdsModel
from gait_koopman.pose.types import PoseSequence

logger: Logger = getLogger(__name__)

SMOOTH_L1_BETA = 1.0


def smooth_l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean smooth-L1 distance with transition point 1.0.

    Raises:
        ValueError: If the inputs do not have the same shape
    """
    a = torch.as_tensor(a, dtype=torch.float64)
    b = torch.as_tensor(b, dtype=torch.float64)
    if a.shape != b.shape:
        raise ValueError(f"Shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return F.smooth_l1_loss(a, b, beta=SMOOTH_L1_BETA, reduction="mean")


def as_frames(sequence: PoseSequence | torch.Tensor) -> torch.Tensor:
    """Return (..., N, 216) encoder inputs for a sequence or a prepared tensor."""
    if isinstance(sequence, PoseSequence):
        return sequence.to_tensor()
    return sequence


def _as_phases(K: KoopmanOperator | torch.Tensor) -> torch.Tensor:
    if isinstance(K, KoopmanOperator):
        return torch.from_numpy(K.phases.copy())
    return K


def _require_frames(frames: torch.Tensor, minimum: int) -> None:
    if frames.shape[-2] < minimum:
        raise ValueError(f"Sequence needs at least {minimum} frames, got {frames.shape[-2]}")


def estimate_sequence_phases(model: LdsModel, latents: torch.Tensor) -> torch.Tensor:
    """Estimate K from the first ceil(N/2) latents of (..., N, 2C) input."""
    return model.estimate_phases(latents[..., : prefix_length(latents.shape[-2]), :])


def latent_linearity_loss(latents: torch.Tensor, phases: torch.Tensor) -> torch.Tensor:
    """Smooth-L1 between z_{i+1} and K z_i, averaged per transition."""
    predicted = rotate_latents(latents[..., :-1, :], phases.unsqueeze(-2))
    return smooth_l1(latents[..., 1:, :], predicted)


def loss_recons(
    model: LdsModel, sequence: PoseSequence | torch.Tensor, latents: torch.Tensor | None = None
) -> torch.Tensor:
    """Autoencoder reconstruction loss, averaged per frame."""
    frames = as_frames(sequence)
    _require_frames(frames, 1)
    if latents is None:
        latents = model.encode(frames)
    return smooth_l1(frames, model.decode(latents))


def loss_linearity(
    model: LdsModel,
    sequence: PoseSequence | torch.Tensor,
    K: KoopmanOperator | torch.Tensor,
    latents: torch.Tensor | None = None,
) -> torch.Tensor:
    """Linearity loss between consecutive encoded frames under K."""
    frames = as_frames(sequence)
    _require_frames(frames, 2)
    if latents is None:
        latents = model.encode(frames)
    return latent_linearity_loss(latents, _as_phases(K))


def loss_recons_rec(
    model: LdsModel,
    sequence: PoseSequence | torch.Tensor,
    K: KoopmanOperator | torch.Tensor,
    latents: torch.Tensor | None = None,
) -> torch.Tensor:
    """Recurrent reconstruction: frame i+1 against D(K^i E(frame 1))."""
    frames = as_frames(sequence)
    _require_frames(frames, 2)
    if latents is None:
        latents = model.encode(frames)
    phases = _as_phases(K)
    n = frames.shape[-2]
    steps = torch.arange(1, n, dtype=torch.float64).unsqueeze(-1)
    rolled = rotate_latents(latents[..., 0:1, :], phases.unsqueeze(-2), steps)
    return smooth_l1(frames[..., 1:, :], model.decode(rolled))


@dataclass
class LdsLossTerms:
    """The three LDS loss components for one sequence or batch."""

    recons: torch.Tensor
    linearity: torch.Tensor
    recons_rec: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.recons + self.linearity + self.recons_rec

    def as_dict(self) -> dict[str, float]:
        return {
            "L_recons": float(self.recons.detach()),
            "L_linearity": float(self.linearity.detach()),
            "L_recons_rec": float(self.recons_rec.detach()),
        }


def lds_loss_terms(
    model: LdsModel,
    sequence: PoseSequence | torch.Tensor,
    latents: torch.Tensor | None = None,
    phases: torch.Tensor | None = None,
) -> LdsLossTerms:
    """Compute all LDS loss components, estimating K from the sequence prefix.

    Args:
        model: LDS network
        sequence: (N, 216) or (B, N, 216) frames, or a PoseSequence
        latents: Precomputed encodings of the frames
        phases: Precomputed phases; estimated from the latents when omitted
    """
    frames = as_frames(sequence)
    _require_frames(frames, 2)
    if latents is None:
        latents = model.encode(frames)
    if phases is None:
        phases = estimate_sequence_phases(model, latents)
    return LdsLossTerms(
        recons=loss_recons(model, frames, latents=latents),
        linearity=loss_linearity(model, frames, phases, latents=latents),
        recons_rec=loss_recons_rec(model, frames, phases, latents=latents),
    )


def loss_lds(model: LdsModel, sequence: PoseSequence | torch.Tensor) -> torch.Tensor:
    """Unweighted sum of the three LDS losses."""
    return lds_loss_terms(model, sequence).total
