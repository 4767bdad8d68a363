"""Triplet, identity and soft reconstruction losses."""

from __future__ import annotations

from collections import Counter
from logging import Logger, getLogger
from typing import Sequence

import torch
import torch.nn.functional as F

from gait_koopman.errors import ProtocolError
from gait_koopman.pose.types import POSE_DIM
from gait_koopman.recognition.head import HeadOutput

logger: Logger = getLogger(__name__)


def _normalized(x: torch.Tensor) -> torch.Tensor:
    return F.normalize(torch.as_tensor(x, dtype=torch.float64), p=2.0, dim=-1, eps=1e-300)


def embedding_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Euclidean distance between L2-normalized embeddings along the last axis."""
    return torch.linalg.vector_norm(_normalized(a) - _normalized(b), dim=-1)


def triplet_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    margin: float = 1.0,
) -> torch.Tensor:
    """max(0, d(a, p) - d(a, n) + margin), averaged over any leading batch axes.

    Raises:
        ValueError: If the embedding shapes differ or the margin is negative
    """
    anchor = torch.as_tensor(anchor, dtype=torch.float64)
    positive = torch.as_tensor(positive, dtype=torch.float64)
    negative = torch.as_tensor(negative, dtype=torch.float64)
    if not (anchor.shape == positive.shape == negative.shape):
        raise ValueError(
            f"Triplet shapes differ: {tuple(anchor.shape)}, {tuple(positive.shape)}, {tuple(negative.shape)}"
        )
    if margin < 0:
        raise ValueError(f"Margin must be non-negative, got {margin}")
    d_pos = embedding_distance(anchor, positive)
    d_neg = embedding_distance(anchor, negative)
    return torch.relu(d_pos - d_neg + margin).mean()


def _label_masks(labels: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
    counts = Counter(labels)
    if len(counts) < 2:
        raise ProtocolError(f"Triplets need at least 2 identities, got {len(counts)}")
    lonely = sorted(label for label, n in counts.items() if n < 2)
    if lonely:
        raise ProtocolError(f"Identities without a positive sample in the batch: {lonely}")
    codes = {label: i for i, label in enumerate(counts)}
    ids = torch.tensor([codes[label] for label in labels])
    same = ids.unsqueeze(0) == ids.unsqueeze(1)
    positives = same & ~torch.eye(len(labels), dtype=torch.bool)
    return positives, ~same


def batch_hard_triplet_loss(
    embeddings: torch.Tensor, labels: Sequence[str], margin: float = 1.0
) -> torch.Tensor:
    """Hardest-positive / hardest-negative triplet loss, averaged over anchors.

    Args:
        embeddings: (B, E) embeddings of one batch
        labels: Identity label of every row
        margin: Triplet margin

    Returns:
        Scalar loss

    Raises:
        ProtocolError: If the batch cannot form a triplet for every anchor
    """
    if embeddings.ndim != 2 or embeddings.shape[0] != len(labels):
        raise ValueError(f"Expected ({len(labels)}, E) embeddings, got {tuple(embeddings.shape)}")
    if margin < 0:
        raise ValueError(f"Margin must be non-negative, got {margin}")
    positives, negatives = _label_masks(labels)
    unit = _normalized(embeddings)
    distances = torch.linalg.vector_norm(unit.unsqueeze(1) - unit.unsqueeze(0), dim=-1)
    hardest_positive = torch.where(positives, distances, torch.full_like(distances, -torch.inf)).amax(dim=1)
    hardest_negative = torch.where(negatives, distances, torch.full_like(distances, torch.inf)).amin(dim=1)
    return torch.relu(hardest_positive - hardest_negative + margin).mean()


def identity_loss(output: HeadOutput, labels: Sequence[str], margin: float = 1.0) -> torch.Tensor:
    """Sum of batch-hard triplet losses on the shape, motion and gait embeddings."""
    return (
        batch_hard_triplet_loss(output.shape, labels, margin)
        + batch_hard_triplet_loss(output.motion, labels, margin)
        + batch_hard_triplet_loss(output.gait, labels, margin)
    )


def soft_reconstruction_loss(
    beta_hat: torch.Tensor,
    theta_hat: torch.Tensor,
    beta_prime: torch.Tensor,
    theta_prime: torch.Tensor,
    lambda_pose: float = 1000.0,
) -> torch.Tensor:
    """||beta' - beta_hat|| + lambda_pose * sum_i ||theta'_i - theta_hat_i||.

    Poses are (..., N, 72) angle vectors (or (..., N, 24, 3)). A per-frame
    beta_hat of shape (..., N, 10) is averaged over the sequence first. With
    leading batch axes the result is the batch mean.

    Raises:
        ValueError: If the sequence lengths or shapes do not match
    """
    beta_hat = torch.as_tensor(beta_hat, dtype=torch.float64)
    beta_prime = torch.as_tensor(beta_prime, dtype=torch.float64)
    theta_hat = torch.as_tensor(theta_hat, dtype=torch.float64)
    theta_prime = torch.as_tensor(theta_prime, dtype=torch.float64)
    if theta_hat.shape[-2:] == (24, 3):
        theta_hat = theta_hat.reshape(*theta_hat.shape[:-2], POSE_DIM)
    if theta_prime.shape[-2:] == (24, 3):
        theta_prime = theta_prime.reshape(*theta_prime.shape[:-2], POSE_DIM)
    if theta_hat.shape != theta_prime.shape:
        raise ValueError(
            f"Pose sequences differ: {tuple(theta_hat.shape)} vs {tuple(theta_prime.shape)}"
        )
    if theta_hat.shape[-1] != POSE_DIM:
        raise ValueError(f"Poses need {POSE_DIM} values per frame, got {theta_hat.shape[-1]}")
    if beta_hat.ndim == theta_hat.ndim:
        if beta_hat.shape[-2] != theta_hat.shape[-2]:
            raise ValueError(
                f"Per-frame shapes cover {beta_hat.shape[-2]} frames, poses {theta_hat.shape[-2]}"
            )
        beta_hat = beta_hat.mean(dim=-2)
    if beta_hat.shape != beta_prime.shape:
        raise ValueError(f"Shape vectors differ: {tuple(beta_hat.shape)} vs {tuple(beta_prime.shape)}")

    shape_term = torch.linalg.vector_norm(beta_prime - beta_hat, dim=-1)
    pose_term = torch.linalg.vector_norm(theta_prime - theta_hat, dim=-1).sum(dim=-1)
    return (shape_term + lambda_pose * pose_term).mean()
