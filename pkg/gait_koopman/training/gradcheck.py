"""Finite-difference verification of every training objective."""

from __future__ import annotations

from logging import Logger, getLogger
from typing import Callable

import pandas as pd
import torch

from gait_koopman.config import TrainConfig
from gait_koopman.data.synthetic import generate_population
from gait_koopman.lds.losses import estimate_sequence_phases, loss_linearity, loss_recons, loss_recons_rec
from gait_koopman.lds.model import LdsModel
from gait_koopman.recognition.head import HeadArchitecture, RecognitionHead, motion_features
from gait_koopman.recognition.losses import identity_loss
from gait_koopman.training.kernel import (
    GradientSet,
    ParamSet,
    finite_difference_check,
    gradient,
)
from gait_koopman.training.trainer import recognition_objective

logger: Logger = getLogger(__name__)

GradientFn = Callable[[Callable[[ParamSet], torch.Tensor], ParamSet], GradientSet]
GRADCHECK_COLUMNS = ["loss", "group", "coordinates", "max_relative_error", "passed"]


def run_gradient_suite(
    seed: int = 0,
    n_coords: int = 100,
    n_frames: int = 12,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    hidden_dim: int = 256,
    embedding_dim: int = 32,
    gradient_fn: GradientFn = gradient,
) -> pd.DataFrame:
    """Check analytic gradients of all losses against central differences.

    Covers L_recons, L_linearity and L_recons_rec over the LDS groups, the
    identity loss over the head groups, and the composed recognition
    objective over every group with the LDS trained jointly.

    Args:
        seed: Seed for models, data and coordinate sampling
        n_coords: Coordinates sampled per parameter group
        n_frames: Frames per test sequence
        h: Central-difference step
        tolerance: Maximum relative error for a pass
        hidden_dim: Hidden width of the head used for the check
        embedding_dim: Embedding width of the head used for the check
        gradient_fn: Analytic gradient under test

    Returns:
        DataFrame with one row per (loss, group)
    """
    population = generate_population(2, 2, n_frames, seed=seed, noise=0.01, progress=False, max_workers=1)
    items = population.items
    frames = torch.stack([item.sequence.to_tensor() for item in items])
    angles = torch.stack([torch.from_numpy(item.sequence.pose_matrix().copy()) for item in items])
    shapes = torch.stack([torch.from_numpy(item.shape.coefficients.copy()) for item in items])
    labels = [item.label for item in items]

    lds = LdsModel(seed=seed)
    head = RecognitionHead(
        HeadArchitecture(hidden_dim=hidden_dim, embedding_dim=embedding_dim), seed=seed
    )
    head.train()
    config = TrainConfig(
        seed=seed, hidden_dim=hidden_dim, embedding_dim=embedding_dim, train_lds_jointly=True
    )
    lds_params = ParamSet(lds.param_groups())
    head_params = ParamSet(head.param_groups())
    all_params = ParamSet({**lds.param_groups(), **head.param_groups()})

    def recons(_: ParamSet) -> torch.Tensor:
        return loss_recons(lds, frames)

    def linearity(_: ParamSet) -> torch.Tensor:
        latents = lds.encode(frames)
        return loss_linearity(lds, frames, estimate_sequence_phases(lds, latents), latents=latents)

    def recons_rec(_: ParamSet) -> torch.Tensor:
        latents = lds.encode(frames)
        return loss_recons_rec(lds, frames, estimate_sequence_phases(lds, latents), latents=latents)

    def id_loss(_: ParamSet) -> torch.Tensor:
        with torch.no_grad():
            latents = lds.encode(frames)
            phases = estimate_sequence_phases(lds, latents)
        output = head(shapes, motion_features(latents[:, 0, :], phases))
        return identity_loss(output, labels, config.margin)

    def composed(_: ParamSet) -> torch.Tensor:
        return recognition_objective(lds, head, frames, angles, shapes, labels, config)

    suite = [
        ("L_recons", recons, lds_params),
        ("L_linearity", linearity, lds_params),
        ("L_recons_rec", recons_rec, lds_params),
        ("L_id", id_loss, head_params),
        ("total", composed, all_params),
    ]
    rows = []
    for name, objective, params in suite:
        checks = finite_difference_check(
            objective, params, n_coords=n_coords, h=h, tolerance=tolerance, seed=seed, gradient_fn=gradient_fn
        )
        for check in checks:
            rows.append(
                {
                    "loss": name,
                    "group": check.group,
                    "coordinates": check.coordinates,
                    "max_relative_error": check.max_relative_error,
                    "passed": check.passed,
                }
            )
            logger.info(
                f"{name:>12} / {check.group:<12} max rel err {check.max_relative_error:.2e} "
                f"{'ok' if check.passed else 'FAIL'}"
            )
    return pd.DataFrame(rows, columns=GRADCHECK_COLUMNS)


def scaled_gradient(factor: float) -> GradientFn:
    """Gradient function returning `factor` times the true gradient."""

    def corrupted(objective: Callable[[ParamSet], torch.Tensor], params: ParamSet) -> GradientSet:
        grads = gradient(objective, params)
        return {name: [g * factor for g in gs] for name, gs in grads.items()}

    return corrupted
