"""Training loops for the LDS objective and the joint recognition objective."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from logging import Logger, getLogger
from typing import Any, Callable, Iterator, Sequence

import pandas as pd
import torch
from tqdm import tqdm

from gait_koopman.config import TrainConfig
from gait_koopman.errors import ProtocolError, TrainingDivergenceError
from gait_koopman.lds.losses import estimate_sequence_phases, lds_loss_terms
from gait_koopman.lds.model import LdsArchitecture, LdsModel
from gait_koopman.pose.rotations import log_map_torch
from gait_koopman.pose.types import NUM_JOINTS, POSE_DIM, LabeledSequence, PoseSequence
from gait_koopman.recognition.head import HeadArchitecture, RecognitionHead, motion_features
from gait_koopman.recognition.losses import identity_loss, soft_reconstruction_loss
from gait_koopman.training.kernel import (
    AdamState,
    AdamStepReport,
    ParamSet,
    adam_step,
    clip_gradients,
    value_and_gradient,
)

logger: Logger = getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "L_recons", "L_linearity", "L_recons_rec", "L_id", "L_soft", "total"]

StepCallback = Callable[[int, AdamStepReport], None]


@dataclass
class TrainingResult:
    """Trained model(s) and the per-epoch loss history."""

    model: LdsModel
    history: pd.DataFrame
    head: RecognitionHead | None = None
    stopped_early: bool = False

    @property
    def epochs_completed(self) -> int:
        return len(self.history)


@dataclass
class _Batch:
    frames: torch.Tensor
    angles: torch.Tensor | None = None
    shapes: torch.Tensor | None = None
    labels: list[str] | None = None


def _crop_length(lengths: Sequence[int], config: TrainConfig) -> int:
    length = min(lengths)
    if config.sequence_length is not None:
        length = min(length, config.sequence_length)
    return length


def _optimize(
    name: str,
    params: ParamSet,
    batches: Callable[[torch.Generator], Iterator[_Batch]],
    objective_for: Callable[[_Batch, dict[str, float]], Callable[[ParamSet], torch.Tensor]],
    config: TrainConfig,
    models: Callable[[], Any],
    on_step: StepCallback | None,
    progress: bool,
) -> tuple[pd.DataFrame, bool]:
    """Shared epoch loop: Adam steps, divergence guard, history, early stop."""
    state = AdamState(config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)
    rows: list[dict[str, float]] = []
    best = math.inf
    stale = 0
    stopped_early = False

    epochs = tqdm(range(1, config.max_epochs + 1), desc=f"Training {name}", disable=not progress)
    for epoch in epochs:
        sums = dict.fromkeys(HISTORY_COLUMNS[1:], 0.0)
        count = 0
        for batch in batches(generator):
            components: dict[str, float] = {}
            objective = objective_for(batch, components)
            snapshot = params.snapshot()
            try:
                value, grads = value_and_gradient(objective, params, name=name)
                if config.clip_grad_norm is not None:
                    grads = clip_gradients(grads, config.clip_grad_norm)
                report = adam_step(params, grads, state, step_bound_slack=config.step_bound_slack)
                bad = params.non_finite_groups()
                if bad:
                    raise TrainingDivergenceError(
                        f"Parameters became non-finite in groups {bad}", operation="adam_step"
                    )
            except TrainingDivergenceError as e:
                params.restore(snapshot)
                logger.error(f"{name} diverged at epoch {epoch}: {e}")
                raise TrainingDivergenceError(
                    str(e), operation=e.operation, last_good=copy.deepcopy(models()), epoch=epoch
                ) from e

            weight = batch.frames.shape[0]
            components["total"] = float(value)
            for key, val in components.items():
                sums[key] += val * weight
            count += weight
            if on_step is not None:
                on_step(report.step, report)

        row = {"epoch": float(epoch), **{k: v / count for k, v in sums.items()}}
        rows.append(row)
        epochs.set_postfix(loss=f"{row['total']:.4g}")
        logger.info(f"{name} epoch {epoch}: total {row['total']:.6g}")

        total = row["total"]
        if best < math.inf and best - total < config.early_stop_tolerance * abs(best):
            stale += 1
        else:
            stale = 0
        best = min(best, total)
        if stale >= config.early_stop_patience:
            logger.warning(
                f"{name}: no relative improvement above {config.early_stop_tolerance} "
                f"for {stale} epochs, stopping at epoch {epoch}"
            )
            stopped_early = True
            break

    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    history["epoch"] = history["epoch"].astype(int)
    return history, stopped_early


def train_lds(
    dataset: Sequence[PoseSequence],
    config: TrainConfig | None = None,
    model: LdsModel | None = None,
    architecture: LdsArchitecture | None = None,
    on_step: StepCallback | None = None,
    progress: bool = True,
) -> TrainingResult:
    """Minimize the mean LDS loss (reconstruction + linearity + recurrent) over a dataset.

    Each mini-batch is cropped to its shortest sequence so it can be stacked.

    Args:
        dataset: Pose sequences with at least 2 frames each
        config: Training hyper-parameters
        model: Model to continue training in place; a fresh seeded model otherwise
        architecture: Layer sizes for a fresh model
        on_step: Called after every Adam step with (step, report)
        progress: Whether to display a progress bar

    Returns:
        TrainingResult with the trained model and the loss history

    Raises:
        ValueError: If the dataset is empty or a sequence is too short
        TrainingDivergenceError: If a loss, gradient or parameter becomes non-finite
    """
    config = config or TrainConfig()
    if not dataset:
        raise ValueError("Training dataset is empty")
    for i, sequence in enumerate(dataset):
        if len(sequence) < 2:
            raise ValueError(f"Sequence {i} has {len(sequence)} frames, need at least 2")

    model = model or LdsModel(architecture, seed=config.seed)
    model.train()
    frames = [sequence.to_tensor() for sequence in dataset]
    params = ParamSet(model.param_groups())
    logger.info(f"Training LDS on {len(frames)} sequences ({params.count()} parameters)")

    def batches(generator: torch.Generator) -> Iterator[_Batch]:
        order = torch.randperm(len(frames), generator=generator).tolist()
        for start in range(0, len(order), config.batch_size):
            chosen = [frames[i] for i in order[start : start + config.batch_size]]
            length = _crop_length([len(f) for f in chosen], config)
            yield _Batch(frames=torch.stack([f[:length] for f in chosen]))

    def objective_for(batch: _Batch, components: dict[str, float]) -> Callable[[ParamSet], torch.Tensor]:
        def objective(_: ParamSet) -> torch.Tensor:
            terms = lds_loss_terms(model, batch.frames)
            components.update(terms.as_dict())
            return terms.total

        return objective

    history, stopped_early = _optimize(
        "lds", params, batches, objective_for, config, lambda: model, on_step, progress
    )
    return TrainingResult(model=model, history=history, stopped_early=stopped_early)


def _group_by_identity(dataset: Sequence[LabeledSequence]) -> dict[str, list[LabeledSequence]]:
    groups: dict[str, list[LabeledSequence]] = {}
    for item in dataset:
        groups.setdefault(item.label, []).append(item)
    if len(groups) < 2:
        raise ProtocolError(f"Recognition training needs at least 2 identities, got {len(groups)}")
    short = sorted(label for label, items in groups.items() if len(items) < 2)
    if short:
        raise ProtocolError(f"Identities with fewer than 2 sequences: {short}")
    for label, items in groups.items():
        for item in items:
            if len(item.sequence) < 2:
                raise ValueError(f"Sequence of '{label}' has fewer than 2 frames")
    return groups


def recognition_objective(
    lds: LdsModel,
    head: RecognitionHead,
    frames: torch.Tensor,
    angles: torch.Tensor,
    shapes: torch.Tensor,
    labels: Sequence[str],
    config: TrainConfig,
    components: dict[str, float] | None = None,
) -> torch.Tensor:
    """lambda_id * L_id + lambda_soft * L_soft + lambda_motion * L_LDS for one batch.

    Args:
        lds: LDS model (its graph is kept only when config.train_lds_jointly)
        head: Recognition head
        frames: (B, N, 216) encoder inputs
        angles: (B, N, 72) pseudo ground-truth poses theta'
        shapes: (B, 10) pseudo ground-truth shapes beta'
        labels: Identity label of every row
        config: Loss weights and margin
        components: Filled with the individual loss values when given
    """
    with torch.set_grad_enabled(config.train_lds_jointly and torch.is_grad_enabled()):
        latents = lds.encode(frames)
        phases = estimate_sequence_phases(lds, latents)
        lds_terms = lds_loss_terms(lds, frames, latents=latents, phases=phases)
        decoded = lds.decode(latents).reshape(*frames.shape[:-1], NUM_JOINTS, 3, 3)
        theta_hat = log_map_torch(decoded).reshape(*frames.shape[:-1], POSE_DIM)
        l_soft = soft_reconstruction_loss(shapes, theta_hat, shapes, angles, config.lambda_pose)

    output = head(shapes, motion_features(latents[:, 0, :], phases))
    l_id = identity_loss(output, labels, config.margin)
    total = config.lambda_id * l_id + config.lambda_soft * l_soft + config.lambda_motion * lds_terms.total

    if components is not None:
        components.update(lds_terms.as_dict())
        components["L_id"] = float(l_id.detach())
        components["L_soft"] = float(l_soft.detach())
    return total


def train_recognition(
    dataset: Sequence[LabeledSequence],
    lds: LdsModel,
    config: TrainConfig | None = None,
    head: RecognitionHead | None = None,
    on_step: StepCallback | None = None,
    progress: bool = True,
) -> TrainingResult:
    """Train the recognition head (and optionally the LDS) on labeled sequences.

    Batches hold P identities x S sequences. The LDS is copied first, so the
    model passed in is never modified.

    Args:
        dataset: Labeled sequences with pseudo ground-truth shapes and poses
        lds: Trained LDS model
        config: Loss weights, batch composition and optimizer settings
        head: Head to continue training; a fresh seeded head otherwise
        on_step: Called after every Adam step with (step, report)
        progress: Whether to display a progress bar

    Returns:
        TrainingResult with the (possibly fine-tuned) LDS, the head and the history

    Raises:
        ProtocolError: If fewer than 2 identities or an identity has fewer than 2 sequences
        TrainingDivergenceError: If a loss, gradient or parameter becomes non-finite
    """
    config = config or TrainConfig()
    groups = _group_by_identity(dataset)
    lds = copy.deepcopy(lds)
    if head is None:
        head = RecognitionHead(
            HeadArchitecture(
                latent_channels=lds.architecture.latent_channels,
                hidden_dim=config.hidden_dim,
                embedding_dim=config.embedding_dim,
            ),
            seed=config.seed,
        )
    head.train()
    lds.train()

    groups_map = head.param_groups()
    if config.train_lds_jointly:
        groups_map = {**lds.param_groups(), **groups_map}
    params = ParamSet(groups_map)
    labels = list(groups)
    logger.info(
        f"Training recognition head on {len(dataset)} sequences / {len(labels)} identities "
        f"(joint LDS: {config.train_lds_jointly})"
    )

    def batches(generator: torch.Generator) -> Iterator[_Batch]:
        order = torch.randperm(len(labels), generator=generator).tolist()
        chunks = [order[i : i + config.identities_per_batch] for i in range(0, len(order), config.identities_per_batch)]
        if len(chunks) > 1 and len(chunks[-1]) < 2:
            chunks[-2].extend(chunks.pop())
        for chunk in chunks:
            chosen: list[LabeledSequence] = []
            for idx in chunk:
                items = groups[labels[idx]]
                picks = torch.randperm(len(items), generator=generator)[: config.sequences_per_identity]
                chosen.extend(items[i] for i in picks.tolist())
            length = _crop_length([len(item.sequence) for item in chosen], config)
            yield _Batch(
                frames=torch.stack([item.sequence.truncated(length).to_tensor() for item in chosen]),
                angles=torch.stack(
                    [torch.from_numpy(item.sequence.pose_matrix()[:length].copy()) for item in chosen]
                ),
                shapes=torch.stack([torch.from_numpy(item.shape.coefficients.copy()) for item in chosen]),
                labels=[item.label for item in chosen],
            )

    def objective_for(batch: _Batch, components: dict[str, float]) -> Callable[[ParamSet], torch.Tensor]:
        def objective(_: ParamSet) -> torch.Tensor:
            return recognition_objective(
                lds, head, batch.frames, batch.angles, batch.shapes, batch.labels, config, components
            )

        return objective

    history, stopped_early = _optimize(
        "recognition",
        params,
        batches,
        objective_for,
        config,
        lambda: {"lds": lds, "head": head},
        on_step,
        progress,
    )
    head.eval()
    lds.eval()
    return TrainingResult(model=lds, history=history, head=head, stopped_early=stopped_early)
