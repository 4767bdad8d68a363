"""Gait description head: shape branch, motion branch and fusion."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from logging import Logger, getLogger
from typing import Any, Iterator

import numpy as np
import torch
import torch.nn.functional as F
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field
from torch import nn

from gait_koopman.lds.koopman import KoopmanOperator, LatentState
from gait_koopman.pose.types import SHAPE_DIM, ShapeVector

logger: Logger = getLogger(__name__)

UNIT_NORM_TOLERANCE = 1e-9


class HeadArchitecture(BaseModel):
    """Layer sizes of the recognition head."""

    shape_dim: int = Field(default=SHAPE_DIM, description="Width of the shape vector", ge=1)
    latent_channels: int = Field(
        default=90, description="Complex latent channels of the LDS feeding the motion branch", ge=1
    )
    hidden_dim: int = Field(default=2048, description="Hidden width of every branch", ge=1)
    embedding_dim: int = Field(default=64, description="Width E of all embeddings", ge=1)

    @property
    def motion_dim(self) -> int:
        """[re(z1), im(z1), phases]: 3 values per latent channel."""
        return 3 * self.latent_channels


def _branch(fan_in: int, hidden: int, fan_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(fan_in, hidden),
        nn.ReLU(),
        nn.BatchNorm1d(hidden, dtype=torch.float64),
        nn.Linear(hidden, fan_out),
    )


@dataclass
class HeadOutput:
    """Embeddings produced for a batch; gait rows are unit-norm."""

    shape: torch.Tensor
    motion: torch.Tensor
    gait: torch.Tensor


class RecognitionHead(nn.Module):
    """Shape, motion and fusion branches producing a unit-norm gait embedding.

    Args:
        architecture: Layer sizes
        seed: Seed for the Glorot-uniform initialization
    """

    def __init__(self, architecture: HeadArchitecture | None = None, seed: int = 0):
        super().__init__()
        self.architecture = architecture or HeadArchitecture()
        arch = self.architecture
        self.shape_branch = _branch(arch.shape_dim, arch.hidden_dim, arch.embedding_dim)
        self.motion_branch = _branch(arch.motion_dim, arch.hidden_dim, arch.embedding_dim)
        self.fusion_branch = _branch(2 * arch.embedding_dim, arch.hidden_dim, arch.embedding_dim)
        self.to(torch.float64)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for module in self.modules():
                if isinstance(module, nn.Linear):
                    nn.init.xavier_uniform_(module.weight)
                    nn.init.zeros_(module.bias)
                elif isinstance(module, nn.BatchNorm1d):
                    module.reset_parameters()

    def param_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "head_shape": list(self.shape_branch.parameters()),
            "head_motion": list(self.motion_branch.parameters()),
            "head_fusion": list(self.fusion_branch.parameters()),
        }

    def descriptor(self) -> dict[str, Any]:
        """Architecture descriptor stored in model files."""
        return {"type": "head", **self.architecture.model_dump(mode="json")}

    def embed_shape(self, shapes: torch.Tensor) -> torch.Tensor:
        return self.shape_branch(shapes)

    def embed_motion(self, features: torch.Tensor) -> torch.Tensor:
        return self.motion_branch(features)

    def fuse(self, shape_emb: torch.Tensor, motion_emb: torch.Tensor) -> torch.Tensor:
        if shape_emb.shape != motion_emb.shape:
            raise ValueError(
                f"Shape and motion embeddings differ: {tuple(shape_emb.shape)} vs {tuple(motion_emb.shape)}"
            )
        fused = self.fusion_branch(torch.cat([shape_emb, motion_emb], dim=-1))
        return F.normalize(fused, p=2.0, dim=-1, eps=1e-300)

    def forward(self, shapes: torch.Tensor, features: torch.Tensor) -> HeadOutput:
        """Embed a batch of (B, 10) shapes and (B, 3C) motion features."""
        shape_emb = self.embed_shape(shapes)
        motion_emb = self.embed_motion(features)
        return HeadOutput(shape=shape_emb, motion=motion_emb, gait=self.fuse(shape_emb, motion_emb))


def motion_features(latents: torch.Tensor, phases: torch.Tensor) -> torch.Tensor:
    """Concatenate (..., 2C) first latents with (..., C) phases."""
    return torch.cat([latents, phases], dim=-1)


@contextmanager
def inference_mode(head: RecognitionHead) -> Iterator[None]:
    """Run with frozen batch-norm statistics and no autograd, restoring the mode afterwards."""
    was_training = head.training
    if was_training:
        head.eval()
    try:
        with torch.no_grad():
            yield
    finally:
        if was_training:
            head.train()


@dataclass(frozen=True)
class GaitEmbedding:
    """Unit-norm gait descriptor.

    Args:
        values: 1-D array with 2-norm 1 (within 1e-9)
    """

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1 or values.size == 0:
            raise ValueError(f"Gait embedding must be a non-empty vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Gait embedding contains non-finite values")
        norm = float(np.linalg.norm(values))
        if abs(norm - 1.0) >= UNIT_NORM_TOLERANCE:
            raise ValueError(f"Gait embedding must have unit norm, got {norm}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.size


def _finite_row(values: ArrayLike, width: int, what: str) -> torch.Tensor:
    array = np.asarray(values, dtype=np.float64)
    if array.shape != (width,):
        raise ValueError(f"{what} needs {width} entries, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{what} contains non-finite values")
    return torch.from_numpy(array.copy()).unsqueeze(0)


def shape_embed(head: RecognitionHead, beta: ShapeVector | ArrayLike) -> NDArray[np.float64]:
    """Embed one shape vector with frozen normalization statistics."""
    coefficients = beta.coefficients if isinstance(beta, ShapeVector) else beta
    row = _finite_row(coefficients, head.architecture.shape_dim, "Shape vector")
    with inference_mode(head):
        return head.embed_shape(row)[0].numpy().copy()


def motion_embed(head: RecognitionHead, z1: LatentState, K: KoopmanOperator) -> NDArray[np.float64]:
    """Embed the first latent state and Koopman phases of a sequence."""
    if z1.channels != K.channels:
        raise ValueError(f"Latent has {z1.channels} channels, operator has {K.channels}")
    features = np.concatenate([z1.to_vector(), K.phases])
    row = _finite_row(features, head.architecture.motion_dim, "Motion features")
    with inference_mode(head):
        return head.embed_motion(row)[0].numpy().copy()


def fuse(head: RecognitionHead, shape_emb: ArrayLike, motion_emb: ArrayLike) -> GaitEmbedding:
    """Fuse shape and motion embeddings into a unit-norm gait embedding.

    Raises:
        ValueError: If the embeddings differ in length or are non-finite
    """
    shape_arr = np.asarray(shape_emb, dtype=np.float64)
    motion_arr = np.asarray(motion_emb, dtype=np.float64)
    if shape_arr.shape != motion_arr.shape:
        raise ValueError(f"Embedding lengths differ: {shape_arr.shape} vs {motion_arr.shape}")
    width = head.architecture.embedding_dim
    shape_row = _finite_row(shape_arr, width, "Shape embedding")
    motion_row = _finite_row(motion_arr, width, "Motion embedding")
    with inference_mode(head):
        gait = head.fuse(shape_row, motion_row)[0]
    return GaitEmbedding(gait.numpy())
