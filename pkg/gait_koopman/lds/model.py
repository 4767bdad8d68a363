"""LDS network: pose autoencoder plus recurrent Koopman-operator estimator."""

from __future__ import annotations

import math
from logging import Logger, getLogger
from typing import Any

import torch
from pydantic import BaseModel, Field, model_validator
from torch import nn

from gait_koopman.pose.types import FRAME_DIM

logger: Logger = getLogger(__name__)


class LdsArchitecture(BaseModel):
    """Layer sizes of the LDS network."""

    input_dim: int = Field(
        default=FRAME_DIM,
        description="Width of a flattened rotation frame (24 joints x 9 entries)",
    )
    encoder_widths: tuple[int, ...] = Field(
        default=(216, 198, 180),
        description="Output widths of the encoder layers; the last one is the latent width",
    )
    latent_channels: int = Field(
        default=90,
        description="Number of complex latent channels (latent width = 2 x channels)",
        ge=1,
    )

    @model_validator(mode="after")
    def validate_widths(self) -> "LdsArchitecture":
        """Validate the latent layer holds real and imaginary halves."""
        if not self.encoder_widths:
            raise ValueError("Encoder needs at least one layer")
        if self.encoder_widths[-1] != 2 * self.latent_channels:
            raise ValueError(
                f"Last encoder width {self.encoder_widths[-1]} must equal "
                f"2 x latent_channels = {2 * self.latent_channels}"
            )
        if any(w < 1 for w in self.encoder_widths):
            raise ValueError("Layer widths must be positive")
        return self

    @property
    def latent_dim(self) -> int:
        return 2 * self.latent_channels

    @property
    def decoder_widths(self) -> tuple[int, ...]:
        """Mirror of the encoder: 180 -> 198 -> 216 -> 216 for the defaults."""
        return tuple(reversed(self.encoder_widths[:-1])) + (self.input_dim,)


def _mlp(widths: list[int]) -> nn.Sequential:
    """Feed-forward stack with ReLU between (not after) layers."""
    layers: list[nn.Module] = []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if i > 0:
            layers.append(nn.ReLU())
        layers.append(nn.Linear(fan_in, fan_out))
    return nn.Sequential(*layers)


def _xavier_(weight: torch.Tensor, fan_in: int, fan_out: int) -> None:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        weight.uniform_(-bound, bound)


class LdsModel(nn.Module):
    """Encoder E, decoder D and the gated recurrent K-estimator.

    Args:
        architecture: Layer sizes, defaults to the 216/198/180 contract
        seed: Seed for the uniform Glorot initialization
    """

    def __init__(self, architecture: LdsArchitecture | None = None, seed: int = 0):
        super().__init__()
        self.architecture = architecture or LdsArchitecture()
        arch = self.architecture

        self.encoder = _mlp([arch.input_dim, *arch.encoder_widths])
        self.decoder = _mlp([arch.latent_dim, *arch.decoder_widths])
        self.k_estimator = nn.GRU(arch.latent_dim, arch.latent_dim, num_layers=1, batch_first=True)
        # Two outputs per channel, turned into a phase by atan2
        self.k_readout = nn.Linear(arch.latent_dim, 2 * arch.latent_channels)

        self.to(torch.float64)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        """Glorot-uniform weights, zero biases, deterministic per seed."""
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for module in self.modules():
                if isinstance(module, nn.Linear):
                    _xavier_(module.weight, module.in_features, module.out_features)
                    nn.init.zeros_(module.bias)
            hidden = self.k_estimator.hidden_size
            for name, param in self.k_estimator.named_parameters():
                if name.startswith("weight"):
                    # One Glorot draw per gate block (reset, update, candidate)
                    for block in param.data.split(hidden, dim=0):
                        _xavier_(block, block.shape[1], block.shape[0])
                else:
                    nn.init.zeros_(param)

    def param_groups(self) -> dict[str, list[nn.Parameter]]:
        """Named parameter groups in stable order."""
        return {
            "encoder": list(self.encoder.parameters()),
            "decoder": list(self.decoder.parameters()),
            "k_estimator": list(self.k_estimator.parameters()) + list(self.k_readout.parameters()),
        }

    def descriptor(self) -> dict[str, Any]:
        """Architecture descriptor stored in model files."""
        return {"type": "lds", **self.architecture.model_dump(mode="json")}

    def encode(self, frames: torch.Tensor) -> torch.Tensor:
        """Map (..., 216) frames to (..., 180) latents (90 re, then 90 im)."""
        return self.encoder(frames)

    def decode(self, latents: torch.Tensor) -> torch.Tensor:
        """Map (..., 180) latents back to raw (..., 216) frames."""
        return self.decoder(latents)

    def estimate_phases(self, latents: torch.Tensor) -> torch.Tensor:
        """Estimate the Koopman phases from a latent prefix.

        Args:
            latents: (T, 180) or (B, T, 180) latent states, T >= 1

        Returns:
            (90,) or (B, 90) phases in (-pi, pi]
        """
        if latents.shape[-2] < 1:
            raise ValueError("Koopman estimation needs at least one latent state")
        _, hidden = self.k_estimator(latents)
        paired = self.k_readout(hidden[-1])
        paired = paired.reshape(*paired.shape[:-1], self.architecture.latent_channels, 2)
        phases = torch.atan2(paired[..., 1], paired[..., 0])
        return torch.where(phases <= -math.pi, phases + 2.0 * math.pi, phases)
