"""Run configuration models and the key=value config file loader."""

from __future__ import annotations

from logging import Logger, getLogger
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from gait_koopman.errors import ParseError

logger: Logger = getLogger(__name__)


class TrainConfig(BaseModel):
    """Hyper-parameters for LDS and recognition training."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=5e-5, description="Adam learning rate", gt=0.0)
    max_epochs: int = Field(default=100, description="Upper bound on training epochs", ge=1)
    batch_size: int = Field(default=8, description="Sequences per LDS mini-batch", ge=1)
    identities_per_batch: int = Field(
        default=8, description="Identities P sampled per recognition batch", ge=2
    )
    sequences_per_identity: int = Field(
        default=2, description="Sequences S sampled per identity in a recognition batch", ge=2
    )
    seed: int = Field(default=0, description="Seed for initialization and batch order", ge=0)
    lambda_soft: float = Field(default=0.06, description="Weight of the soft reconstruction loss", gt=0.0)
    lambda_motion: float = Field(default=1.0, description="Weight of the LDS loss in joint training", gt=0.0)
    lambda_pose: float = Field(default=1000.0, description="Pose weight inside the soft loss", gt=0.0)
    lambda_id: float = Field(
        default=1.0, description="Weight of the identity (triplet) loss; 0 disables it", ge=0.0
    )
    margin: float = Field(default=1.0, description="Triplet margin", ge=0.0)
    sequence_length: int | None = Field(
        default=None,
        description="Crop training sequences to this many frames (None = shortest in batch)",
        ge=2,
    )
    train_lds_jointly: bool = Field(
        default=False, description="Update LDS parameters during recognition training"
    )
    clip_grad_norm: float | None = Field(
        default=None, description="Global gradient-norm clip (10.0 when enabled; None = off)", gt=0.0
    )
    early_stop_patience: int = Field(
        default=10, description="Epochs without relative improvement before stopping", ge=1
    )
    early_stop_tolerance: float = Field(
        default=1e-6, description="Relative improvement counted as progress", ge=0.0
    )
    step_bound_slack: float = Field(
        default=0.1, description="Warn when an Adam update exceeds lr x (1 + slack)", ge=0.0
    )
    embedding_dim: int = Field(default=64, description="Gait embedding width E", ge=1)
    hidden_dim: int = Field(default=2048, description="Hidden width of the head MLPs", ge=1)


class SmoothingConfig(BaseModel):
    """Sliding-window polynomial smoothing of person tracks."""

    model_config = ConfigDict(extra="forbid")

    window: int = Field(default=150, description="Frames per polynomial window", ge=4)
    stride: int = Field(default=50, description="Frames between window starts", ge=1)
    degree: int = Field(default=3, description="Polynomial degree", ge=0)
    min_size: float = Field(default=1.0, description="Lower clamp for the smoothed size", gt=0.0)
    crop_resolution: int = Field(default=224, description="Side of the resized square crop", ge=1)

    @field_validator("stride")
    @classmethod
    def validate_stride(cls, v: int, info: Any) -> int:
        """Validate windows overlap or touch."""
        window = info.data.get("window")
        if window is not None and v > window:
            raise ValueError(f"Stride {v} larger than window {window} would leave frames uncovered")
        return v


class PopulationConfig(BaseModel):
    """Synthetic subject population parameters."""

    model_config = ConfigDict(extra="forbid")

    subjects: int = Field(default=20, description="Number of identities G", ge=2)
    sequences_per_subject: int = Field(default=6, description="Sequences S per identity", ge=2)
    frames: int = Field(default=150, description="Frames N per sequence", ge=2)
    noise: float = Field(default=0.01, description="Gaussian angle noise sigma (radians)", ge=0.0)
    base_frequency: float = Field(
        default=0.12, description="Lowest subject frequency (radians/frame)", gt=0.0, lt=3.14159
    )
    frequency_step: float = Field(
        default=0.025, description="Spacing between subject frequencies", ge=0.02
    )
    gallery_per_identity: int = Field(
        default=4, description="Leading sequences of each identity used as gallery", ge=1
    )
    frame_rate: float = Field(default=30.0, description="Nominal frames per second", gt=0.0)


class RunConfig(BaseModel):
    """Everything a CLI run depends on, echoed into run_log.json."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, description="Global seed", ge=0)
    out_dir: Path = Field(default=Path("out"), description="Directory receiving all outputs")
    plots: bool = Field(default=False, description="Write matplotlib plot images next to CSVs")
    train: TrainConfig = Field(default_factory=TrainConfig)
    smoothing: SmoothingConfig = Field(default_factory=SmoothingConfig)
    population: PopulationConfig = Field(default_factory=PopulationConfig)

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Return a copy with dotted-key overrides (e.g. 'train.learning_rate') applied."""
        data = self.model_dump()
        for key, value in overrides.items():
            section, _, field = key.rpartition(".")
            target = data
            if section:
                if section not in data or not isinstance(data[section], dict):
                    raise ValueError(f"Unknown config section '{section}'")
                target = data[section]
            if field not in target:
                raise ValueError(f"Unknown config key '{key}'")
            target[field] = value
        return RunConfig.model_validate(data)


def load_config_file(path: str | Path) -> dict[str, str]:
    """Read a key=value config file.

    Blank lines and lines starting with '#' are ignored.

    Args:
        path: Path to the config file

    Returns:
        Dictionary of raw string values keyed by (possibly dotted) name

    Raises:
        ParseError: If a line has no '=' or an empty key
    """
    values: dict[str, str] = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ParseError(f"expected key=value, got '{line}'", line=lineno)
            values[key.strip()] = value.strip()
    logger.debug(f"Loaded {len(values)} config values from {path}")
    return values
