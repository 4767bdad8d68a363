"""CSV reports, plot images and the run log."""

from __future__ import annotations

import json
import os
import platform
from logging import Logger, getLogger
from pathlib import Path
from typing import Any

import pandas as pd

logger: Logger = getLogger(__name__)

RUN_LOG_NAME = "run_log.json"


def write_csv(df: pd.DataFrame, path: str | Path) -> Path:
    """Write a report DataFrame with round-trippable floats."""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(df)} rows to {path}")
    return path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_loss_history(history: pd.DataFrame, path: str | Path) -> Path:
    """Line plot of every loss column against the epoch, log-scaled."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for column in history.columns:
        if column == "epoch" or not (history[column] > 0).any():
            continue
        ax.plot(history["epoch"], history[column], label=column, linewidth=2)
    ax.set_yscale("log")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.grid(True)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"Saved loss plot to {path}")
    return Path(path)


def plot_cmc(curve: pd.DataFrame, path: str | Path) -> Path:
    """CMC curve from a frame with rank and accuracy columns."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve["rank"], curve["accuracy"], marker="o", linewidth=2, linestyle="--", color="blue")
    ax.set_xlabel("Rank")
    ax.set_ylabel("Identification rate")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"Saved CMC plot to {path}")
    return Path(path)


def plot_extension_bars(sweep: pd.DataFrame, path: str | Path) -> Path:
    """Grouped bars of rank-1 accuracy per probe length, one bar per extension setting."""
    plt = _pyplot()
    table = sweep.pivot(index="truncate", columns="extend", values="rank_1").sort_index()
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(table.columns), 1)
    for i, extend in enumerate(table.columns):
        offsets = [x + i * width for x in range(len(table.index))]
        ax.bar(offsets, table[extend].to_numpy(), width=width, label=f"+{extend} frames")
    ax.set_xticks([x + 0.4 - width / 2 for x in range(len(table.index))])
    ax.set_xticklabels(["full" if t < 0 else str(t) for t in table.index])
    ax.set_xlabel("Input frames")
    ax.set_ylabel("Rank-1 accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"Saved extension plot to {path}")
    return Path(path)


def library_versions() -> dict[str, str]:
    import matplotlib
    import numpy
    import pydantic
    import torch

    return {
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "torch": torch.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.__version__,
        "matplotlib": matplotlib.__version__,
    }


def write_run_log(out_dir: str | Path, record: dict[str, Any]) -> Path:
    """Save the reproducibility record of a run as JSON."""
    os.makedirs(out_dir, exist_ok=True)
    path = Path(out_dir) / RUN_LOG_NAME
    with open(path, "w") as f:
        json.dump({**record, "libraries": library_versions()}, f, default=str, indent=2, sort_keys=True)
    return path


def load_run_log(out_dir: str | Path) -> dict[str, Any]:
    with open(Path(out_dir) / RUN_LOG_NAME) as f:
        return json.load(f)
