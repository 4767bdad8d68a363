"""Sequence files, dataset manifests and the gallery/probe split."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from logging import Logger, getLogger
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from gait_koopman.errors import ParseError
from gait_koopman.pose.types import NUM_JOINTS, POSE_DIM, SHAPE_DIM, LabeledSequence, PoseSequence, ShapeVector

logger: Logger = getLogger(__name__)

SEQUENCE_FORMAT = "gait-koopman-sequence v1"
MANIFEST_FORMAT = "gait-koopman-manifest v1"
MANIFEST_NAME = "manifest.json"
HEADER_KEYS = ("frames", "frame_rate", "label", "shape")
POSE_COLUMNS = [f"j{j:02d}_{axis}" for j in range(NUM_JOINTS) for axis in "xyz"]


def write_sequence(
    path: str | Path, sequence: PoseSequence, shape: ShapeVector, label: str
) -> None:
    """Write a sequence as a commented header followed by N rows of 72 angles.

    Floats are written with 17 significant digits, which round-trips float64.
    """
    if "\n" in label or "\r" in label:
        raise ValueError("Labels cannot contain line breaks")
    header = [
        f"# {SEQUENCE_FORMAT}",
        f"# frames={len(sequence)}",
        f"# frame_rate={sequence.frame_rate!r}",
        f"# label={label}",
        "# shape=" + ",".join(repr(float(b)) for b in shape.coefficients),
    ]
    df = pd.DataFrame(sequence.pose_matrix(), columns=POSE_COLUMNS)
    with open(path, "w", newline="") as f:
        f.write("\n".join(header) + "\n")
        df.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")


def _parse_header(lines: list[str]) -> dict[str, str]:
    if not lines or lines[0].strip() != f"# {SEQUENCE_FORMAT}":
        found = lines[0].strip() if lines else "<empty file>"
        raise ParseError(f"expected '# {SEQUENCE_FORMAT}', found '{found}'", line=1)
    values: dict[str, str] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        key, sep, value = raw[1:].strip().partition("=")
        if not sep:
            raise ParseError(f"malformed header line '{raw.strip()}'", line=lineno)
        values[key.strip()] = value.strip()
    missing = [k for k in HEADER_KEYS if k not in values]
    if missing:
        raise ParseError(f"header is missing {missing}", line=len(lines))
    return values


def read_sequence(path: str | Path) -> LabeledSequence:
    """Read a sequence file written by `write_sequence`.

    Returns:
        LabeledSequence whose sequence_id is the file stem

    Raises:
        ParseError: On a version mismatch, row-count mismatch, or non-numeric
            or non-finite value, naming the line
    """
    path = Path(path)
    with open(path) as f:
        header_lines: list[str] = []
        for raw in f:
            if not raw.startswith("#"):
                break
            header_lines.append(raw.rstrip("\n"))
    header = _parse_header(header_lines)
    n_header = len(header_lines)

    try:
        expected = int(header["frames"])
        frame_rate = float(header["frame_rate"])
        shape_values = [float(v) for v in header["shape"].split(",")]
    except ValueError as e:
        raise ParseError(f"invalid header value: {e}", line=n_header) from e
    if len(shape_values) != SHAPE_DIM or not all(math.isfinite(v) for v in shape_values):
        raise ParseError(f"shape needs {SHAPE_DIM} finite values", line=n_header)

    try:
        df = pd.read_csv(path, skiprows=n_header, float_precision="round_trip")
    except pd.errors.ParserError as e:
        raise ParseError(str(e).strip(), line=None) from e
    except pd.errors.EmptyDataError as e:
        raise ParseError("missing column header row", line=n_header + 1) from e
    if list(df.columns) != POSE_COLUMNS:
        raise ParseError(f"expected {POSE_DIM} pose columns", line=n_header + 1)

    first_row_line = n_header + 2
    if len(df) != expected:
        if len(df) < expected:
            raise ParseError(
                f"header declares {expected} frames but only {len(df)} rows are present; "
                f"rows {len(df) + 1}..{expected} are missing",
                line=first_row_line + len(df),
            )
        raise ParseError(
            f"header declares {expected} frames but {len(df)} rows are present",
            line=first_row_line + expected,
        )

    numeric = df.apply(
        lambda col: col if pd.api.types.is_numeric_dtype(col) else pd.to_numeric(col, errors="coerce")
    ).to_numpy(dtype=np.float64)
    bad_rows = np.flatnonzero(~np.isfinite(numeric).all(axis=1))
    if bad_rows.size:
        raise ParseError("non-numeric or non-finite pose value", line=first_row_line + int(bad_rows[0]))

    sequence = PoseSequence(numeric.reshape(-1, NUM_JOINTS, 3), frame_rate)
    return LabeledSequence(
        label=header["label"], sequence=sequence, shape=ShapeVector(shape_values), sequence_id=path.stem
    )


def split_gallery_probe(
    items: Sequence[LabeledSequence], gallery_per_identity: int = 4
) -> tuple[list[LabeledSequence], list[LabeledSequence]]:
    """First `gallery_per_identity` sequences of each identity form the gallery, the rest probes."""
    if gallery_per_identity < 1:
        raise ValueError(f"Need at least one gallery sequence per identity, got {gallery_per_identity}")
    seen: dict[str, int] = {}
    gallery, probes = [], []
    for item in items:
        count = seen.get(item.label, 0)
        (gallery if count < gallery_per_identity else probes).append(item)
        seen[item.label] = count + 1
    return gallery, probes


@dataclass
class Manifest:
    """Dataset index: sequence files with their label and split."""

    entries: list[dict[str, str]]
    metadata: dict[str, Any] = field(default_factory=dict)

    def files(self, split: str | None = None) -> list[str]:
        return [e["file"] for e in self.entries if split is None or e["split"] == split]

    def to_dict(self) -> dict[str, Any]:
        return {"format": MANIFEST_FORMAT, "metadata": self.metadata, "sequences": self.entries}


def save_dataset(
    directory: str | Path,
    items: Sequence[LabeledSequence],
    gallery_per_identity: int = 4,
    metadata: dict[str, Any] | None = None,
) -> Path:
    """Write every sequence file plus a manifest recording the split.

    Returns:
        Path of the manifest
    """
    os.makedirs(directory, exist_ok=True)
    gallery, _ = split_gallery_probe(items, gallery_per_identity)
    gallery_ids = {id(item) for item in gallery}
    entries = []
    for i, item in enumerate(items):
        name = f"{item.sequence_id or f'seq_{i:04d}'}.csv"
        write_sequence(Path(directory) / name, item.sequence, item.shape, item.label)
        entries.append(
            {
                "file": name,
                "label": item.label,
                "split": "gallery" if id(item) in gallery_ids else "probe",
            }
        )
    manifest = Manifest(entries=entries, metadata={"gallery_per_identity": gallery_per_identity, **(metadata or {})})
    manifest_path = Path(directory) / MANIFEST_NAME
    with open(manifest_path, "w") as f:
        json.dump(manifest.to_dict(), f, default=str, indent=2, sort_keys=True)
    logger.info(f"Wrote {len(entries)} sequences and {MANIFEST_NAME} to {directory}")
    return manifest_path


def read_manifest(directory: str | Path) -> Manifest:
    """Load the manifest of a dataset directory.

    Raises:
        ParseError: If the manifest is not valid JSON or has the wrong format tag
    """
    path = Path(directory) / MANIFEST_NAME
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid manifest JSON: {e.msg}", line=e.lineno) from e
    if data.get("format") != MANIFEST_FORMAT:
        raise ParseError(f"expected manifest format '{MANIFEST_FORMAT}', got '{data.get('format')}'")
    return Manifest(entries=list(data["sequences"]), metadata=dict(data.get("metadata", {})))


def load_dataset(directory: str | Path) -> tuple[list[LabeledSequence], list[LabeledSequence]]:
    """Read a dataset directory into (gallery, probes) following its manifest."""
    manifest = read_manifest(directory)
    gallery, probes = [], []
    for entry in manifest.entries:
        item = read_sequence(Path(directory) / entry["file"])
        if item.label != entry["label"]:
            raise ParseError(f"{entry['file']} has label '{item.label}', manifest says '{entry['label']}'")
        (gallery if entry["split"] == "gallery" else probes).append(item)
    logger.info(f"Loaded {len(gallery)} gallery and {len(probes)} probe sequences from {directory}")
    return gallery, probes
