"""Binary model files: LDS network plus an optional recognition head."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from logging import Logger, getLogger
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import nn

from gait_koopman.errors import ArchitectureMismatchError, CorruptModelError
from gait_koopman.lds.model import LdsArchitecture, LdsModel
from gait_koopman.recognition.head import HeadArchitecture, RecognitionHead

logger: Logger = getLogger(__name__)

MAGIC = b"GKMODEL\x00"
FORMAT_VERSION = 1
CHECKSUM_BYTES = 32
_PREFIX = struct.Struct("<8sII")


@dataclass
class ModelBundle:
    """Models restored from a model file."""

    lds: LdsModel
    head: RecognitionHead | None
    descriptor: dict[str, Any]


def _section(module: nn.Module) -> tuple[dict[str, Any], bytes]:
    state = module.state_dict()
    tensors = [[name, list(t.shape)] for name, t in state.items()]
    payload = b"".join(
        np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f8").tobytes() for t in state.values()
    )
    return {**module.descriptor(), "tensors": tensors}, payload


def write_model(path: str | Path, lds: LdsModel, head: RecognitionHead | None = None) -> None:
    """Write models as magic, version, JSON descriptor, raw <f8 values and a SHA-256 trailer."""
    lds_desc, lds_bytes = _section(lds)
    descriptor: dict[str, Any] = {"format_version": FORMAT_VERSION, "lds": lds_desc, "head": None}
    payload = lds_bytes
    if head is not None:
        head_desc, head_bytes = _section(head)
        descriptor["head"] = head_desc
        payload += head_bytes
    encoded = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(encoded)) + encoded + payload
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(body)
        f.write(hashlib.sha256(body).digest())
    logger.info(f"Wrote model ({len(body)} bytes, head={'yes' if head is not None else 'no'}) to {path}")


def _load_section(module: nn.Module, section: dict[str, Any], payload: memoryview, offset: int) -> int:
    state = module.state_dict()
    declared = [(name, tuple(shape)) for name, shape in section["tensors"]]
    expected = [(name, tuple(t.shape)) for name, t in state.items()]
    if declared != expected:
        raise ArchitectureMismatchError(f"Stored tensors do not match the {section.get('type')} architecture")
    restored = {}
    for name, shape in declared:
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(payload):
            raise CorruptModelError("Model file is truncated")
        values = np.frombuffer(payload[offset:end], dtype="<f8").reshape(shape)
        restored[name] = torch.from_numpy(values.copy()).to(state[name].dtype)
        offset = end
    module.load_state_dict(restored)
    return offset


def read_model(path: str | Path, expected: LdsArchitecture | None = None) -> ModelBundle:
    """Read a model file, verifying checksum, version and architecture.

    Args:
        path: Model file path
        expected: Architecture the LDS must have, when the caller requires one

    Returns:
        ModelBundle with the LDS model, the head (or None) and the descriptor

    Raises:
        CorruptModelError: If the file is truncated, fails its checksum or has an unknown version
        ArchitectureMismatchError: If the descriptor disagrees with the expected architecture
    """
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size + CHECKSUM_BYTES:
        raise CorruptModelError(f"Model file {path} is truncated")
    body, checksum = data[:-CHECKSUM_BYTES], data[-CHECKSUM_BYTES:]
    if hashlib.sha256(body).digest() != checksum:
        raise CorruptModelError(f"Model file {path} failed its checksum")
    magic, version, length = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CorruptModelError(f"{path} is not a model file")
    if version != FORMAT_VERSION:
        raise CorruptModelError(f"Unsupported model format version {version}")
    try:
        descriptor = json.loads(body[_PREFIX.size : _PREFIX.size + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptModelError(f"Model descriptor is unreadable: {e}") from e

    lds_desc = descriptor.get("lds") or {}
    if lds_desc.get("type") != "lds":
        raise ArchitectureMismatchError(f"Expected an LDS section, found type '{lds_desc.get('type')}'")
    try:
        architecture = LdsArchitecture.model_validate(
            {k: v for k, v in lds_desc.items() if k not in ("type", "tensors")}
        )
    except ValueError as e:
        raise ArchitectureMismatchError(f"Invalid LDS architecture: {e}") from e
    if expected is not None and architecture != expected:
        raise ArchitectureMismatchError(
            f"Model architecture {architecture.model_dump()} differs from expected {expected.model_dump()}"
        )

    payload = memoryview(body)[_PREFIX.size + length :]
    lds = LdsModel(architecture)
    offset = _load_section(lds, lds_desc, payload, 0)

    head = None
    head_desc = descriptor.get("head")
    if head_desc is not None:
        if head_desc.get("type") != "head":
            raise ArchitectureMismatchError(f"Expected a head section, found type '{head_desc.get('type')}'")
        try:
            head_arch = HeadArchitecture.model_validate(
                {k: v for k, v in head_desc.items() if k not in ("type", "tensors")}
            )
        except ValueError as e:
            raise ArchitectureMismatchError(f"Invalid head architecture: {e}") from e
        if head_arch.latent_channels != architecture.latent_channels:
            raise ArchitectureMismatchError("Head and LDS disagree on the number of latent channels")
        head = RecognitionHead(head_arch)
        offset = _load_section(head, head_desc, payload, offset)
        head.eval()
    if offset != len(payload):
        raise CorruptModelError(f"Model file has {len(payload) - offset} unexpected trailing bytes")

    lds.eval()
    logger.debug(f"Read model from {path}")
    return ModelBundle(lds=lds, head=head, descriptor=descriptor)
