"""Cosine matching, closed-set CMC evaluation and sequence extension."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import Logger, getLogger
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from gait_koopman.errors import ProtocolError
from gait_koopman.lds.koopman import forecast, summarize_sequence
from gait_koopman.lds.model import LdsModel
from gait_koopman.pose.types import LabeledSequence, PoseSequence, ShapeVector
from gait_koopman.recognition.head import (
    GaitEmbedding,
    RecognitionHead,
    fuse,
    motion_embed,
    shape_embed,
)
from gait_koopman.utils import run_parallel

logger: Logger = getLogger(__name__)

DEFAULT_EXTENSION = 40
REPORT_TOP = 5


def _values(x: GaitEmbedding | ArrayLike) -> NDArray[np.float64]:
    return x.values if isinstance(x, GaitEmbedding) else np.asarray(x, dtype=np.float64)


def cosine_similarity(a: GaitEmbedding | ArrayLike, b: GaitEmbedding | ArrayLike) -> float:
    """Cosine similarity of two embeddings; a plain dot product for unit vectors.

    Raises:
        ValueError: If either vector is zero or the lengths differ
    """
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValueError(f"Embedding shapes differ: {va.shape} vs {vb.shape}")
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("Cosine similarity is undefined for a zero vector")
    dot = float(np.dot(va, vb))
    if not (isinstance(a, GaitEmbedding) and isinstance(b, GaitEmbedding)):
        dot /= na * nb
    # Unit-norm tolerance and rounding can push the dot product past +-1
    return float(np.clip(dot, -1.0, 1.0))


@dataclass
class GalleryProbeProtocol:
    """Closed-set identification setup.

    Args:
        gallery_labels: Identity of each gallery embedding, in insertion order
        gallery: (G_n, E) gallery embeddings
        probe_labels: True identity of each probe
        probes: (P_n, E) probe embeddings
        probe_ids: Identifier of each probe for reports
        ranks: Rank cut-offs to summarize
    """

    gallery_labels: list[str]
    gallery: NDArray[np.float64]
    probe_labels: list[str]
    probes: NDArray[np.float64]
    probe_ids: list[str] = field(default_factory=list)
    ranks: tuple[int, ...] = (1, 5)

    def __post_init__(self) -> None:
        self.gallery = np.atleast_2d(np.asarray(self.gallery, dtype=np.float64))
        self.probes = np.atleast_2d(np.asarray(self.probes, dtype=np.float64))
        if len(self.gallery_labels) != len(self.gallery):
            raise ValueError("Gallery labels and embeddings differ in count")
        if len(self.probe_labels) != len(self.probes):
            raise ValueError("Probe labels and embeddings differ in count")
        if len(self.gallery) == 0 or len(self.probes) == 0:
            raise ProtocolError("Protocol needs at least one gallery and one probe embedding")
        if self.gallery.shape[1] != self.probes.shape[1]:
            raise ValueError("Gallery and probe embeddings differ in width")
        if not self.probe_ids:
            self.probe_ids = [f"probe_{i}" for i in range(len(self.probes))]

    @classmethod
    def from_embeddings(
        cls,
        gallery: Sequence[tuple[str, GaitEmbedding]],
        probes: Sequence[tuple[str, GaitEmbedding]],
        ranks: tuple[int, ...] = (1, 5),
    ) -> "GalleryProbeProtocol":
        """Build a protocol from (label, embedding) pairs."""
        return cls(
            gallery_labels=[label for label, _ in gallery],
            gallery=np.stack([e.values for _, e in gallery]),
            probe_labels=[label for label, _ in probes],
            probes=np.stack([e.values for _, e in probes]),
            ranks=ranks,
        )

    def identities(self) -> list[str]:
        """Gallery identities in first-appearance order."""
        return list(dict.fromkeys(self.gallery_labels))


@dataclass
class CmcResult:
    """Rank-k accuracies and per-probe ranking details."""

    curve: NDArray[np.float64]
    ranks: tuple[int, ...]
    per_probe: pd.DataFrame

    def rank(self, k: int) -> float:
        """Fraction of probes whose identity is within the top k (k beyond G counts as G)."""
        if k < 1:
            raise ValueError(f"Rank must be at least 1, got {k}")
        return float(self.curve[min(k, len(self.curve)) - 1])

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame({"rank": list(self.ranks), "accuracy": [self.rank(k) for k in self.ranks]})

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"rank": np.arange(1, len(self.curve) + 1), "accuracy": self.curve})


def cmc_evaluate(protocol: GalleryProbeProtocol) -> CmcResult:
    """Rank gallery identities for every probe and accumulate the CMC curve.

    An identity's score is the maximum cosine similarity over its gallery
    embeddings. Ties keep gallery first-appearance order.

    Args:
        protocol: Closed-set gallery/probe embeddings

    Returns:
        CmcResult with the full curve (length = number of gallery identities)

    Raises:
        ProtocolError: If a probe identity has no gallery embedding
    """
    identities = protocol.identities()
    missing = sorted(set(protocol.probe_labels) - set(identities))
    if missing:
        raise ProtocolError(f"Probe identities absent from the gallery: {missing}")

    index = {label: i for i, label in enumerate(identities)}
    columns = np.array([index[label] for label in protocol.gallery_labels])
    similarities = protocol.probes @ protocol.gallery.T

    scores = np.full((len(protocol.probes), len(identities)), -np.inf)
    for j, col in enumerate(columns):
        scores[:, col] = np.maximum(scores[:, col], similarities[:, j])

    order = np.argsort(-scores, axis=1, kind="stable")
    truth = np.array([index[label] for label in protocol.probe_labels])
    positions = np.argmax(order == truth[:, None], axis=1)
    curve = np.array([np.mean(positions < k) for k in range(1, len(identities) + 1)])

    top = min(REPORT_TOP, len(identities))
    rows = []
    for i, probe_id in enumerate(protocol.probe_ids):
        row: dict[str, object] = {
            "probe_id": probe_id,
            "true_label": protocol.probe_labels[i],
            "rank": int(positions[i]) + 1,
        }
        for r in range(top):
            row[f"pred_{r + 1}"] = identities[order[i, r]]
            row[f"sim_{r + 1}"] = float(scores[i, order[i, r]])
        rows.append(row)

    logger.info(
        f"CMC over {len(protocol.probes)} probes / {len(identities)} identities: "
        f"rank-1 {curve[0]:.3f}"
    )
    return CmcResult(curve=curve, ranks=protocol.ranks, per_probe=pd.DataFrame(rows))


def embed_sequence(
    lds: LdsModel, head: RecognitionHead, sequence: PoseSequence, shape: ShapeVector
) -> GaitEmbedding:
    """Gait embedding of one sequence: shape branch, LDS motion branch, fusion."""
    z1, K = summarize_sequence(lds, sequence)
    return fuse(head, shape_embed(head, shape), motion_embed(head, z1, K))


def extend_then_match(
    lds: LdsModel,
    probe: PoseSequence,
    extra: int,
    head: RecognitionHead,
    shape: ShapeVector,
    anchor: Literal["first", "last"] = "first",
) -> GaitEmbedding:
    """Lengthen a probe with `extra` forecast frames, then embed it.

    Args:
        lds: Trained LDS model used both for forecasting and embedding
        probe: Observed probe poses, at least 2 frames
        extra: Frames to forecast (0 embeds the probe unchanged)
        head: Trained recognition head
        shape: Sequence shape of the probe
        anchor: Forecast anchor, see `forecast`

    Returns:
        GaitEmbedding of the lengthened sequence
    """
    if extra < 0:
        raise ValueError(f"Extension must be non-negative, got {extra}")
    probe.require_length(2)
    lengthened = probe.extended(forecast(lds, probe, extra, anchor=anchor))
    return embed_sequence(lds, head, lengthened, shape)


def embed_items(
    lds: LdsModel,
    head: RecognitionHead,
    items: Sequence[LabeledSequence],
    truncate: int | None = None,
    extend: int = 0,
    max_workers: int = 4,
    progress: bool = True,
) -> list[GaitEmbedding]:
    """Embed labeled sequences, optionally truncated and then extended.

    Results are in input order. The models are put in evaluation mode.
    """
    lds.eval()
    head.eval()

    def run(item: LabeledSequence) -> GaitEmbedding:
        sequence = item.sequence
        if truncate is not None and truncate < len(sequence):
            sequence = sequence.truncated(truncate)
        return extend_then_match(lds, sequence, extend, head, item.shape)

    return run_parallel(run, items, max_workers=max_workers, desc="Embedding", progress=progress)


def evaluate_split(
    lds: LdsModel,
    head: RecognitionHead,
    gallery: Sequence[LabeledSequence],
    probes: Sequence[LabeledSequence],
    truncate: int | None = None,
    extend: int = 0,
    ranks: tuple[int, ...] = (1, 5),
    gallery_embeddings: list[GaitEmbedding] | None = None,
    progress: bool = True,
) -> CmcResult:
    """Embed gallery and (possibly truncated/extended) probes and run CMC."""
    if gallery_embeddings is None:
        gallery_embeddings = embed_items(lds, head, gallery, progress=progress)
    probe_embeddings = embed_items(lds, head, probes, truncate=truncate, extend=extend, progress=progress)
    protocol = GalleryProbeProtocol(
        gallery_labels=[item.label for item in gallery],
        gallery=np.stack([e.values for e in gallery_embeddings]),
        probe_labels=[item.label for item in probes],
        probes=np.stack([e.values for e in probe_embeddings]),
        probe_ids=[item.sequence_id or f"probe_{i}" for i, item in enumerate(probes)],
        ranks=ranks,
    )
    return cmc_evaluate(protocol)


def truncation_sweep(
    lds: LdsModel,
    head: RecognitionHead,
    gallery: Sequence[LabeledSequence],
    probes: Sequence[LabeledSequence],
    truncations: Iterable[int | None],
    extensions: Iterable[int] = (0,),
    ranks: tuple[int, ...] = (1, 5),
    progress: bool = True,
) -> pd.DataFrame:
    """Rank accuracies for every (truncation, extension) pair.

    Returns:
        DataFrame with columns truncate, extend, probe_frames, rank_<k>...
    """
    gallery_embeddings = embed_items(lds, head, gallery, progress=progress)
    extensions = list(extensions)
    rows = []
    for truncate in truncations:
        for extend in extensions:
            result = evaluate_split(
                lds,
                head,
                gallery,
                probes,
                truncate=truncate,
                extend=extend,
                ranks=ranks,
                gallery_embeddings=gallery_embeddings,
                progress=progress,
            )
            observed = min(len(p.sequence) for p in probes)
            if truncate is not None:
                observed = min(observed, truncate)
            row: dict[str, object] = {
                "truncate": truncate if truncate is not None else -1,
                "extend": extend,
                "probe_frames": observed + extend,
            }
            row.update({f"rank_{k}": result.rank(k) for k in ranks})
            rows.append(row)
            logger.info(f"truncate={truncate} extend={extend}: rank-1 {result.rank(1):.3f}")
    return pd.DataFrame(rows)
