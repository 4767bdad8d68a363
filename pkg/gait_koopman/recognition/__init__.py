"""Recognition layer: gait embeddings, triplet losses and CMC evaluation."""

from gait_koopman.recognition.evaluation import (
    CmcResult,
    GalleryProbeProtocol,
    cmc_evaluate,
    cosine_similarity,
    embed_items,
    embed_sequence,
    evaluate_split,
    extend_then_match,
    truncation_sweep,
)
from gait_koopman.recognition.head import (
    GaitEmbedding,
    HeadArchitecture,
    HeadOutput,
    RecognitionHead,
    fuse,
    inference_mode,
    motion_embed,
    motion_features,
    shape_embed,
)
from gait_koopman.recognition.losses import (
    batch_hard_triplet_loss,
    embedding_distance,
    identity_loss,
    soft_reconstruction_loss,
    triplet_loss,
)

__all__ = [
    "CmcResult",
    "GaitEmbedding",
    "GalleryProbeProtocol",
    "HeadArchitecture",
    "HeadOutput",
    "RecognitionHead",
    "batch_hard_triplet_loss",
    "cmc_evaluate",
    "cosine_similarity",
    "embed_items",
    "embed_sequence",
    "embedding_distance",
    "evaluate_split",
    "extend_then_match",
    "fuse",
    "identity_loss",
    "inference_mode",
    "motion_embed",
    "motion_features",
    "shape_embed",
    "soft_reconstruction_loss",
    "triplet_loss",
    "truncation_sweep",
]
