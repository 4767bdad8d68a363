"""LDS layer: Koopman embedding of pose sequences."""

from gait_koopman.lds.koopman import (
    KoopmanOperator,
    LatentState,
    apply_koopman,
    decode,
    dominant_channel,
    encode,
    encode_sequence,
    estimate_koopman,
    forecast,
    prefix_length,
    rotate_latents,
    summarize_sequence,
)
from gait_koopman.lds.losses import (
    LdsLossTerms,
    lds_loss_terms,
    loss_lds,
    loss_linearity,
    loss_recons,
    loss_recons_rec,
    smooth_l1,
)
from gait_koopman.lds.model import LdsArchitecture, LdsModel

__all__ = [
    "KoopmanOperator",
    "LatentState",
    "LdsArchitecture",
    "LdsLossTerms",
    "LdsModel",
    "apply_koopman",
    "decode",
    "dominant_channel",
    "encode",
    "encode_sequence",
    "estimate_koopman",
    "forecast",
    "lds_loss_terms",
    "loss_lds",
    "loss_linearity",
    "loss_recons",
    "loss_recons_rec",
    "prefix_length",
    "rotate_latents",
    "smooth_l1",
    "summarize_sequence",
]
