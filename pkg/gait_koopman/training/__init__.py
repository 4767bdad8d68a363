"""Training layer: gradients, Adam updates and training loops."""

from gait_koopman.config import TrainConfig
from gait_koopman.training.gradcheck import GRADCHECK_COLUMNS, run_gradient_suite, scaled_gradient
from gait_koopman.training.kernel import (
    AdamState,
    AdamStepReport,
    GradientCheck,
    GradientSet,
    ParamSet,
    adam_step,
    clip_gradients,
    finite_difference_check,
    gradient,
    value_and_gradient,
)
from gait_koopman.training.trainer import (
    HISTORY_COLUMNS,
    TrainingResult,
    recognition_objective,
    train_lds,
    train_recognition,
)

__all__ = [
    "GRADCHECK_COLUMNS",
    "HISTORY_COLUMNS",
    "AdamState",
    "AdamStepReport",
    "GradientCheck",
    "GradientSet",
    "ParamSet",
    "TrainConfig",
    "TrainingResult",
    "adam_step",
    "clip_gradients",
    "finite_difference_check",
    "gradient",
    "recognition_objective",
    "run_gradient_suite",
    "scaled_gradient",
    "train_lds",
    "train_recognition",
    "value_and_gradient",
]
