"""Latency prediction models, evaluation, grading, and the model registry."""

from .common import (
    ModelError,
    EmptyDatasetError,
    SchemaMismatchError,
    TrainedModel,
    predict,
    predict_batch_ms,
)
from .gbt import GbtConfig, train_gbt
from .mlp import MlpConfig, DivergenceError, train_mlp, loss_and_grads
from .evaluate import (
    EvalReport,
    GradeBounds,
    DEFAULT_GRADE_BOUNDS,
    InsufficientTailSamplesError,
    evaluate,
    tail_eval,
    grade_quality,
)
from .registry import (
    ModelRegistry,
    RegistryError,
    DuplicateModelIdError,
    ModelNotFoundError,
    CorruptArtifactError,
)

__all__ = [
    "ModelError",
    "EmptyDatasetError",
    "SchemaMismatchError",
    "TrainedModel",
    "predict",
    "predict_batch_ms",
    "GbtConfig",
    "train_gbt",
    "MlpConfig",
    "DivergenceError",
    "train_mlp",
    "loss_and_grads",
    "EvalReport",
    "GradeBounds",
    "DEFAULT_GRADE_BOUNDS",
    "InsufficientTailSamplesError",
    "evaluate",
    "tail_eval",
    "grade_quality",
    "ModelRegistry",
    "RegistryError",
    "DuplicateModelIdError",
    "ModelNotFoundError",
    "CorruptArtifactError",
]
