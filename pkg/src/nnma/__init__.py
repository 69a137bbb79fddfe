"""Argument-pair relation classifier built on a small autodiff core.

A bidirectional LSTM encodes each argument, stacked attention levels
guided by a shared memory vector extract one representation per
argument and level, and a softmax layer scores the relation. Training
is per-instance SGD with momentum, a slower learning rate for the
embeddings, and early stopping on dev macro-F1.
"""

from .corpus import (
    Dataset,
    Instance,
    TaskSpec,
    apply_task,
    parse_tsv,
    synth_generate,
    write_tsv,
)
from .embeddings import EmbeddingMatrix, Vocabulary, load_pretrained
from .metrics import (
    MetricsResult,
    attention_kl_report,
    evaluate,
    heatmap_csv,
    heatmap_ppm,
    kl_divergence,
    macro_f1,
    render_kl_report,
)
from .model import CheckpointError, NnmaModel, Prediction
from .rng import Rng
from .tensor import Tensor, grad_check
from .trainer import (
    Hyperparams,
    MomentumSgd,
    TrainingDiverged,
    TrainingReport,
    fit,
    reweight,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "Dataset",
    "EmbeddingMatrix",
    "Hyperparams",
    "Instance",
    "MetricsResult",
    "MomentumSgd",
    "NnmaModel",
    "Prediction",
    "Rng",
    "TaskSpec",
    "Tensor",
    "TrainingDiverged",
    "TrainingReport",
    "Vocabulary",
    "apply_task",
    "attention_kl_report",
    "evaluate",
    "fit",
    "grad_check",
    "heatmap_csv",
    "heatmap_ppm",
    "kl_divergence",
    "load_pretrained",
    "macro_f1",
    "parse_tsv",
    "render_kl_report",
    "reweight",
    "synth_generate",
    "train_step",
    "write_tsv",
]
