"""Concentration/separation metrics over classifier output distributions,
plus a constrained trainer that optimizes them alongside cross entropy."""

from .attacks import AttackConfig, fgsm, pgd, robust_accuracy_curve
from .data import Dataset, gen_blobs, load_dataset_csv, load_idx, load_probmatrix_csv
from .metrics import (
    CentroidSet,
    MetricsReport,
    class_centroids,
    cmi,
    error_rates,
    metrics_report,
    ncmi,
    pearson,
    separation,
    separation_centroid_kl,
    separation_kl,
    variational_cmi,
)
from .nn import MLP, SGDState, load_checkpoint, save_checkpoint, schedule_step, sgd_step
from .numerics import (
    clamp_log,
    cross_entropy,
    cross_entropy_onehot,
    kl_divergence,
    shannon_entropy,
    softmax,
)
from .trainer import (
    EvolutionLog,
    QState,
    TrainConfig,
    TrainResult,
    cmic_loss,
    train,
    train_epoch,
    update_q,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "fgsm", "pgd", "robust_accuracy_curve",
    "Dataset", "gen_blobs", "load_dataset_csv", "load_idx", "load_probmatrix_csv",
    "CentroidSet", "MetricsReport", "class_centroids", "cmi", "error_rates",
    "metrics_report", "ncmi", "pearson", "separation", "separation_centroid_kl",
    "separation_kl", "variational_cmi",
    "MLP", "SGDState", "load_checkpoint", "save_checkpoint", "schedule_step",
    "sgd_step",
    "clamp_log", "cross_entropy", "cross_entropy_onehot", "kl_divergence",
    "shannon_entropy", "softmax",
    "EvolutionLog", "QState", "TrainConfig", "TrainResult", "cmic_loss",
    "train", "train_epoch", "update_q",
]
