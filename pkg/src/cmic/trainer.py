"""Constrained cross-entropy training with alternating reference updates.

The batch loss is

    J = (1/B) sum H(y, P_x)                      (one-hot cross entropy)
      + lam * (1/B) sum D(P_x || Q_y)            (concentration pull)
      - beta * (1/B^2) sum 1{y != v} H(P_x, P_u) (separation push)

where the per-class references {Q_c} are held fixed during each parameter
update and refreshed afterwards from class-stratified batches with a slow
exponential moving average -- alternating minimization over parameters and
references. With lam = beta = 0 the loss reduces exactly to the plain
cross-entropy baseline, so ablations differ only in the loss.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .data import Dataset, epoch_batches, stratified_batches
from .errors import ConfigError, DegenerateBatchWarning
from .metrics import MetricsReport, metrics_report
from .nn import MLP, SGDState, parameter_gradients, schedule_step, sgd_step
from .numerics import as_labels, clamp_log

MODES = ("ce", "cmic")


@dataclass
class TrainConfig:
    """Hyper-parameters for one training run.

    Defaults follow the reference protocol: SGD momentum 0.9, weight decay
    5e-4, batch 64, initial lr 0.1 divided by 10 at epochs 60/120/160, 200
    epochs; loss weights lam = 0.7, beta = 0.4; per-class reference batches
    of 8 with EMA momentum 0.9999, references initialized uniform.
    """

    mode: str = "cmic"
    lam: float = 0.7
    beta: float = 0.4
    epochs: int = 200
    batch_size: int = 64
    class_batch_size: int = 8
    q_momentum: float = 0.9999
    q_update_every: int = 1
    freeze_pairwise_target: bool = False
    hidden: Tuple[int, ...] = (32, 32)
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lr_milestones: Tuple[int, ...] = (60, 120, 160)
    lr_decay: float = 10.0
    lr_anneal: Optional[float] = None
    seed: int = 0

    @property
    def constraint_ratio(self) -> Optional[float]:
        """beta / lam, the implied value of the normalized-ratio constraint."""
        return self.beta / self.lam if self.lam > 0 else None

    def validate(self) -> "TrainConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "ce" and (self.lam != 0.0 or self.beta != 0.0):
            raise ConfigError("ce mode requires lam = beta = 0")
        if self.mode == "cmic" and self.lam <= 0.0:
            raise ConfigError("cmic mode requires lam > 0")
        if self.beta < 0.0:
            raise ConfigError("beta must be >= 0")
        if self.batch_size < 1 or self.class_batch_size < 1:
            raise ConfigError("batch sizes must be >= 1")
        if not 0.0 <= self.q_momentum < 1.0:
            raise ConfigError("q_momentum must be in [0, 1)")
        if self.q_update_every < 1:
            raise ConfigError("q_update_every must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        return self


@dataclass
class QState:
    """Per-class reference distributions, one row per class."""

    q: np.ndarray  # (C, C)

    @classmethod
    def uniform(cls, classes: int) -> "QState":
        return cls(q=np.full((classes, classes), 1.0 / classes))


def update_q(state: QState, class_rows: Mapping[int, np.ndarray],
             momentum: float) -> QState:
    """EMA update of each provided class reference toward its batch mean.

    q_c <- momentum * q_c + (1 - momentum) * mean(rows_c), renormalized to
    sum exactly to 1; classes without a batch are left unchanged.
    """
    q = state.q.copy()
    for cls, rows in class_rows.items():
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ConfigError(f"class {cls}: need a nonempty 2-D row block")
        mixed = momentum * q[cls] + (1.0 - momentum) * rows.mean(axis=0)
        q[cls] = mixed / mixed.sum()
    return QState(q=q)


def cmic_loss(probs, labels, q: QState, lam: float, beta: float,
              freeze_pairwise_target: bool = False) -> ad.Var:
    """Differentiable batch loss; returns a scalar Var.

    ``probs`` is a Var (rows already softmaxed) or a plain array, in which
    case the result carries no gradients. The references ``q`` are constants
    for the backward pass; with ``freeze_pairwise_target`` the second
    argument of the pairwise cross entropy is also held constant.
    """
    probs_var = probs if isinstance(probs, ad.Var) else ad.constant(probs)
    b, c = probs_var.value.shape
    y = as_labels(labels, b, c)
    if b == 1 and beta > 0.0:
        warnings.warn("batch of size 1 has no cross-class pairs; "
                      "separation term is 0", DegenerateBatchWarning)

    log_probs = ad.log(probs_var)
    onehot = np.zeros((b, c))
    onehot[np.arange(b), y] = 1.0
    loss = ad.scale(ad.total_sum(ad.mul(ad.constant(onehot), log_probs)), -1.0 / b)

    if lam != 0.0:
        log_refs = ad.constant(clamp_log(q.q[y]))
        kl = ad.total_sum(ad.mul(probs_var, ad.sub(log_probs, log_refs)))
        loss = ad.add(loss, ad.scale(kl, lam / b))

    if beta != 0.0:
        mask = (y[:, np.newaxis] != y[np.newaxis, :]).astype(np.float64)
        target = ad.constant(log_probs.value) if freeze_pairwise_target else log_probs
        pair = ad.total_sum(ad.mul(probs_var, ad.matmul(ad.constant(mask), target)))
        # separation term = -(1/B^2) * pair, subtracted with weight beta
        loss = ad.add(loss, ad.scale(pair, beta / (b * b)))

    return loss


def _check_all_classes(dataset: Dataset) -> None:
    counts = dataset.class_counts()
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ConfigError(f"class {int(missing[0])} absent from the training set")


def train_epoch(model: MLP, dataset: Dataset, q: QState, config: TrainConfig,
                opt_state: SGDState, rng: np.random.Generator
                ) -> Tuple[QState, List[float]]:
    """One pass over the data: per batch, a parameter step then (in cmic
    mode) a reference refresh from fresh class-stratified batches.

    Mutates the model and optimizer state in place; returns the new
    references and the per-batch loss values.
    """
    if config.mode == "cmic":
        _check_all_classes(dataset)
    losses: List[float] = []
    for b_index, idx in enumerate(epoch_batches(dataset.n, config.batch_size, rng)):
        logits, params = model.forward_tape(dataset.features[idx])
        probs = ad.softmax_rows(logits)
        loss = cmic_loss(probs, dataset.labels[idx], q, config.lam, config.beta,
                         config.freeze_pairwise_target)
        grads = parameter_gradients(loss, params)
        sgd_step(model, grads, opt_state)
        losses.append(float(loss.value))

        if config.mode == "cmic" and (b_index + 1) % config.q_update_every == 0:
            batches = stratified_batches(dataset, config.class_batch_size, rng)
            class_rows = {cls: model.predict_proba(dataset.features[members])
                          for cls, members in batches.items()}
            q = update_q(q, class_rows, config.q_momentum)
    return q, losses


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    cmi: float
    gamma: float
    ncmi: Optional[float]
    eps_top1: float
    eps_expected: float
    ce_bound: float
    train_loss: float

    CSV_FIELDS = ("epoch", "cmi", "gamma", "ncmi", "eps_top1", "eps_expected",
                  "ce_bound", "train_loss")


@dataclass
class EvolutionLog:
    """Per-epoch metric records over a held-out evaluation set."""

    records: List[EpochRecord] = field(default_factory=list)

    @staticmethod
    def csv_header() -> str:
        return ",".join(EpochRecord.CSV_FIELDS)

    @staticmethod
    def csv_row(record: EpochRecord) -> str:
        def fmt(v):
            if v is None:
                return "nan"
            if isinstance(v, int):
                return str(v)
            return repr(float(v))
        return ",".join(fmt(getattr(record, f)) for f in EpochRecord.CSV_FIELDS)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.csv_header() + "\n")
            for record in self.records:
                fh.write(self.csv_row(record) + "\n")

    def to_jsonable(self) -> list:
        return [{f: getattr(r, f) for f in EpochRecord.CSV_FIELDS}
                for r in self.records]


def evaluate_epoch(model: MLP, eval_set: Dataset, epoch: int,
                   train_loss: float) -> EpochRecord:
    """Full metrics over the evaluation set; requires every class present."""
    report: MetricsReport = metrics_report(
        model.predict_proba(eval_set.features), eval_set.labels,
        require_all_classes=True)
    return EpochRecord(
        epoch=epoch, cmi=report.cmi, gamma=report.gamma, ncmi=report.ncmi,
        eps_top1=report.eps_top1, eps_expected=report.eps_expected,
        ce_bound=report.ce_bound, train_loss=train_loss,
    )


@dataclass
class TrainResult:
    model: MLP
    q: QState
    opt_state: SGDState
    log: EvolutionLog


def train(train_set: Dataset, eval_set: Dataset, config: TrainConfig,
          model: Optional[MLP] = None,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """Run the full alternating loop for ``config.epochs`` epochs.

    Deterministic for a fixed config: the seed drives model init, batch
    order, and stratified sampling through separate child streams.
    """
    config.validate()
    if config.mode == "cmic":
        _check_all_classes(train_set)
    seq = np.random.SeedSequence(config.seed)
    init_seed, data_seed = seq.spawn(2)
    if model is None:
        dims = [train_set.dim, *config.hidden, train_set.class_count]
        model = MLP.init(dims, init_seed)
    rng = np.random.default_rng(data_seed)
    opt_state = SGDState(
        lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay,
        milestones=tuple(config.lr_milestones), decay=config.lr_decay,
        anneal=config.lr_anneal,
    )
    q = QState.uniform(train_set.class_count)
    log = EvolutionLog()
    for epoch in range(1, config.epochs + 1):
        schedule_step(opt_state, epoch)
        q, losses = train_epoch(model, train_set, q, config, opt_state, rng)
        record = evaluate_epoch(model, eval_set, epoch, float(np.mean(losses)))
        log.records.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return TrainResult(model=model, q=q, opt_state=opt_state, log=log)
