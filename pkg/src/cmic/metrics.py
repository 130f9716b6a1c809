"""Concentration/separation metrics over classifier output-probability spaces.

Given the output distributions of a classifier on a labeled sample (an N x C
row-stochastic matrix plus N labels), this module estimates

* ``cmi``         -- mean KL divergence from each row to its class centroid
                     (intra-class concentration; smaller = tighter clusters),
* ``separation``  -- mean pairwise cross entropy between rows of different
                     classes over all ordered pairs (inter-class separation),
* ``ncmi``        -- their ratio, a scale-free trait that tracks error rate,

together with the KL-based separation variants, expected/top-1 error rates,
the cross-entropy bound on the expected error, and the variational form of
``cmi`` used by the trainer.

Pairwise sums are O(N^2), computed exactly in fixed-size row/column blocks
with a fixed reduction order, so results are deterministic and matrices never
materialize beyond ``block x block``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateInput, DegenerateSeparation, DimensionMismatch, EmptyClass
from .numerics import (
    as_labels,
    as_prob_matrix,
    clamp_log,
    cross_entropy_onehot,
    kl_divergence,
    shannon_entropy,
)

#: Row/column block edge for the exact O(N^2) pairwise sums.
PAIR_BLOCK = 1024


@dataclass(frozen=True)
class CentroidSet:
    """Per-class mean output distributions and per-class sample counts.

    ``defined[c]`` is False when class ``c`` has no samples; its centroid row
    is then a uniform placeholder that callers must not consume.
    """

    centroids: np.ndarray  # (C, C) rows are distributions
    counts: np.ndarray  # (C,) int64, sums to N
    defined: np.ndarray  # (C,) bool

    @property
    def class_count(self) -> int:
        return self.centroids.shape[0]


class ErrorRates(NamedTuple):
    eps_expected: float
    eps_top1: float
    ce_bound: float


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one (probability matrix, labels) pair.

    ``ncmi`` is None when separation is exactly zero (single effective
    class), which keeps the report serializable instead of raising.
    """

    n: int
    c: int
    cmi: float
    gamma: float
    ncmi: Optional[float]
    gamma_prime: float
    gamma_double_prime: float
    eps_expected: float
    eps_top1: float
    ce_bound: float

    FIELDS = ("n", "c", "cmi", "gamma", "ncmi", "gamma_prime",
              "gamma_double_prime", "eps_expected", "eps_top1", "ce_bound")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def _validated(p, y):
    probs = as_prob_matrix(p)
    labels = as_labels(y, probs.shape[0], probs.shape[1])
    return probs, labels


def class_centroids(p, y, require_all: bool = True) -> CentroidSet:
    """Arithmetic mean of rows per class.

    With ``require_all`` (the default) an absent class raises EmptyClass,
    surfacing sampling bugs; otherwise the absent class is flagged undefined.
    """
    probs, labels = _validated(p, y)
    c = probs.shape[1]
    counts = np.bincount(labels, minlength=c).astype(np.int64)
    defined = counts > 0
    if require_all and not defined.all():
        raise EmptyClass(int(np.flatnonzero(~defined)[0]))
    cents = np.zeros((c, c), dtype=np.float64)
    np.add.at(cents, labels, probs)
    cents[defined] /= counts[defined, np.newaxis]
    cents[~defined] = 1.0 / c
    return CentroidSet(centroids=cents, counts=counts, defined=defined)


def cmi(p, y, cents: Optional[CentroidSet] = None) -> float:
    """Mean KL divergence from each row to the centroid of its class (nats).

    Classes absent from ``y`` are irrelevant here: only centroids of classes
    that actually occur are consumed.
    """
    probs, labels = _validated(p, y)
    if cents is None:
        cents = class_centroids(probs, labels, require_all=False)
    return float(np.mean(kl_divergence(probs, cents.centroids[labels])))


def _masked_bilinear_sum(rows, labels_rows, cols, labels_cols, block=None):
    """sum over ordered (j, k) with labels_rows[j] != labels_cols[k] of rows[j] . cols[k].

    Blocked over both indices in a fixed order so the reduction is
    deterministic for a given input; exact, no sampling.
    """
    if block is None:
        block = PAIR_BLOCK
    n_rows, n_cols = rows.shape[0], cols.shape[0]
    total = 0.0
    for j0 in range(0, n_rows, block):
        j1 = min(j0 + block, n_rows)
        block_rows = rows[j0:j1]
        block_labels = labels_rows[j0:j1, np.newaxis]
        for k0 in range(0, n_cols, block):
            k1 = min(k0 + block, n_cols)
            inner = block_rows @ cols[k0:k1].T
            mask = block_labels != labels_cols[np.newaxis, k0:k1]
            total += float(np.where(mask, inner, 0.0).sum())
    return total


def _cross_pair_counts(labels, n, c):
    # number of k with y_k != y_j, per row j
    counts = np.bincount(labels, minlength=c)
    return n - counts[labels]


def _cross_entropy_pair_sum(rows, log_probs, labels):
    """sum over ordered differently-labeled pairs of H(rows_j, probs_k)."""
    # + 0.0 normalizes the empty sum's -0.0
    return -_masked_bilinear_sum(rows, labels, log_probs, labels) + 0.0


def separation(p, y) -> float:
    """Mean cross entropy over ordered pairs of differently-labeled rows (nats).

    (1/N^2) * sum_{j,k} 1{y_j != y_k} H(row_j, row_k); the indicator removes
    the diagonal automatically and both pair orders are counted.
    """
    probs, labels = _validated(p, y)
    n = probs.shape[0]
    return _cross_entropy_pair_sum(probs, clamp_log(probs), labels) / (n * n)


def separation_kl(p, y) -> float:
    """Separation with KL divergence as the pair term instead of cross entropy."""
    probs, labels = _validated(p, y)
    n, c = probs.shape
    # D(row_j || row_k) = H(row_j, row_k) - H(row_j)
    cross_sum = _cross_entropy_pair_sum(probs, clamp_log(probs), labels)
    ent_sum = float(np.dot(shannon_entropy(probs), _cross_pair_counts(labels, n, c)))
    return (cross_sum - ent_sum) / (n * n)


def separation_centroid_kl(p, y, cents: Optional[CentroidSet] = None) -> float:
    """Separation with KL from the row's class centroid to the other row.

    (1/N^2) * sum_{j,k} 1{y_j != y_k} D(centroid(y_j) || row_k), the
    empirical form of the centroid-to-cluster separation measure.
    """
    probs, labels = _validated(p, y)
    n, c = probs.shape
    if cents is None:
        cents = class_centroids(probs, labels, require_all=False)
    cross_sum = _cross_entropy_pair_sum(cents.centroids[labels], clamp_log(probs), labels)
    ent_q = shannon_entropy(cents.centroids)
    ent_sum = float(np.dot(ent_q[labels], _cross_pair_counts(labels, n, c)))
    return (cross_sum - ent_sum) / (n * n)


def ncmi(p, y) -> float:
    """cmi / separation; raises DegenerateSeparation when separation is 0."""
    g = separation(p, y)
    if g <= 0.0:
        raise DegenerateSeparation("separation is zero; ncmi undefined")
    return cmi(p, y) / g


def error_rates(p, y) -> ErrorRates:
    """Expected error, top-1 error, and the cross-entropy bound, per-sample means.

    * eps_expected = 1 - mean_j row_j(y_j): error when the prediction is
      sampled from the output distribution;
    * eps_top1: fraction of rows whose argmax (ties to the smallest index)
      differs from the label;
    * ce_bound = mean_j -ln row_j(y_j), an upper bound on eps_expected.
    """
    probs, labels = _validated(p, y)
    idx = np.arange(probs.shape[0])
    true_mass = probs[idx, labels]
    eps_expected = float(np.mean(1.0 - true_mass))
    eps_top1 = float(np.mean(np.argmax(probs, axis=1) != labels))
    ce_bound = float(np.mean(cross_entropy_onehot(labels, probs)))
    return ErrorRates(eps_expected, eps_top1, ce_bound)


def variational_cmi(p, y, refs) -> float:
    """Mean KL from each row to an arbitrary per-class reference distribution.

    ``refs`` is a C x C matrix (or CentroidSet) of reference distributions,
    one row per class. For any references this is >= cmi(p, y); it attains
    the minimum exactly at the class centroids.
    """
    probs, labels = _validated(p, y)
    if isinstance(refs, CentroidSet):
        refs = refs.centroids
    ref_matrix = as_prob_matrix(refs, "refs")
    c = probs.shape[1]
    if ref_matrix.shape != (c, c):
        raise DimensionMismatch(
            f"refs: expected {(c, c)}, got {ref_matrix.shape}")
    return float(np.mean(kl_divergence(probs, ref_matrix[labels])))


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient of two equal-length sequences."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatch(f"pearson: shapes {x.shape} vs {y.shape}")
    if x.size < 2:
        raise DegenerateInput("pearson: need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(np.dot(dx, dx))
    vy = float(np.dot(dy, dy))
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInput("pearson: zero variance")
    return float(np.dot(dx, dy) / np.sqrt(vx * vy))


def metrics_report(p, y, require_all_classes: bool = False) -> MetricsReport:
    """Compute every metric for one (probability matrix, labels) pair.

    By default a class absent from ``y`` is tolerated (its centroid is never
    consumed), so single-class inputs produce a report with gamma = 0 and
    ncmi = None; pass ``require_all_classes=True`` to fail with EmptyClass
    instead, surfacing sampling bugs in evaluation pipelines.
    """
    probs, labels = _validated(p, y)
    n, c = probs.shape
    cents = class_centroids(probs, labels, require_all=require_all_classes)
    log_probs = clamp_log(probs)
    cross_counts = _cross_pair_counts(labels, n, c)

    cmi_value = cmi(probs, labels, cents)
    cross_sum = _cross_entropy_pair_sum(probs, log_probs, labels)
    gamma = cross_sum / (n * n)
    gamma_prime = (cross_sum - float(np.dot(shannon_entropy(probs), cross_counts))) / (n * n)
    centroid_cross = _cross_entropy_pair_sum(cents.centroids[labels], log_probs, labels)
    ent_q = shannon_entropy(cents.centroids)
    gamma_double_prime = (centroid_cross - float(np.dot(ent_q[labels], cross_counts))) / (n * n)
    rates = error_rates(probs, labels)

    return MetricsReport(
        n=n,
        c=c,
        cmi=cmi_value,
        gamma=gamma,
        ncmi=(cmi_value / gamma) if gamma > 0.0 else None,
        gamma_prime=gamma_prime,
        gamma_double_prime=gamma_double_prime,
        eps_expected=rates.eps_expected,
        eps_top1=rates.eps_top1,
        ce_bound=rates.ce_bound,
    )
