"""Probability-vector primitives: softmax, entropy, cross entropy, KL divergence.

All quantities are in nats (natural log). Arithmetic is float64 throughout.
Logarithms are floored at ``LOG_FLOOR`` so that one-hot distributions, which
do occur at convergence, never produce infinities; the convention
``0 * ln(0/q) = 0`` is applied in the KL divergence.

Functions accept either a single distribution (1-D array of length C) or a
row-stochastic matrix (N x C); pairwise reductions then apply row by row.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, InvalidInput

#: Probabilities below this floor are clamped inside logarithms.
LOG_FLOOR = 1e-12

#: Tolerance on row sums when validating probability vectors.
SUM_TOL = 1e-9


def as_prob_matrix(p, name: str = "p") -> np.ndarray:
    """Validate and return ``p`` as an N x C float64 row-stochastic matrix.

    A 1-D input is promoted to a single row. Raises InvalidInput when any
    entry is non-finite, outside [0, 1], or a row sum strays from 1 by more
    than ``SUM_TOL``; C must be at least 2.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] < 2 or arr.shape[0] < 1:
        raise InvalidInput(f"{name}: expected N x C with C >= 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name}: non-finite entries")
    if arr.min() < 0.0 or arr.max() > 1.0 + SUM_TOL:
        raise InvalidInput(f"{name}: entries outside [0, 1]")
    sums = arr.sum(axis=1)
    if np.abs(sums - 1.0).max() > SUM_TOL:
        raise InvalidInput(f"{name}: row sums deviate from 1 by more than {SUM_TOL}")
    return arr


def as_labels(y, n: int, class_count: int, name: str = "labels") -> np.ndarray:
    """Validate labels as an int64 vector of length ``n`` with values < class_count."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise InvalidInput(f"{name}: expected a 1-D sequence")
    if arr.shape[0] != n:
        raise DimensionMismatch(f"{name}: {arr.shape[0]} labels for {n} rows")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == arr.astype(np.int64)):
            raise InvalidInput(f"{name}: non-integer labels")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= class_count):
        raise InvalidInput(f"{name}: label outside [0, {class_count})")
    return arr


def softmax(logits) -> np.ndarray:
    """Row-stochastic softmax with max-shift, exp(z - max z) / sum.

    Accepts a single logit vector or an N x C matrix; safe for logits of any
    finite magnitude.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInput("softmax: non-finite logits")
    squeeze = z.ndim == 1
    if squeeze:
        z = z[np.newaxis, :]
    if z.shape[1] < 2:
        raise InvalidInput("softmax: need at least 2 classes")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if squeeze else p


def clamp_log(p):
    """ln(max(p, LOG_FLOOR)), elementwise."""
    return np.log(np.maximum(p, LOG_FLOOR))


def _pairwise_rows(p, q, op_name):
    pa = np.asarray(p, dtype=np.float64)
    qa = np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape:
        raise DimensionMismatch(f"{op_name}: shapes {pa.shape} vs {qa.shape}")
    squeeze = pa.ndim == 1
    if squeeze:
        pa, qa = pa[np.newaxis, :], qa[np.newaxis, :]
    return pa, qa, squeeze


def cross_entropy(p, q):
    """H(p, q) = sum_i -p(i) ln q(i), per row, in nats."""
    pa, qa, squeeze = _pairwise_rows(p, q, "cross_entropy")
    h = -(pa * clamp_log(qa)).sum(axis=1)
    return float(h[0]) if squeeze else h


def cross_entropy_onehot(y, q):
    """H(y, q) = -ln q(y): cross entropy of the one-hot distribution at ``y``.

    ``y`` may be a scalar index (1-D ``q``) or a vector of indices (row per
    entry of ``q``).
    """
    qa = np.asarray(q, dtype=np.float64)
    if qa.ndim == 1:
        yi = int(y)
        if not 0 <= yi < qa.shape[0]:
            raise InvalidInput(f"cross_entropy_onehot: label {yi} out of range")
        return float(-clamp_log(qa[yi]))
    ya = as_labels(y, qa.shape[0], qa.shape[1], "y")
    return -clamp_log(qa[np.arange(qa.shape[0]), ya])


def kl_divergence(p, q):
    """D(p || q) = sum_{i: p(i)>0} p(i) (ln p(i) - ln q(i)), per row, in nats.

    Zero-mass terms contribute nothing; q-entries below the floor are clamped
    rather than yielding +inf.
    """
    pa, qa, squeeze = _pairwise_rows(p, q, "kl_divergence")
    terms = np.where(pa > 0.0, pa * (clamp_log(pa) - clamp_log(qa)), 0.0)
    d = terms.sum(axis=1)
    return float(d[0]) if squeeze else d


def shannon_entropy(p):
    """H(p) = sum_i -p(i) ln p(i), per row, in nats."""
    pa = np.asarray(p, dtype=np.float64)
    squeeze = pa.ndim == 1
    if squeeze:
        pa = pa[np.newaxis, :]
    h = -np.where(pa > 0.0, pa * clamp_log(pa), 0.0).sum(axis=1)
    return float(h[0]) if squeeze else h
