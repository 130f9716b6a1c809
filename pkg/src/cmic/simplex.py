"""Barycentric projection of 3-class probability mass onto the 2-D simplex.

Vertices: class a at (0, 0), class b at (1, 0), class c at (0.5, sqrt(3)/2).
Two input paths exist because externally supplied probability matrices carry
no logits: ``project_probabilities`` renormalizes the three selected
probability columns, while ``project_logits`` keeps the three selected
logits and softmaxes them, for use with model checkpoints.
"""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidInput
from .numerics import softmax

VERTICES = np.array([[0.0, 0.0],
                     [1.0, 0.0],
                     [0.5, np.sqrt(3.0) / 2.0]])


def _selected(matrix: np.ndarray, classes: Sequence[int]) -> np.ndarray:
    cls = [int(c) for c in classes]
    if len(cls) != 3 or len(set(cls)) != 3:
        raise InvalidInput("need exactly 3 distinct class indices")
    if min(cls) < 0 or max(cls) >= matrix.shape[1]:
        raise InvalidInput(f"class index out of range for {matrix.shape[1]} columns")
    return matrix[:, cls]


def project_probabilities(probs, classes: Sequence[int]
                          ) -> Tuple[np.ndarray, np.ndarray]:
    """Project rows of a probability matrix using the 3 selected columns.

    Returns (points, kept): an (M, 2) array for the M rows with nonzero mass
    on the selected classes, and the boolean keep-mask over all N rows.
    """
    matrix = np.asarray(probs, dtype=np.float64)
    sel = _selected(matrix, classes)
    mass = sel.sum(axis=1)
    kept = mass > 0.0
    renorm = sel[kept] / mass[kept, np.newaxis]
    return renorm @ VERTICES, kept


def project_logits(logits, classes: Sequence[int]) -> np.ndarray:
    """Project rows of a logit matrix: keep 3 logits, softmax, then map."""
    matrix = np.asarray(logits, dtype=np.float64)
    sel = _selected(matrix, classes)
    return softmax(sel) @ VERTICES
