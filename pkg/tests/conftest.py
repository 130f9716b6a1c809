"""Shared helpers for building random metric instances."""
import numpy as np


def random_instance(rng, n=None, c=None, min_mass=None):
    """Random (probability matrix, labels) with every class present.

    ``min_mass`` bounds entries away from 0 (clamp-free instances).
    """
    if c is None:
        c = int(rng.integers(2, 6))
    if n is None:
        n = int(rng.integers(c, 33))
    probs = rng.dirichlet(np.ones(c), size=n)
    if min_mass is not None:
        probs = (probs + min_mass) / (probs + min_mass).sum(axis=1, keepdims=True)
    # guarantee every class appears at least once
    labels = np.concatenate([np.arange(c), rng.integers(0, c, size=n - c)])
    rng.shuffle(labels)
    return probs, labels.astype(np.int64)


def balanced_instance(rng, per_class, c, min_mass=1e-3):
    """Clamp-free instance with exactly balanced labels."""
    n = per_class * c
    probs = rng.dirichlet(np.ones(c), size=n)
    probs = (probs + min_mass) / (probs + min_mass).sum(axis=1, keepdims=True)
    labels = np.repeat(np.arange(c), per_class)
    rng.shuffle(labels)
    return probs, labels.astype(np.int64)
