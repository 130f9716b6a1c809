"""White-box FGSM and PGD perturbations under an L-infinity budget.

Attacks maximize the plain one-hot cross entropy of the model's softmax
output regardless of how the model was trained. Every perturbed point
satisfies x - budget <= adv <= x + budget and the [0, 1] clip range exactly
(elementwise against the computed bounds); per-sample crafting is
independent, so everything is batched.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .errors import InvalidInput
from .nn import MLP


@dataclass(frozen=True)
class AttackConfig:
    """PGD settings; ``step_size`` defaults to 2.5 * budget / iterations."""

    budget: float
    iterations: int = 5
    step_size: Optional[float] = None
    clip: Tuple[float, float] = (0.0, 1.0)
    random_start: bool = True
    seed: int = 0

    def resolved_step(self) -> float:
        if self.step_size is not None:
            if self.step_size <= 0:
                raise InvalidInput("step_size must be > 0")
            return self.step_size
        return 2.5 * self.budget / max(self.iterations, 1)


def _check_inputs(x: np.ndarray, budget: float, clip: Tuple[float, float]):
    if budget < 0:
        raise InvalidInput("budget must be >= 0")
    lo, hi = clip
    if x.min() < lo or x.max() > hi:
        raise InvalidInput(f"features outside clip range [{lo}, {hi}]")


def input_gradient(model: MLP, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the summed one-hot cross entropy with respect to the input."""
    x_var = ad.Var(np.asarray(x, dtype=np.float64))
    logits, _ = model.forward_tape(x_var)
    probs = ad.softmax_rows(logits)
    b, c = probs.value.shape
    onehot = np.zeros((b, c))
    onehot[np.arange(b), np.asarray(y, dtype=np.int64)] = 1.0
    loss = ad.scale(ad.total_sum(ad.mul(ad.constant(onehot), ad.log(probs))), -1.0)
    ad.backward(loss)
    return x_var.grad


def fgsm(model: MLP, x: np.ndarray, y: np.ndarray, budget: float,
         clip: Tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """One-step sign attack: clip(x + budget * sign(grad_x loss))."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _check_inputs(x, budget, clip)
    if budget == 0.0:
        return x.copy()
    step = budget * np.sign(input_gradient(model, x, y))
    return np.clip(x + step, clip[0], clip[1])


def pgd(model: MLP, x: np.ndarray, y: np.ndarray, config: AttackConfig) -> np.ndarray:
    """Iterated sign steps projected onto the budget ball and clip range.

    Starts from a seeded uniform point inside the ball unless
    ``random_start`` is off.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _check_inputs(x, config.budget, config.clip)
    if config.iterations < 1:
        raise InvalidInput("iterations must be >= 1")
    if config.budget == 0.0:
        return x.copy()
    lo = np.maximum(x - config.budget, config.clip[0])
    hi = np.minimum(x + config.budget, config.clip[1])
    if config.random_start:
        rng = np.random.default_rng(config.seed)
        adv = x + rng.uniform(-config.budget, config.budget, size=x.shape)
        adv = np.clip(adv, lo, hi)
    else:
        adv = x.copy()
    step = config.resolved_step()
    for _ in range(config.iterations):
        grad = input_gradient(model, adv, y)
        adv = np.clip(adv + step * np.sign(grad), lo, hi)
    return adv


def robust_accuracy_curve(model: MLP, dataset: Dataset,
                          budgets: Sequence[float], attack: str = "fgsm",
                          iterations: int = 5, seed: int = 0,
                          clip: Tuple[float, float] = (0.0, 1.0)
                          ) -> List[Tuple[float, float]]:
    """Top-1 accuracy under attack, one (budget, accuracy) pair per budget.

    Budgets must be sorted ascending; budget 0 yields the clean accuracy.
    """
    budgets = [float(b) for b in budgets]
    if any(b2 < b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise InvalidInput("budgets must be sorted ascending")
    if attack not in ("fgsm", "pgd"):
        raise InvalidInput(f"unknown attack {attack!r}")
    curve = []
    for budget in budgets:
        if budget == 0.0:
            adv = dataset.features
        elif attack == "fgsm":
            adv = fgsm(model, dataset.features, dataset.labels, budget, clip)
        else:
            cfg = AttackConfig(budget=budget, iterations=iterations,
                               clip=clip, seed=seed)
            adv = pgd(model, dataset.features, dataset.labels, cfg)
        pred = np.argmax(model.predict_proba(adv), axis=1)
        curve.append((budget, float(np.mean(pred == dataset.labels))))
    return curve
