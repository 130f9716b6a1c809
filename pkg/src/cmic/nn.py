"""Dense ReLU multilayer perceptron, SGD with momentum/weight decay, and a
step learning-rate schedule, on top of the reverse-mode engine in
``autodiff``. Parameters are float64 and every run is deterministic for a
fixed seed on a single thread.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, FormatError, InvalidInput, NumericalError
from .numerics import softmax

CHECKPOINT_FORMAT = "cmic-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class MLP:
    """Stack of affine layers with elementwise ReLU between them.

    ``weights[i]`` has shape (fan_in, fan_out); the final fan_out is the
    class count.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def init(cls, layer_dims: Sequence[int], seed: int) -> "MLP":
        """Seeded symmetric init: uniform(-a, a), a = sqrt(6 / (fan_in + fan_out))."""
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise InvalidInput(f"layer_dims must chain >= 2 positive ints, got {dims}")
        if dims[-1] < 2:
            raise InvalidInput("output width (class count) must be >= 2")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases)

    @property
    def layer_dims(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> List[np.ndarray]:
        """Flat parameter list, ordered (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Plain evaluation to logits; no graph is recorded."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"forward: expected (N, {self.input_dim}), got {h.shape}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
        if not np.all(np.isfinite(h)):
            raise NumericalError("forward: non-finite logits")
        return h

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.forward(x))

    def forward_tape(self, x) -> Tuple[ad.Var, List[ad.Var]]:
        """Record the forward pass; returns (logits, parameter leaves).

        ``x`` may be an ndarray (treated as constant) or a Var, in which
        case input gradients are also available after backward.
        """
        x_var = x if isinstance(x, ad.Var) else ad.constant(np.asarray(x, dtype=np.float64))
        if x_var.value.ndim != 2 or x_var.value.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"forward_tape: expected (N, {self.input_dim}), got {x_var.value.shape}")
        params: List[ad.Var] = []
        h = x_var
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w_var, b_var = ad.Var(w), ad.Var(b)
            params.extend((w_var, b_var))
            h = ad.add(ad.matmul(h, w_var), b_var)
            if i < len(self.weights) - 1:
                h = ad.relu(h)
        return h, params


def parameter_gradients(loss: ad.Var, params: List[ad.Var]) -> List[np.ndarray]:
    """Run the reverse pass and collect gradients in parameter order."""
    ad.backward(loss)
    return [p.grad for p in params]


@dataclass
class SGDState:
    """SGD with momentum and coupled weight decay, plus the LR schedule.

    Update rule: v <- momentum * v + (grad + weight_decay * theta);
    theta <- theta - lr * v.

    The schedule divides lr by ``decay`` when the (1-based) epoch hits a
    milestone; alternatively ``anneal`` multiplies lr by a constant factor at
    the start of every epoch after the first.
    """

    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0005
    milestones: Tuple[int, ...] = ()
    decay: float = 10.0
    anneal: Optional[float] = None
    velocities: List[np.ndarray] = field(default_factory=list)
    last_epoch: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidInput("learning rate must be > 0")


def sgd_step(model: MLP, grads: List[np.ndarray], state: SGDState) -> None:
    """One in-place SGD update of the model parameters."""
    params = model.parameters()
    if len(grads) != len(params):
        raise DimensionMismatch(f"{len(grads)} gradients for {len(params)} parameters")
    if not state.velocities:
        state.velocities = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, state.velocities):
        if g.shape != p.shape:
            raise DimensionMismatch(f"gradient shape {g.shape} vs parameter {p.shape}")
        v *= state.momentum
        v += g + state.weight_decay * p
        p -= state.lr * v


def schedule_step(state: SGDState, epoch: int) -> SGDState:
    """Advance the LR schedule to ``epoch`` (1-based). Idempotent per epoch."""
    if epoch < 0:
        raise InvalidInput("epoch must be >= 0")
    for e in range(state.last_epoch + 1, epoch + 1):
        if state.anneal is not None:
            if e > 1:
                state.lr *= state.anneal
        elif e in state.milestones:
            state.lr /= state.decay
    state.last_epoch = max(state.last_epoch, epoch)
    return state


def save_checkpoint(path, model: MLP, optimizer: Optional[SGDState] = None,
                    epoch: int = 0) -> None:
    """Write model (and optionally optimizer) state as a versioned JSON document."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_dims": model.layer_dims,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "epoch": int(epoch),
        "optimizer": None,
    }
    if optimizer is not None:
        doc["optimizer"] = {
            "lr": optimizer.lr,
            "momentum": optimizer.momentum,
            "weight_decay": optimizer.weight_decay,
            "milestones": list(optimizer.milestones),
            "decay": optimizer.decay,
            "anneal": optimizer.anneal,
            "velocities": [v.ravel().tolist() for v in optimizer.velocities],
            "last_epoch": optimizer.last_epoch,
        }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> Tuple[MLP, Optional[SGDState], int]:
    """Load a checkpoint, validating format, version, and shape congruence."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a JSON checkpoint ({exc})") from exc
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: unrecognized checkpoint format")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    dims = doc["layer_dims"]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        flat = np.asarray(doc["weights"][i], dtype=np.float64)
        if flat.size != fan_in * fan_out:
            raise FormatError(f"{path}: layer {i} weight size {flat.size}, "
                              f"expected {fan_in * fan_out}")
        weights.append(flat.reshape(fan_in, fan_out))
        b = np.asarray(doc["biases"][i], dtype=np.float64)
        if b.size != fan_out:
            raise FormatError(f"{path}: layer {i} bias size {b.size}, expected {fan_out}")
        biases.append(b)
    model = MLP(weights=weights, biases=biases)
    state = None
    opt = doc.get("optimizer")
    if opt is not None:
        velocities = [np.asarray(v, dtype=np.float64).reshape(p.shape)
                      for v, p in zip(opt["velocities"], model.parameters())]
        state = SGDState(
            lr=opt["lr"], momentum=opt["momentum"], weight_decay=opt["weight_decay"],
            milestones=tuple(opt["milestones"]), decay=opt["decay"],
            anneal=opt["anneal"], velocities=velocities,
            last_epoch=opt["last_epoch"],
        )
    return model, state, int(doc.get("epoch", 0))
