"""Figure rendering for the CLI report paths.

Each helper writes one PNG next to the delimited output it illustrates. The
Agg backend is forced so rendering works headless.
"""
from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simplex import VERTICES


def save_evolution_figure(records, path) -> None:
    """2x2 panel of concentration, separation, their ratio, and top-1 error."""
    epochs = [r.epoch for r in records]
    panels = [
        ("cmi", "CMI (nats)"),
        ("gamma", "separation (nats)"),
        ("ncmi", "NCMI"),
        ("eps_top1", "top-1 error"),
    ]
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, (attr, label) in zip(axes.ravel(), panels):
        values = [getattr(r, attr) for r in records]
        values = [np.nan if v is None else v for v in values]
        ax.plot(epochs, values, marker=".", lw=1.2)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("epoch")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_simplex_figure(points: np.ndarray, labels: Sequence[int],
                        classes: Sequence[int], path) -> None:
    """Scatter of projected rows inside the triangle, colored by label."""
    fig, ax = plt.subplots(figsize=(6, 5.5))
    triangle = np.vstack([VERTICES, VERTICES[0]])
    ax.plot(triangle[:, 0], triangle[:, 1], color="black", lw=1.0)
    labels = np.asarray(labels)
    for cls in np.unique(labels):
        sel = labels == cls
        ax.scatter(points[sel, 0], points[sel, 1], s=12, alpha=0.6,
                   label=f"class {cls}")
    for vertex, cls in zip(VERTICES, classes):
        ax.annotate(str(cls), vertex, textcoords="offset points",
                    xytext=(4, 4), fontsize=9)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_robustness_figure(curves: Dict[str, List[Tuple[float, float]]], path) -> None:
    """Robust accuracy vs perturbation budget, one line per labeled curve."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, rows in curves.items():
        budgets = [b for b, _ in rows]
        accs = [a for _, a in rows]
        ax.plot(budgets, accs, marker="o", label=name)
    ax.set_xlabel("perturbation budget (L-inf)")
    ax.set_ylabel("robust accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_correlation_figure(ncmis: Sequence[float], errors: Sequence[float],
                            names: Sequence[str], path) -> None:
    """Error rate against NCMI for the bundled pretrained models."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.scatter(ncmis, errors, s=30)
    for x, y, name in zip(ncmis, errors, names):
        ax.annotate(name, (x, y), textcoords="offset points", xytext=(3, 3),
                    fontsize=6)
    ax.set_xlabel("NCMI")
    ax.set_ylabel("top-1 error rate")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
