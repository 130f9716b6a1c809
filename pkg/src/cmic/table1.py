"""Bundled reference metrics for popular ImageNet-pretrained classifiers.

The constants below are published validation-set values (3-decimal rounding)
of the concentration metric (cmi), the separation metric (gamma), their ratio
(ncmi), and the top-1 error rate for 18 well-known pretrained models. They
are ingested as-is, never recomputed from images.

``consistency_report`` recomputes ncmi = cmi / gamma per row and correlates
ncmi with the top-1 error. Note that the published ncmi column was evidently
derived from unrounded inputs: recomputing from the rounded cmi and gamma
columns disagrees with it by up to ~9.4e-4 on some rows, beyond the half-ulp
5e-4 one would expect from consistent 3-decimal rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

from .metrics import pearson

#: (model, cmi, gamma, ncmi, top-1 error), published values.
PRETRAINED_MODEL_TABLE = (
    ("ResNet18", 0.999, 9.891, 0.101, 0.302),
    ("ResNet34", 0.902, 9.919, 0.090, 0.266),
    ("ResNet50", 0.815, 9.929, 0.082, 0.238),
    ("ResNet101", 0.779, 9.948, 0.078, 0.226),
    ("ResNet152", 0.749, 9.953, 0.075, 0.216),
    ("VGG11", 0.959, 9.899, 0.096, 0.296),
    ("VGG13", 0.930, 9.909, 0.094, 0.284),
    ("VGG16", 0.878, 9.925, 0.088, 0.266),
    ("VGG19", 0.860, 9.930, 0.086, 0.257),
    ("AlexNet", 1.331, 9.830, 0.135, 0.434),
    ("EfficientNet-B0", 0.692, 9.433, 0.073, 0.220),
    ("EfficientNet-B1", 0.661, 9.114, 0.072, 0.213),
    ("EfficientNet-B2", 0.639, 9.224, 0.069, 0.193),
    ("EfficientNet-B3", 0.627, 9.365, 0.067, 0.180),
    ("Wide-ResNet50", 0.749, 9.935, 0.075, 0.215),
    ("Wide-ResNet101", 0.734, 9.937, 0.073, 0.211),
    ("MobileNet-V3-Small", 1.088, 9.898, 0.110, 0.323),
    ("MobileNet-V3-Large", 0.922, 9.956, 0.092, 0.259),
)


@dataclass(frozen=True)
class TableRow:
    model: str
    cmi: float
    gamma: float
    ncmi_published: float
    top1_error: float
    ncmi_recomputed: float

    @property
    def discrepancy(self) -> float:
        return abs(self.ncmi_recomputed - self.ncmi_published)


@dataclass(frozen=True)
class ConsistencyReport:
    rows: tuple
    max_discrepancy: float
    pearson_published: float  # corr(published ncmi, top-1 error)
    pearson_recomputed: float  # corr(cmi/gamma, top-1 error)


def consistency_report() -> ConsistencyReport:
    """Recompute ncmi per row and correlate ncmi with the top-1 error rate."""
    rows = tuple(
        TableRow(model=m, cmi=c, gamma=g, ncmi_published=v, top1_error=e,
                 ncmi_recomputed=c / g)
        for m, c, g, v, e in PRETRAINED_MODEL_TABLE
    )
    errors = [r.top1_error for r in rows]
    return ConsistencyReport(
        rows=rows,
        max_discrepancy=max(r.discrepancy for r in rows),
        pearson_published=pearson([r.ncmi_published for r in rows], errors),
        pearson_recomputed=pearson([r.ncmi_recomputed for r in rows], errors),
    )
