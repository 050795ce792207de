"""Binary-classification metrics: confusion matrix, the four derived scores,
and the experiment report table. The positive class is PNEUMONIA throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .validation import check_binary_labels, shape_mismatch

EXPERIMENT_NAMES = {1: "Original", 2: "Augmented", 3: "Generated", 4: "Org+Aug+Gen"}
ROW_ORDER = ("Original", "Augmented", "Generated", "Org+Aug+Gen")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()


def confusion(predictions, labels, threshold=0.5) -> ConfusionMatrix:
    """Count thresholded predictions against labels. A prediction exactly at
    the threshold counts as positive."""
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise shape_mismatch("predictions vs labels", p.shape, y.shape)
    y = check_binary_labels(y.ravel())
    pos = p.ravel() >= threshold
    actual = y == 1
    tp = int(np.sum(pos & actual))
    fp = int(np.sum(pos & ~actual))
    fn = int(np.sum(~pos & actual))
    tn = int(np.sum(~pos & ~actual))
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, precision, recall, F1. Divisions with an empty denominator
    yield 0.0 and are flagged as degenerate instead of returning NaN."""
    if cm.total == 0:
        raise ValueError("cannot compute metrics for an empty evaluation set")
    degenerate = []
    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp > 0:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if cm.tp + cm.fn > 0:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return MetricsReport(
        accuracy=accuracy, precision=precision, recall=recall, f1=f1,
        degenerate=tuple(degenerate),
    )


def round_half_up(value: float, places: int = 2) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def report_table(reports: dict[str, MetricsReport]) -> str:
    """Fixed-order table of the four scores, rounded half-up to 2 decimals.
    Experiments missing from the map are omitted."""
    if not reports:
        raise ValueError("report map must be non-empty")
    header = f"{'experiment':<14}{'accuracy':>10}{'precision':>11}{'recall':>8}{'f1':>6}"
    lines = [header]
    for name in ROW_ORDER:
        if name not in reports:
            continue
        r = reports[name]
        lines.append(
            f"{name:<14}"
            f"{round_half_up(r.accuracy):>10.2f}"
            f"{round_half_up(r.precision):>11.2f}"
            f"{round_half_up(r.recall):>8.2f}"
            f"{round_half_up(r.f1):>6.2f}"
        )
    for name in reports:
        if name not in ROW_ORDER:
            raise ValueError(f"unknown experiment row {name!r}")
    return "\n".join(lines)


def reports_to_csv(reports: dict[str, MetricsReport], path) -> None:
    """CSV export with raw unrounded values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "accuracy", "precision", "recall", "f1"])
        for name in ROW_ORDER:
            if name in reports:
                r = reports[name]
                writer.writerow([name, repr(r.accuracy), repr(r.precision),
                                 repr(r.recall), repr(r.f1)])
