"""Confusion-matrix counting and precision/recall/F1.

All three ratios use an explicit 0/0 -> 0 convention, flagged on the result
so downstream ranking stays deterministic and NaN-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False  # a 0/0 convention fired somewhere


def confusion(
    predictions: np.ndarray, labels: np.ndarray, positive_class: int = 1
) -> ConfusionCounts:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise DataError(
            f"predictions {predictions.shape} and labels {labels.shape} must be "
            "equal-length vectors"
        )
    if predictions.shape[0] == 0:
        raise DataError("cannot build a confusion matrix from zero samples")
    pred_pos = predictions == positive_class
    label_pos = labels == positive_class
    return ConfusionCounts(
        tp=int(np.sum(pred_pos & label_pos)),
        fp=int(np.sum(pred_pos & ~label_pos)),
        fn=int(np.sum(~pred_pos & label_pos)),
        tn=int(np.sum(~pred_pos & ~label_pos)),
    )


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def compute_metrics(counts: ConfusionCounts) -> Metrics:
    precision, p_deg = _ratio(counts.tp, counts.tp + counts.fp)
    recall, r_deg = _ratio(counts.tp, counts.tp + counts.fn)
    if precision + recall == 0.0:
        f1, f_deg = 0.0, True
    else:
        f1, f_deg = 2.0 * precision * recall / (precision + recall), False
    return Metrics(precision=precision, recall=recall, f1=f1,
                   degenerate=p_deg or r_deg or f_deg)


def evaluate(
    predictions: np.ndarray, labels: np.ndarray, positive_class: int = 1
) -> Metrics:
    return compute_metrics(confusion(predictions, labels, positive_class))
