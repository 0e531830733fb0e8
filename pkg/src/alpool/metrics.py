"""Precision/recall/F-measure over binary predictions (+1 is the target class)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledInstance, to_csr
from .svm import SvmModel, decision_values, predict_values


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float


def f_measure(tp: int, fp: int, fn: int, tn: int = 0) -> Metrics:
    """Compute P/R/F from counts; zero denominators yield zero."""
    if min(tp, fp, fn, tn) < 0:
        raise ValueError("counts must be non-negative")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp=tp, fp=fp, fn=fn, tn=tn, precision=precision, recall=recall, f1=f1)


def metrics_from_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> Metrics:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == -1)))
    fn = int(np.sum((y_pred == -1) & (y_true == 1)))
    tn = int(np.sum((y_pred == -1) & (y_true == -1)))
    return f_measure(tp, fp, fn, tn)


def evaluate(model: SvmModel, test: list[LabeledInstance]) -> Metrics:
    """Counts from predicting a held-out test set."""
    if not test:
        raise ValueError("test set is empty")
    y = np.array([inst.label for inst in test])
    x = to_csr(test, model.dimension)
    preds = predict_values(decision_values(model, x))
    return metrics_from_predictions(y, preds)
