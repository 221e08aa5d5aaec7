"""Classification metrics: accuracy, macro-F1, ROC-AUC, confusion matrix."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class MetricsReport:
    accuracy: float
    f1: float
    auc: float
    confusion: list
    precision: list
    recall: list
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num, dtype=float), where=den > 0)


def precision_recall_f1(cm: np.ndarray):
    """Per-class precision, recall, F1; an undefined ratio counts as 0."""
    tp = np.diag(cm).astype(float)
    precision = _safe_div(tp, cm.sum(axis=0).astype(float))
    recall = _safe_div(tp, cm.sum(axis=1).astype(float))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return precision, recall, f1


def binary_auc(positive, scores) -> float:
    """Mann-Whitney AUC with average ranks for ties; 0.5 when a class is missing."""
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(y_true, probs: np.ndarray) -> float:
    """Binary AUC on the class-1 column, macro one-vs-rest for more classes."""
    y_true = np.asarray(y_true, dtype=int)
    probs = np.asarray(probs, dtype=float)
    if probs.shape[1] == 2:
        return binary_auc(y_true == 1, probs[:, 1])
    return float(np.mean([binary_auc(y_true == c, probs[:, c]) for c in range(probs.shape[1])]))


def evaluate_predictions(y_true, probs: np.ndarray) -> MetricsReport:
    probs = np.asarray(probs, dtype=float)
    y_true = np.asarray(y_true, dtype=int)
    n_classes = probs.shape[1]
    y_pred = np.argmax(probs, axis=1)
    cm = confusion_matrix(y_true, y_pred, n_classes)
    precision, recall, f1 = precision_recall_f1(cm)
    total = cm.sum()
    return MetricsReport(
        accuracy=float(np.trace(cm) / total) if total else 0.0,
        f1=float(f1.mean()),
        auc=roc_auc(y_true, probs),
        confusion=cm.tolist(),
        precision=precision.tolist(),
        recall=recall.tolist(),
        n_samples=int(total),
    )
