"""
Classification metrics for faultsynth
-------------------------------------
Confusion matrices (rows are true labels, columns predictions) and the
accuracy and macro-averaged precision, recall and F1 derived from them,
computed with scikit-learn.
"""

from dataclasses import dataclass

import numpy as np
from sklearn import metrics as sk_metrics

from src.errors import DataError


@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    macro_precision: float
    macro_recall: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    confusion_matrix: np.ndarray

    def summary(self):
        return {"accuracy": self.accuracy, "f1": self.macro_f1,
                "precision": self.macro_precision, "recall": self.macro_recall}


def confusion_matrix(labels, predictions, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise DataError("labels and predictions differ in length")
    if labels.size == 0:
        return np.zeros((n_classes, n_classes), dtype=np.int64)
    return sk_metrics.confusion_matrix(labels, predictions, labels=np.arange(n_classes)).astype(np.int64)


def _scores(labels, predictions, n_classes, classes, matrix):
    if labels.size == 0:
        raise DataError("cannot score an empty set of predictions")
    precision, recall, f1, _ = sk_metrics.precision_recall_fscore_support(
        labels, predictions, labels=np.arange(n_classes), average=None, zero_division=0)
    macro_labels = None if classes is None else np.asarray(classes, dtype=np.int64)
    macro_p, macro_r, macro_f1, _ = sk_metrics.precision_recall_fscore_support(
        labels, predictions, labels=macro_labels, average="macro", zero_division=0)
    return Metrics(
        accuracy=float(sk_metrics.accuracy_score(labels, predictions)),
        macro_f1=float(macro_f1),
        macro_precision=float(macro_p),
        macro_recall=float(macro_r),
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        confusion_matrix=matrix,
    )


def metrics_from_confusion(matrix, classes=None):
    """
    Accuracy and macro scores of a confusion matrix.

    Macro averages run over `classes` (default: every class that occurs as
    a true label or a prediction). A class with no predictions has
    precision 0.
    """
    matrix = np.asarray(matrix, dtype=np.int64)
    n_classes = matrix.shape[0]
    cells = np.repeat(np.arange(matrix.size), matrix.reshape(-1))
    return _scores(cells // n_classes, cells % n_classes, n_classes, classes, matrix)


def compute_metrics(labels, predictions, n_classes):
    matrix = confusion_matrix(labels, predictions, n_classes)
    return _scores(np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64), n_classes,
                   None, matrix)


def silhouette_score(points, labels):
    """Mean silhouette coefficient with Euclidean distances."""
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise DataError("silhouette needs at least two clusters")
    return float(sk_metrics.silhouette_score(np.asarray(points, dtype=np.float64), labels, metric="euclidean"))


def box_summary(values):
    """min, q1, median, q3, max of a sample."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("box summary of an empty sample")
    q = np.percentile(values, [0, 25, 50, 75, 100])
    return dict(zip(("min", "q1", "median", "q3", "max"), (float(v) for v in q)))
