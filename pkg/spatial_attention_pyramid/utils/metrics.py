"""Submodule providing segmentation metrics."""
from typing import Dict

import numpy as np

from ..exceptions import ShapeError

__all__ = ["confusion_matrix", "intersection_over_union", "pixel_accuracy", "segmentation_scores"]


def confusion_matrix(predictions: np.ndarray, labels: np.ndarray, classes: int) -> np.ndarray:
    """Return the classes×classes matrix counting (label, prediction) pairs."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ShapeError(
            "Predictions of shape {predictions} do not match labels of shape {labels}.".format(
                predictions=predictions.shape,
                labels=labels.shape
            )
        )
    return np.bincount(
        labels.astype(np.int64).ravel()*classes + predictions.astype(np.int64).ravel(),
        minlength=classes*classes
    ).reshape(classes, classes)


def intersection_over_union(confusion: np.ndarray) -> np.ndarray:
    """Return per-class IoU = TP/(TP+FP+FN); NaN for classes never seen nor predicted."""
    true_positives = np.diag(confusion).astype(np.float64)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - true_positives
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, true_positives/union, np.nan)


def pixel_accuracy(confusion: np.ndarray) -> float:
    """Return the fraction of correctly classified pixels."""
    return float(np.trace(confusion)/max(confusion.sum(), 1))


def segmentation_scores(confusion: np.ndarray) -> Dict[str, float]:
    """Return per-class IoU, mIoU and pixel accuracy of a confusion matrix."""
    iou = intersection_over_union(confusion)
    scores = {
        "iou_{}".format(label): float(value)
        for label, value in enumerate(iou)
    }
    scores["miou"] = float(np.nanmean(iou)) if np.isfinite(iou).any() else float("nan")
    scores["pixel_accuracy"] = pixel_accuracy(confusion)
    return scores
