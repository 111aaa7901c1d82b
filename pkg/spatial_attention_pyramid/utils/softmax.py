"""Submodule providing numerically stable softmax and sigmoid."""
import numpy as np

__all__ = ["softmax", "softmax_flat", "sigmoid"]


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Return the softmax of the logits along given axis.

    The maximum is subtracted first, so large logits never overflow.
    """
    logits = np.asarray(logits)
    exponentials = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return exponentials / exponentials.sum(axis=axis, keepdims=True)


def softmax_flat(logits: np.ndarray) -> np.ndarray:
    """Return the softmax of a length-M vector (or of each row of a B×M batch)."""
    return softmax(logits, axis=-1)


def sigmoid(logits: np.ndarray) -> np.ndarray:
    """Return the logistic function of the logits without overflow."""
    logits = np.asarray(logits)
    exponentials = np.exp(-np.abs(logits))
    return np.where(
        logits >= 0,
        1.0 / (1.0 + exponentials),
        exponentials / (1.0 + exponentials)
    )
