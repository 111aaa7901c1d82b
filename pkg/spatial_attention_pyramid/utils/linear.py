"""Submodule providing the fully-connected kernel."""
from typing import Optional

import numpy as np

from ..exceptions import ShapeError

__all__ = ["fully_connected"]


def fully_connected(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """Return y = W·x + b for a vector of length Din or a B×Din batch.

    Parameters
    ----------
    x: np.ndarray,
        Input vector(s).
    weight: np.ndarray,
        Matrix Dout×Din.
    bias: Optional[np.ndarray] = None,
        Bias of length Dout, omitted when None.

    Raises
    ------
    ShapeError:
        If the dimensions disagree.
    """
    x = np.asarray(x)
    weight = np.asarray(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            "Cannot apply a {weight} weight to an input of shape {shape}.".format(
                weight="×".join(map(str, weight.shape)),
                shape=x.shape
            )
        )
    y = x @ weight.T
    if bias is None:
        return y
    bias = np.asarray(bias)
    if bias.shape != (weight.shape[0],):
        raise ShapeError(
            "Bias must have shape ({dim},), got {shape}.".format(
                dim=weight.shape[0],
                shape=bias.shape
            )
        )
    return y + bias
