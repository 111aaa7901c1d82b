"""Submodule providing helpers to treat single maps and batches alike."""
from typing import Tuple

import numpy as np

from ..exceptions import ShapeError

__all__ = ["as_batch", "restore_rank"]


def as_batch(tensor: np.ndarray, name: str = "input") -> Tuple[np.ndarray, bool]:
    """Return given map as a B×C×H×W batch and whether it was a single map.

    Parameters
    ----------
    tensor: np.ndarray,
        Either a C×H×W map or a B×C×H×W batch.
    name: str = "input",
        Name used in the error message.

    Raises
    ------
    ShapeError:
        If the tensor is neither rank 3 nor rank 4.
    """
    tensor = np.asarray(tensor)
    if tensor.ndim == 3:
        return tensor[None], True
    if tensor.ndim == 4:
        return tensor, False
    raise ShapeError(
        "The {name} must be a C×H×W map or a B×C×H×W batch, "
        "got shape {shape}.".format(name=name, shape=tensor.shape)
    )


def restore_rank(tensor: np.ndarray, single: bool) -> np.ndarray:
    """Drop the batch axis added by as_batch when the input was a single map."""
    return tensor[0] if single else tensor
