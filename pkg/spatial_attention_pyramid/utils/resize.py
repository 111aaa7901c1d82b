"""Submodule providing bilinear resizing with half-pixel centres."""
from typing import Tuple

import numpy as np

from ..exceptions import ShapeError

__all__ = ["resize_bilinear", "resize_bilinear_backward", "interpolation_matrix"]


def _sources(in_size: int, out_size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return lower index, upper index and weight of every output sample."""
    scale = in_size / out_size
    source = np.maximum((np.arange(out_size) + 0.5)*scale - 0.5, 0.0)
    lower = np.minimum(np.floor(source).astype(np.int64), in_size - 1)
    upper = np.minimum(lower + 1, in_size - 1)
    return lower, upper, source - lower


def interpolation_matrix(in_size: int, out_size: int) -> np.ndarray:
    """Return the out_size×in_size matrix of the one-dimensional interpolation."""
    lower, upper, weight = _sources(in_size, out_size)
    matrix = np.zeros((out_size, in_size))
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - weight)
    np.add.at(matrix, (rows, upper), weight)
    return matrix


def _check_size(out_height: int, out_width: int):
    if out_height < 1 or out_width < 1:
        raise ShapeError(
            "Resize target must be at least 1×1, got {height}×{width}.".format(
                height=out_height,
                width=out_width
            )
        )


def resize_bilinear(x: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Return the map bilinearly resized to out_height×out_width.

    Sampling positions follow the half-pixel convention (align corners off).
    Each axis is interpolated as ``a + t·(b − a)``, so constant maps are
    reproduced exactly and a same-size resize returns an exact copy.

    Parameters
    ----------
    x: np.ndarray,
        Map of shape ...×H×W.
    out_height: int,
        Target height.
    out_width: int,
        Target width.

    Raises
    ------
    ShapeError:
        If the target size is not positive.
    """
    x = np.asarray(x)
    _check_size(out_height, out_width)
    if x.shape[-2:] == (out_height, out_width):
        return x.copy()
    lower, upper, weight = _sources(x.shape[-2], out_height)
    weight = weight.astype(x.dtype)[:, None]
    rows = x[..., lower, :] + weight*(x[..., upper, :] - x[..., lower, :])
    lower, upper, weight = _sources(x.shape[-1], out_width)
    weight = weight.astype(x.dtype)
    return rows[..., lower] + weight*(rows[..., upper] - rows[..., lower])


def resize_bilinear_backward(grad: np.ndarray, in_height: int, in_width: int) -> np.ndarray:
    """Return the gradient of resize_bilinear w.r.t. its input."""
    grad = np.asarray(grad)
    if grad.shape[-2:] == (in_height, in_width):
        return grad.copy()
    rows = interpolation_matrix(in_height, grad.shape[-2]).astype(grad.dtype)
    columns = interpolation_matrix(in_width, grad.shape[-1]).astype(grad.dtype)
    return np.einsum("oh,...op,pw->...hw", rows, grad, columns)
