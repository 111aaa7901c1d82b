"""Submodule providing the stride-one pooling kernels of the spatial pyramid."""
import numpy as np
from numba import njit, prange
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError
from .batching import as_batch, restore_rank

__all__ = [
    "avg_pool2d",
    "max_pool2d",
    "avg_pool2d_backward",
    "max_pool2d_backward",
    "pooled_size"
]


def pooled_size(size: int, kernel: int) -> int:
    """Return the extent left by a stride-one, unpadded window of given size."""
    return size - kernel + 1


def _windows(x: np.ndarray, kernel: int) -> np.ndarray:
    if not isinstance(kernel, (int, np.integer)) or kernel < 1:
        raise ShapeError("Pooling size must be a positive integer.")
    if kernel > min(x.shape[-2:]):
        raise ShapeError(
            "Pooling size {kernel} exceeds the {height}×{width} map.".format(
                kernel=kernel,
                height=x.shape[-2],
                width=x.shape[-1]
            )
        )
    return sliding_window_view(x, (kernel, kernel), axis=(-2, -1))


def avg_pool2d(x: np.ndarray, kernel: int) -> np.ndarray:
    """Return the average of every k×k window of the map (stride 1, no padding).

    Parameters
    ----------
    x: np.ndarray,
        Input map C×H×W, or a batch B×C×H×W.
    kernel: int,
        Window size k, with 1 ≤ k ≤ min(H, W).

    Raises
    ------
    ShapeError:
        If the window exceeds either spatial extent.

    Returns
    -------
    Map C×(H−k+1)×(W−k+1).
    """
    x = np.asarray(x)
    if kernel == 1:
        _windows(x, kernel)
        return x.copy()
    return _windows(x, kernel).mean(axis=(-2, -1))


def max_pool2d(x: np.ndarray, kernel: int) -> np.ndarray:
    """Return the maximum of every k×k window of the map (stride 1, no padding).

    Same contract as avg_pool2d.
    """
    x = np.asarray(x)
    if kernel == 1:
        _windows(x, kernel)
        return x.copy()
    return _windows(x, kernel).max(axis=(-2, -1))


@njit(parallel=True)
def _avg_pool2d_backward(grad, kernel, grad_x):
    batch, channels, out_height, out_width = grad.shape
    scale = 1.0/(kernel*kernel)
    for job in prange(batch*channels):  # pylint: disable=not-an-iterable
        n = job // channels
        c = job % channels
        for oy in range(out_height):
            for ox in range(out_width):
                g = grad[n, c, oy, ox]*scale
                for ky in range(kernel):
                    for kx in range(kernel):
                        grad_x[n, c, oy + ky, ox + kx] += g


@njit(parallel=True)
def _max_pool2d_backward(grad, x, kernel, grad_x):
    batch, channels, out_height, out_width = grad.shape
    for job in prange(batch*channels):  # pylint: disable=not-an-iterable
        n = job // channels
        c = job % channels
        for oy in range(out_height):
            for ox in range(out_width):
                best_y = oy
                best_x = ox
                best = x[n, c, oy, ox]
                for ky in range(kernel):
                    for kx in range(kernel):
                        value = x[n, c, oy + ky, ox + kx]
                        if value > best:
                            best = value
                            best_y = oy + ky
                            best_x = ox + kx
                grad_x[n, c, best_y, best_x] += grad[n, c, oy, ox]


def avg_pool2d_backward(grad: np.ndarray, input_shape: tuple, kernel: int) -> np.ndarray:
    """Return the gradient of avg_pool2d w.r.t. its input."""
    grad, single = as_batch(grad, "gradient")
    shape = tuple(input_shape)
    grad_x = np.zeros(shape if len(shape) == 4 else (1,) + shape, dtype=grad.dtype)
    _avg_pool2d_backward(np.ascontiguousarray(grad), int(kernel), grad_x)
    return restore_rank(grad_x, single)


def max_pool2d_backward(grad: np.ndarray, x: np.ndarray, kernel: int) -> np.ndarray:
    """Return the gradient of max_pool2d w.r.t. its input.

    The gradient of each window flows to its first maximum in row-major order.
    """
    grad, single = as_batch(grad, "gradient")
    x, _ = as_batch(x)
    grad_x = np.zeros(x.shape, dtype=grad.dtype)
    _max_pool2d_backward(
        np.ascontiguousarray(grad),
        np.ascontiguousarray(x),
        int(kernel),
        grad_x
    )
    return restore_rank(grad_x, single)
