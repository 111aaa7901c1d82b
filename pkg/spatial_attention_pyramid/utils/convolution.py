"""Submodule providing the 2D convolution kernels.

Both directions unfold the padded input into receptive-field windows and
reduce them with a tensor contraction, so the arithmetic runs in BLAS.
"""
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError
from .batching import as_batch, restore_rank

__all__ = ["conv2d", "conv2d_backward", "conv2d_output_size"]


def conv2d_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    """Return the output extent of a convolution along one axis."""
    return (size + 2*pad - kernel)//stride + 1


def _windows(x: np.ndarray, kernel: int, stride: int, pad: int) -> np.ndarray:
    """Return the B×Cin×H'×W'×k×k view of the receptive fields of given batch."""
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = sliding_window_view(padded, (kernel, kernel), axis=(2, 3))
    return windows[:, :, ::stride, ::stride]


def _fold(columns: np.ndarray, shape: Tuple[int, ...], stride: int, pad: int) -> np.ndarray:
    """Return the sum of given B×H'×W'×Cin×k×k columns back onto a B×Cin×H×W map."""
    batch, out_height, out_width, channels, kernel, _ = columns.shape
    height, width = shape[2], shape[3]
    padded = np.zeros(
        (batch, channels, height + 2*pad, width + 2*pad),
        dtype=columns.dtype
    )
    rows = stride*(out_height - 1) + 1
    cols = stride*(out_width - 1) + 1
    for ky in range(kernel):
        for kx in range(kernel):
            padded[:, :, ky:ky + rows:stride, kx:kx + cols:stride] += columns[
                :, :, :, :, ky, kx
            ].transpose(0, 3, 1, 2)
    return padded[:, :, pad:pad + height, pad:pad + width]


def _check_conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, pad: int):
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(
            "Convolution weight must be Cout×Cin×k×k, got {shape}.".format(
                shape=weight.shape
            )
        )
    if weight.shape[1] != x.shape[1]:
        raise ShapeError(
            "Convolution weight expects {expected} input channels "
            "but the input has {channels}.".format(
                expected=weight.shape[1],
                channels=x.shape[1]
            )
        )
    if bias.shape != (weight.shape[0],):
        raise ShapeError(
            "Convolution bias must have shape ({channels},), got {shape}.".format(
                channels=weight.shape[0],
                shape=bias.shape
            )
        )
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise ShapeError("Stride must be a positive integer.")
    if pad < 0:
        raise ShapeError("Padding must be non-negative.")
    kernel = weight.shape[2]
    if kernel > x.shape[2] + 2*pad or kernel > x.shape[3] + 2*pad:
        raise ShapeError(
            "Kernel of size {kernel} does not fit a padded "
            "{height}×{width} input.".format(
                kernel=kernel,
                height=x.shape[2] + 2*pad,
                width=x.shape[3] + 2*pad
            )
        )


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Return the 2D cross-correlation of given map with given filters.

    Parameters
    ----------
    x: np.ndarray,
        Input map Cin×H×W, or a batch B×Cin×H×W.
    weight: np.ndarray,
        Filters Cout×Cin×k×k.
    bias: np.ndarray,
        Bias of length Cout.
    stride: int = 1,
        Step between receptive fields.
    pad: int = 0,
        Zero padding added on every side.

    Raises
    ------
    ShapeError:
        If the channel counts disagree or the kernel does not fit.

    Returns
    -------
    Map Cout×H'×W' (or batch) with H' = floor((H + 2·pad − k)/stride) + 1.
    """
    x, single = as_batch(x)
    weight = np.asarray(weight)
    bias = np.asarray(bias)
    _check_conv2d(x, weight, bias, stride, pad)
    dtype = np.result_type(x, weight, bias)
    windows = _windows(x.astype(dtype, copy=False), weight.shape[2], int(stride), int(pad))
    # B×H'×W'×Cout
    out = np.tensordot(windows, weight.astype(dtype, copy=False), axes=([1, 4, 5], [1, 2, 3]))
    out = out + bias.astype(dtype, copy=False)
    return restore_rank(np.ascontiguousarray(out.transpose(0, 3, 1, 2)), single)


def conv2d_backward(
    grad: np.ndarray,
    x: np.ndarray,
    weight: np.ndarray,
    stride: int = 1,
    pad: int = 0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return gradients of a convolution w.r.t. input, weight and bias.

    Parameters
    ----------
    grad: np.ndarray,
        Upstream gradient, same shape as the convolution output.
    x: np.ndarray,
        Forward input.
    weight: np.ndarray,
        Forward filters.
    stride: int = 1,
        Forward stride.
    pad: int = 0,
        Forward padding.
    """
    x, single = as_batch(x)
    grad, _ = as_batch(grad, "gradient")
    dtype = np.result_type(grad, x, weight)
    grad = grad.astype(dtype, copy=False)
    weight = np.asarray(weight).astype(dtype, copy=False)
    windows = _windows(x.astype(dtype, copy=False), weight.shape[2], int(stride), int(pad))
    grad_weight = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
    # B×H'×W'×Cin×k×k
    columns = np.tensordot(grad, weight, axes=([1], [0]))
    grad_x = _fold(columns, x.shape, int(stride), int(pad))
    return restore_rank(np.ascontiguousarray(grad_x), single), grad_weight, grad.sum(axis=(0, 2, 3))
