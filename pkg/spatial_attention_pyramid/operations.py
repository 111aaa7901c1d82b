"""Differentiable operations recorded on a Tape.

Each operation pairs a tensor kernel from ``utils`` with its
vector-Jacobian product and exposes a functional wrapper taking Variables.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import Variable, register_operation
from .exceptions import ShapeError
from .utils import (
    attention_vector as _attention_vector,
    avg_pool2d as _avg_pool2d,
    avg_pool2d_backward,
    batch_norm_backward,
    batch_norm_vec,
    conv2d as _conv2d,
    conv2d_backward,
    fully_connected as _fully_connected,
    max_pool2d as _max_pool2d,
    max_pool2d_backward,
    resize_bilinear as _resize_bilinear,
    resize_bilinear_backward,
    sigmoid as _sigmoid,
    softmax as _softmax,
    softmax_flat,
    fuse as _fuse,
    RunningStats
)

__all__ = [
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "sigmoid",
    "conv2d",
    "avg_pool2d",
    "max_pool2d",
    "resize_bilinear",
    "fully_connected",
    "batch_norm",
    "softmax",
    "spatial_softmax",
    "concat",
    "stack",
    "unstack",
    "sum",
    "mean",
    "reshape",
    "attention_vector",
    "fuse",
    "softmax_cross_entropy",
    "binary_cross_entropy",
    "PROBABILITY_CLAMP"
]

PROBABILITY_CLAMP = 1e-7


def _same_shape(op: str, a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeError(
            "Operation {op} needs equal shapes, got {a} and {b}.".format(
                op=op,
                a=a.shape,
                b=b.shape
            )
        )


# Elementwise arithmetic

def _add_forward(a, b):
    _same_shape("add", a, b)
    return a + b, {}


def _sub_forward(a, b):
    _same_shape("sub", a, b)
    return a - b, {}


def _mul_forward(a, b):
    _same_shape("mul", a, b)
    return a*b, {"a": a, "b": b}


def _scale_forward(x, factor):
    return x*factor, {"factor": factor}


def _relu_forward(x):
    return np.maximum(x, 0), {"active": x > 0}


def _sigmoid_forward(x):
    y = _sigmoid(x)
    return y, {"y": y}


register_operation("add", _add_forward, lambda g, s: (g, g))
register_operation("sub", _sub_forward, lambda g, s: (g, -g))
register_operation("mul", _mul_forward, lambda g, s: (g*s["b"], g*s["a"]))
register_operation("scale", _scale_forward, lambda g, s: (g*s["factor"],))
register_operation("relu", _relu_forward, lambda g, s: (g*s["active"],))
register_operation("sigmoid", _sigmoid_forward, lambda g, s: (g*s["y"]*(1.0 - s["y"]),))


# Convolution, pooling and resizing

def _conv2d_forward(x, weight, bias, stride, pad):
    return _conv2d(x, weight, bias, stride, pad), {
        "x": x,
        "weight": weight,
        "stride": stride,
        "pad": pad
    }


def _conv2d_backward(grad, saved):
    return conv2d_backward(grad, saved["x"], saved["weight"], saved["stride"], saved["pad"])


def _avg_pool2d_forward(x, kernel):
    return _avg_pool2d(x, kernel), {"shape": x.shape, "kernel": kernel}


def _max_pool2d_forward(x, kernel):
    return _max_pool2d(x, kernel), {"x": x, "kernel": kernel}


def _resize_forward(x, height, width):
    return _resize_bilinear(x, height, width), {"size": x.shape[-2:]}


register_operation("conv2d", _conv2d_forward, _conv2d_backward)
register_operation(
    "avg_pool2d",
    _avg_pool2d_forward,
    lambda g, s: (avg_pool2d_backward(g, s["shape"], s["kernel"]),)
)
register_operation(
    "max_pool2d",
    _max_pool2d_forward,
    lambda g, s: (max_pool2d_backward(g, s["x"], s["kernel"]),)
)
register_operation(
    "resize_bilinear",
    _resize_forward,
    lambda g, s: (resize_bilinear_backward(g, *s["size"]),)
)


# Dense layers

def _fully_connected_forward(x, weight, bias=None):
    return _fully_connected(x, weight, bias), {
        "x": x,
        "weight": weight,
        "has_bias": bias is not None
    }


def _fully_connected_backward(grad, saved):
    x = saved["x"]
    grad_x = grad @ saved["weight"]
    if x.ndim == 1:
        grad_weight = np.outer(grad, x)
    else:
        grad_weight = grad.reshape(-1, grad.shape[-1]).T @ x.reshape(-1, x.shape[-1])
    if not saved["has_bias"]:
        return grad_x, grad_weight
    return grad_x, grad_weight, grad.reshape(-1, grad.shape[-1]).sum(axis=0)


def _batch_norm_forward(x, gamma, beta, stats, mode):
    if x.ndim != 2:
        raise ShapeError(
            "Batch normalisation expects a B×D batch, got shape {shape}.".format(shape=x.shape)
        )
    y, normalised, inverse_std = batch_norm_vec(x, gamma, beta, stats, mode, with_cache=True)
    return y, {
        "gamma": gamma,
        "normalised": normalised,
        "inverse_std": inverse_std,
        "mode": mode
    }


def _batch_norm_backward(grad, saved):
    return batch_norm_backward(
        grad,
        saved["gamma"],
        saved["normalised"],
        saved["inverse_std"],
        saved["mode"]
    )


register_operation("fully_connected", _fully_connected_forward, _fully_connected_backward)
register_operation("batch_norm", _batch_norm_forward, _batch_norm_backward)


# Normalisation

def _softmax_forward(x, axis):
    y = _softmax(x, axis=axis)
    return y, {"y": y, "axis": axis}


def _softmax_backward(grad, saved):
    y = saved["y"]
    return (y*(grad - (grad*y).sum(axis=saved["axis"], keepdims=True)),)


def _spatial_softmax_forward(x):
    flat = x.reshape(x.shape[:-2] + (-1,))
    y = softmax_flat(flat)
    return y.reshape(x.shape), {"y": y, "shape": x.shape}


def _spatial_softmax_backward(grad, saved):
    y = saved["y"]
    flat = grad.reshape(y.shape)
    return ((y*(flat - (flat*y).sum(axis=-1, keepdims=True))).reshape(saved["shape"]),)


register_operation("softmax", _softmax_forward, _softmax_backward)
register_operation("spatial_softmax", _spatial_softmax_forward, _spatial_softmax_backward)


# Shape plumbing and reductions

def _concat_forward(*xs, axis):
    return np.concatenate(xs, axis=axis), {
        "sections": np.cumsum([x.shape[axis] for x in xs])[:-1],
        "axis": axis
    }


def _concat_backward(grad, saved):
    return tuple(np.split(grad, saved["sections"], axis=saved["axis"]))


def _stack_forward(*xs):
    return np.stack(xs), {"count": len(xs)}


def _unstack_forward(x, index):
    return x[index], {"shape": x.shape, "index": index}


def _unstack_backward(grad, saved):
    full = np.zeros(saved["shape"], dtype=grad.dtype)
    full[saved["index"]] = grad
    return (full,)


def _sum_forward(x, axis):
    return x.sum(axis=axis), {"shape": x.shape, "axis": axis}


def _sum_backward(grad, saved):
    axis = saved["axis"]
    if axis is not None:
        grad = np.expand_dims(grad, axis)
    return (np.broadcast_to(grad, saved["shape"]).copy(),)


def _mean_forward(x, axis):
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return x.mean(axis=axis), {"shape": x.shape, "axis": axis, "count": count}


def _mean_backward(grad, saved):
    return (_sum_backward(grad, saved)[0]/saved["count"],)


def _reshape_forward(x, shape):
    return x.reshape(shape), {"shape": x.shape}


register_operation("concat", _concat_forward, _concat_backward)
register_operation("stack", _stack_forward, lambda g, s: tuple(g))
register_operation("unstack", _unstack_forward, _unstack_backward)
register_operation("sum", _sum_forward, _sum_backward)
register_operation("mean", _mean_forward, _mean_backward)
register_operation("reshape", _reshape_forward, lambda g, s: (g.reshape(s["shape"]),))


# Attention arithmetic

def _attention_vector_forward(features, mask):
    return _attention_vector(features, mask), {"features": features, "mask": mask}


def _attention_vector_backward(grad, saved):
    return (
        np.einsum("...c,...hw->...chw", grad, saved["mask"]),
        np.einsum("...c,...chw->...hw", grad, saved["features"])
    )


def _fuse_forward(vectors, weights):
    return _fuse(vectors, weights), {"vectors": vectors, "weights": weights}


def _fuse_backward(grad, saved):
    return grad[None]*saved["weights"], grad[None]*saved["vectors"]


register_operation("attention_vector", _attention_vector_forward, _attention_vector_backward)
register_operation("fuse", _fuse_forward, _fuse_backward)


# Losses

def _softmax_cross_entropy_forward(logits, labels):
    if logits.ndim != labels.ndim + 1 or logits.shape[:1] + logits.shape[2:] != labels.shape:
        raise ShapeError(
            "Logits of shape {logits} do not match labels of shape {labels}.".format(
                logits=logits.shape,
                labels=labels.shape
            )
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_normaliser = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probabilities = shifted - log_normaliser
    picked = np.take_along_axis(log_probabilities, labels[:, None].astype(np.int64), axis=1)
    return -picked.mean(), {
        "probabilities": np.exp(log_probabilities),
        "labels": labels.astype(np.int64),
        "count": picked.size
    }


def _softmax_cross_entropy_backward(grad, saved):
    gradient = saved["probabilities"].copy()
    np.put_along_axis(
        gradient,
        saved["labels"][:, None],
        np.take_along_axis(gradient, saved["labels"][:, None], axis=1) - 1.0,
        axis=1
    )
    return (gradient*(grad/saved["count"]),)


def _binary_cross_entropy_forward(probabilities, targets):
    _same_shape("binary_cross_entropy", probabilities, targets)
    clamped = np.clip(probabilities, PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    losses = -(targets*np.log(clamped) + (1.0 - targets)*np.log(1.0 - clamped))
    return losses.mean(), {
        "clamped": clamped,
        "targets": targets,
        "inside": clamped == probabilities
    }


def _binary_cross_entropy_backward(grad, saved):
    clamped = saved["clamped"]
    targets = saved["targets"]
    gradient = (-targets/clamped + (1.0 - targets)/(1.0 - clamped))/clamped.size
    return (grad*gradient*saved["inside"],)


register_operation(
    "softmax_cross_entropy",
    _softmax_cross_entropy_forward,
    _softmax_cross_entropy_backward
)
register_operation(
    "binary_cross_entropy",
    _binary_cross_entropy_forward,
    _binary_cross_entropy_backward
)


# Functional wrappers

def add(a: Variable, b: Variable) -> Variable:
    """Return a + b for equally shaped variables."""
    return a.tape.apply("add", a, b)


def sub(a: Variable, b: Variable) -> Variable:
    """Return a − b for equally shaped variables."""
    return a.tape.apply("sub", a, b)


def mul(a: Variable, b: Variable) -> Variable:
    """Return the elementwise product of equally shaped variables."""
    return a.tape.apply("mul", a, b)


def scale(x: Variable, factor: float) -> Variable:
    """Return factor·x."""
    return x.tape.apply("scale", x, factor=float(factor))


def relu(x: Variable) -> Variable:
    """Return max(x, 0); the subgradient at 0 is 0."""
    return x.tape.apply("relu", x)


def sigmoid(x: Variable) -> Variable:
    """Return the logistic function of x."""
    return x.tape.apply("sigmoid", x)


def conv2d(x: Variable, weight: Variable, bias: Variable, stride: int = 1, pad: int = 0) -> Variable:
    """Return the convolution of x, see utils.conv2d."""
    return x.tape.apply("conv2d", x, weight, bias, stride=stride, pad=pad)


def avg_pool2d(x: Variable, kernel: int) -> Variable:
    """Return the stride-one average pooling of x."""
    return x.tape.apply("avg_pool2d", x, kernel=kernel)


def max_pool2d(x: Variable, kernel: int) -> Variable:
    """Return the stride-one max pooling of x."""
    return x.tape.apply("max_pool2d", x, kernel=kernel)


def resize_bilinear(x: Variable, height: int, width: int) -> Variable:
    """Return x bilinearly resized to height×width."""
    return x.tape.apply("resize_bilinear", x, height=height, width=width)


def fully_connected(x: Variable, weight: Variable, bias: Optional[Variable] = None) -> Variable:
    """Return W·x + b (bias optional)."""
    if bias is None:
        return x.tape.apply("fully_connected", x, weight)
    return x.tape.apply("fully_connected", x, weight, bias)


def batch_norm(x: Variable, gamma: Variable, beta: Variable, stats: RunningStats, mode: str) -> Variable:
    """Return the batch normalisation of a B×D batch."""
    return x.tape.apply("batch_norm", x, gamma, beta, stats=stats, mode=mode)


def softmax(x: Variable, axis: int = -1) -> Variable:
    """Return the softmax of x along given axis."""
    return x.tape.apply("softmax", x, axis=axis)


def spatial_softmax(x: Variable) -> Variable:
    """Return the softmax of every ...×H×W map over its H·W positions."""
    return x.tape.apply("spatial_softmax", x)


def concat(xs: Sequence[Variable], axis: int = 0) -> Variable:
    """Return the concatenation of the variables along given axis."""
    return xs[0].tape.apply("concat", *xs, axis=axis)


def stack(xs: Sequence[Variable]) -> Variable:
    """Return the variables stacked along a new leading axis."""
    return xs[0].tape.apply("stack", *xs)


def unstack(x: Variable) -> Tuple[Variable, ...]:
    """Return the slices of x along its leading axis."""
    return tuple(x.tape.apply("unstack", x, index=index) for index in range(x.shape[0]))


def sum(x: Variable, axis: Union[None, int, Tuple[int, ...]] = None) -> Variable:  # pylint: disable=redefined-builtin
    """Return the sum of x over given axes (all by default)."""
    return x.tape.apply("sum", x, axis=axis)


def mean(x: Variable, axis: Union[None, int, Tuple[int, ...]] = None) -> Variable:
    """Return the mean of x over given axes (all by default)."""
    return x.tape.apply("mean", x, axis=axis)


def reshape(x: Variable, shape: Tuple[int, ...]) -> Variable:
    """Return x with a new shape."""
    return x.tape.apply("reshape", x, shape=tuple(shape))


def attention_vector(features: Variable, mask: Variable) -> Variable:
    """Return V(c) = Σ_ij f(c, i, j)·ω(i, j)."""
    return features.tape.apply("attention_vector", features, mask)


def fuse(vectors: Variable, weights: Variable) -> Variable:
    """Return Σ_n V^n ⊙ φ^n from N×...×C stacks."""
    return vectors.tape.apply("fuse", vectors, weights)


def softmax_cross_entropy(logits: Variable, labels: np.ndarray) -> Variable:
    """Return the mean per-pixel cross-entropy of B×K×H×W logits against B×H×W labels."""
    return logits.tape.apply("softmax_cross_entropy", logits, labels=np.asarray(labels))


def binary_cross_entropy(probabilities: Variable, targets: np.ndarray) -> Variable:
    """Return the mean binary cross-entropy, probabilities clamped to [1e-7, 1 − 1e-7]."""
    return probabilities.tape.apply(
        "binary_cross_entropy",
        probabilities,
        targets=np.asarray(targets, dtype=probabilities.value.dtype)
    )
