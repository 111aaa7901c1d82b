"""Finite-difference verification of every registered operation and of the full pyramid.

Usage examples
--------------

.. code:: python

    from spatial_attention_pyramid import gradcheck_suite

    report = gradcheck_suite(full=True)
    assert report.passed.all()
"""
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from . import operations as F
from .autodiff import OPERATIONS, Parameter, Tape, Variable, finite_difference_check, grad_reverse
from .exceptions import ConfigurationError
from .losses import adv_loss
from .pyramid import PyramidConfig, SpatialAttentionPyramid
from .utils import RunningStats, softmax

__all__ = [
    "GradientCase",
    "OPERATION_CASES",
    "TOLERANCE",
    "KINK_MARGIN",
    "pyramid_case",
    "clear_relu_kinks",
    "reversal_error",
    "pyramid_reversal_error",
    "gradcheck_suite"
]

TOLERANCE = 1e-5
KINK_MARGIN = 1e-3


@dataclass
class GradientCase:
    """Parameters of a check and the scalar loss built from them on a fresh tape."""
    parameters: List[Parameter]
    loss: Callable[[Tape], Variable]


class _Projection:
    """Fixed random weighting turning any output into a scalar."""

    def __init__(self, seed: int):
        self.seed = seed
        self.weights = None

    def __call__(self, output: Variable) -> Variable:
        if self.weights is None:
            self.weights = np.random.default_rng(self.seed).standard_normal(output.shape)
        return F.sum(F.mul(output, output.tape.constant(self.weights)))


def _normal(rng: np.random.Generator, name: str, *shape: int) -> Parameter:
    return Parameter(name, rng.standard_normal(shape))


def _binary(op: Callable[[Variable, Variable], Variable]) -> Callable[[np.random.Generator], GradientCase]:
    def case(rng: np.random.Generator) -> GradientCase:
        a, b = _normal(rng, "a", 2, 3), _normal(rng, "b", 2, 3)
        project = _Projection(1)
        return GradientCase([a, b], lambda tape: project(op(tape.watch(a), tape.watch(b))))
    return case


def _unary(
    op: Callable[[Variable], Variable],
    *shape: int,
    init: Optional[Callable[[np.random.Generator], np.ndarray]] = None
) -> Callable[[np.random.Generator], GradientCase]:
    def case(rng: np.random.Generator) -> GradientCase:
        x = Parameter("x", rng.standard_normal(shape) if init is None else init(rng))
        project = _Projection(1)
        return GradientCase([x], lambda tape: project(op(tape.watch(x))))
    return case


def _away_from_zero(rng: np.random.Generator) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=(3, 4))*rng.uniform(0.1, 1.0, size=(3, 4))


def _distinct(rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(2*3*5*5).reshape(2, 3, 5, 5)*0.01


def _conv2d_case(rng: np.random.Generator) -> GradientCase:
    x = _normal(rng, "x", 2, 3, 6, 6)
    weight = _normal(rng, "weight", 4, 3, 3, 3)
    bias = _normal(rng, "bias", 4)
    project = _Projection(1)
    return GradientCase(
        [x, weight, bias],
        lambda tape: project(F.conv2d(tape.watch(x), tape.watch(weight), tape.watch(bias), stride=2, pad=1))
    )


def _fully_connected_case(rng: np.random.Generator) -> GradientCase:
    x, weight, bias = _normal(rng, "x", 3, 5), _normal(rng, "weight", 4, 5), _normal(rng, "bias", 4)
    project = _Projection(1)
    return GradientCase(
        [x, weight, bias],
        lambda tape: project(F.fully_connected(tape.watch(x), tape.watch(weight), tape.watch(bias)))
    )


def _batch_norm_case(rng: np.random.Generator) -> GradientCase:
    x, gamma, beta = _normal(rng, "x", 4, 5), _normal(rng, "gamma", 5), _normal(rng, "beta", 5)
    project = _Projection(1)
    return GradientCase(
        [x, gamma, beta],
        lambda tape: project(F.batch_norm(
            tape.watch(x),
            tape.watch(gamma),
            tape.watch(beta),
            RunningStats.zeros(5),
            "train"
        ))
    )


def _concat_case(rng: np.random.Generator) -> GradientCase:
    a, b = _normal(rng, "a", 2, 3), _normal(rng, "b", 2, 2)
    project = _Projection(1)
    return GradientCase([a, b], lambda tape: project(F.concat([tape.watch(a), tape.watch(b)], axis=1)))


def _stack_case(rng: np.random.Generator) -> GradientCase:
    vectors = [_normal(rng, "v{}".format(index), 2, 3) for index in range(3)]
    project = _Projection(1)
    return GradientCase(vectors, lambda tape: project(F.stack([tape.watch(v) for v in vectors])))


def _attention_vector_case(rng: np.random.Generator) -> GradientCase:
    features, mask = _normal(rng, "features", 2, 3, 4, 5), _normal(rng, "mask", 2, 4, 5)
    project = _Projection(1)
    return GradientCase(
        [features, mask],
        lambda tape: project(F.attention_vector(tape.watch(features), tape.watch(mask)))
    )


def _fuse_case(rng: np.random.Generator) -> GradientCase:
    vectors, weights = _normal(rng, "vectors", 3, 2, 4), _normal(rng, "weights", 3, 2, 4)
    project = _Projection(1)
    return GradientCase(
        [vectors, weights],
        lambda tape: project(F.fuse(tape.watch(vectors), tape.watch(weights)))
    )


def _softmax_cross_entropy_case(rng: np.random.Generator) -> GradientCase:
    logits = _normal(rng, "logits", 2, 4, 3, 3)
    labels = rng.integers(0, 4, size=(2, 3, 3))
    return GradientCase([logits], lambda tape: F.softmax_cross_entropy(tape.watch(logits), labels))


def _binary_cross_entropy_case(rng: np.random.Generator) -> GradientCase:
    probabilities = Parameter("probabilities", rng.uniform(0.1, 0.9, size=6))
    targets = rng.integers(0, 2, size=6)
    return GradientCase(
        [probabilities],
        lambda tape: F.binary_cross_entropy(tape.watch(probabilities), targets)
    )


OPERATION_CASES: Dict[str, Callable[[np.random.Generator], GradientCase]] = {
    "add": _binary(F.add),
    "sub": _binary(F.sub),
    "mul": _binary(F.mul),
    "scale": _unary(lambda x: F.scale(x, 1.7), 2, 3),
    "relu": _unary(F.relu, init=_away_from_zero),
    "sigmoid": _unary(F.sigmoid, 2, 3),
    "conv2d": _conv2d_case,
    "avg_pool2d": _unary(lambda x: F.avg_pool2d(x, 3), 2, 3, 6, 6),
    "max_pool2d": _unary(lambda x: F.max_pool2d(x, 2), init=_distinct),
    "resize_bilinear": _unary(lambda x: F.resize_bilinear(x, 8, 7), 2, 3, 5, 5),
    "fully_connected": _fully_connected_case,
    "batch_norm": _batch_norm_case,
    "softmax": _unary(lambda x: F.softmax(x, axis=1), 2, 3, 4),
    "spatial_softmax": _unary(F.spatial_softmax, 2, 3, 4, 5),
    "concat": _concat_case,
    "stack": _stack_case,
    "unstack": _unary(lambda x: F.unstack(x)[1], 3, 2, 4),
    "sum": _unary(lambda x: F.sum(x, axis=(1, 2)), 2, 3, 4),
    "mean": _unary(lambda x: F.mean(x, axis=1), 2, 3, 4),
    "reshape": _unary(lambda x: F.reshape(x, (3, 4)), 2, 6),
    "attention_vector": _attention_vector_case,
    "fuse": _fuse_case,
    "softmax_cross_entropy": _softmax_cross_entropy_case,
    "binary_cross_entropy": _binary_cross_entropy_case
}


def reversal_error(lam: float = 0.1, seed: int = 0) -> float:
    """Return the largest deviation of a reversal backward from −λ·upstream.

    A finite difference sees the identity forward, so the reversal is
    checked against its contract instead.
    """
    rng = np.random.default_rng(seed)
    x = _normal(rng, "x", 2, 3, 4)
    upstream = rng.standard_normal((2, 3, 4))
    tape = Tape()
    tape.backward(F.sum(F.mul(grad_reverse(tape.watch(x), lam), tape.constant(upstream))))
    return float(np.max(np.abs(x.grad - (-lam*upstream))))


def _randomise(pyramid: SpatialAttentionPyramid, rng: np.random.Generator):
    for parameter in pyramid.parameters():
        fan_in = int(np.prod(parameter.shape[1:])) if len(parameter.shape) > 1 else 1
        parameter.value = rng.standard_normal(parameter.shape)/np.sqrt(fan_in)
        if parameter.name.endswith(".gamma"):
            parameter.value = 1.0 + 0.1*parameter.value
        elif len(parameter.shape) == 1:
            parameter.value = 0.1*parameter.value


def clear_relu_kinks(loss: Callable[[Tape], Variable], margin: float = KINK_MARGIN) -> int:
    """Shift the biases feeding every ReLU so that no input lies within margin of zero.

    For every channel the bias moves the inputs so that zero falls in the gap
    between consecutive values closest to their median, keeping the unit
    partly active. ReLUs are visited in tape order and the loss is rebuilt
    after every shift, so later layers see the final upstream values.

    Returns
    -------
    The number of shifted channels.
    """
    shifted = 0
    visited = 0
    while True:
        tape = Tape()
        loss(tape)
        relus = [node for node in tape.nodes if node.op == "relu"]
        if visited >= len(relus):
            return shifted
        source = tape.nodes[relus[visited].parents[0]]
        bias = tape.nodes[source.parents[2]].parameter
        values = np.moveaxis(source.value, 1 if source.value.ndim == 4 else -1, 0)
        values = values.reshape(values.shape[0], -1)
        value = bias.value.copy()
        for channel, inputs in enumerate(values):
            if np.min(np.abs(inputs)) >= margin:
                continue
            ordered = np.sort(inputs)
            gaps = np.diff(ordered)
            middles = (ordered[1:] + ordered[:-1])/2
            usable = gaps >= 2*margin
            if usable.any():
                target = middles[usable][np.argmin(np.abs(middles[usable] - np.median(ordered)))]
            else:
                target = ordered[0] - margin
            value[channel] -= target
            shifted += 1
        bias.value = value
        visited += 1


def pyramid_case(seed: int = 0, lam: Optional[float] = None) -> GradientCase:
    """Return the full pyramid check: C=16, N=3, 24×24 features, eval mode.

    Parameters are randomised (zero-initialised mask heads included), the
    features are checked as a parameter of their own and ReLU kinks are
    cleared before returning.
    """
    rng = np.random.default_rng([seed, 2])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        config = PyramidConfig.with_levels(3, channels=16).fitted(24, 24)
    pyramid = SpatialAttentionPyramid(config, in_channels=16, guide_channels=4, rng=rng)
    _randomise(pyramid, rng)
    features = Parameter("features", rng.uniform(0.0, 1.0, size=(2, 16, 24, 24)))
    guided_map = softmax(rng.standard_normal((2, 4, 24, 24)), axis=1)
    domains = np.array([0, 1])

    def loss(tape: Tape) -> Variable:
        probability, _ = pyramid(
            tape.watch(features),
            tape.constant(guided_map),
            mode="eval",
            lam=lam
        )
        return adv_loss(probability, domains)

    clear_relu_kinks(loss)
    return GradientCase([features] + pyramid.parameters(), loss)


def pyramid_reversal_error(lam: float = 0.1, seed: int = 0) -> float:
    """Return the relative deviation of the reversed feature gradient from −λ times the plain one."""
    gradients = []
    for factor in (None, lam):
        case = pyramid_case(seed, lam=factor)
        features = case.parameters[0]
        features.zero_grad()
        tape = Tape()
        tape.backward(case.loss(tape))
        gradients.append(features.grad)
    plain, reversed_ = gradients
    return float(np.max(np.abs(reversed_ + lam*plain))/max(np.max(np.abs(lam*plain)), 1e-300))


def gradcheck_suite(
    full: bool = False,
    tolerance: float = TOLERANCE,
    seed: int = 0,
    verbose: bool = True
) -> pd.DataFrame:
    """Return the finite-difference report of every registered operation.

    Parameters
    ----------
    full: bool = False,
        Whether to also check the whole pyramid path and the reversal
        through it.
    tolerance: float = 1e-5,
        Largest accepted relative error.
    seed: int = 0,
        Seed of the random inputs.
    verbose: bool = True,
        Whether to show the loading bar.

    Raises
    ------
    ConfigurationError:
        If a registered operation has no check.

    Returns
    -------
    DataFrame with columns op, max_rel_err and passed.
    """
    missing = sorted(set(OPERATIONS) - set(OPERATION_CASES) - {"grad_reverse"})
    if missing:
        raise ConfigurationError(
            "No gradient check for operations {missing}.".format(missing=missing)
        )
    rows = []
    for name in tqdm(
        sorted(OPERATION_CASES),
        desc="Checking operations",
        disable=not verbose,
        dynamic_ncols=True,
        leave=False
    ):
        case = OPERATION_CASES[name](np.random.default_rng([seed, len(rows)]))
        report = finite_difference_check(case.loss, case.parameters, tolerance=tolerance)
        rows.append((name, report.max_relative_error))
    rows.append(("grad_reverse", reversal_error(seed=seed)))
    if full:
        case = pyramid_case(seed)
        report = finite_difference_check(case.loss, case.parameters, tolerance=tolerance)
        rows.append(("sap_forward", report.max_relative_error))
        rows.append(("grad_reverse(sap_forward)", pyramid_reversal_error(seed=seed)))
    frame = pd.DataFrame(rows, columns=["op", "max_rel_err"])
    frame["passed"] = frame.max_rel_err < tolerance
    return frame
