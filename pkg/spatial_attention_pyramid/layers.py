"""Parameterised layers built on the tape operations."""
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from . import operations as F
from .autodiff import Parameter, Variable
from .utils import RunningStats

__all__ = ["Module", "Conv2d", "Linear", "BatchNorm1d", "ConvStack"]


class Module:
    """Container of parameters and running statistics.

    Parameters and sub-modules are discovered from the instance attributes,
    in assignment order, so names and checkpoint layouts are stable.
    """

    def _children(self) -> Iterator[object]:
        for value in vars(self).values():
            if isinstance(value, (list, tuple)):
                yield from value
            else:
                yield value

    def parameters(self) -> List[Parameter]:
        """Return every parameter of this module and its sub-modules."""
        parameters = []
        for child in self._children():
            if isinstance(child, Parameter):
                parameters.append(child)
            elif isinstance(child, Module):
                parameters.extend(child.parameters())
        return parameters

    def named_parameters(self) -> Dict[str, Parameter]:
        """Return the parameters keyed by name."""
        return {parameter.name: parameter for parameter in self.parameters()}

    def buffers(self) -> Dict[str, RunningStats]:
        """Return the running statistics of this module keyed by layer name."""
        buffers = {}
        for child in self._children():
            if isinstance(child, Module):
                buffers.update(child.buffers())
        return buffers

    def zero_grad(self):
        """Reset the gradient of every parameter."""
        for parameter in self.parameters():
            parameter.zero_grad()


def _he_normal(rng: np.random.Generator, shape: Sequence[int], fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape)*np.sqrt(2.0/fan_in)).astype(dtype)


class Conv2d(Module):
    """Square-kernel convolution with bias."""

    def __init__(
        self,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        pad: int = 0,
        zero: bool = False,
        dtype=np.float64
    ):
        """Create a new convolution.

        Parameters
        ----------
        name: str,
            Prefix of the parameter names.
        in_channels: int,
            Number of input channels.
        out_channels: int,
            Number of output channels.
        kernel: int,
            Kernel side.
        rng: np.random.Generator,
            Source of the He-normal initialisation.
        stride: int = 1,
            Convolution stride.
        pad: int = 0,
            Zero padding.
        zero: bool = False,
            Whether to start from all-zero weights.
        dtype = np.float64,
            Parameter dtype.
        """
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.pad = pad
        shape = (out_channels, in_channels, kernel, kernel)
        self.weight = Parameter(
            "{}.weight".format(name),
            np.zeros(shape, dtype=dtype) if zero else _he_normal(
                rng, shape, in_channels*kernel*kernel, dtype
            )
        )
        self.bias = Parameter("{}.bias".format(name), np.zeros(out_channels, dtype=dtype))

    def __call__(self, x: Variable) -> Variable:
        tape = x.tape
        return F.conv2d(x, tape.watch(self.weight), tape.watch(self.bias), self.stride, self.pad)


class Linear(Module):
    """Fully-connected layer, optionally without bias."""

    def __init__(
        self,
        name: str,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        dtype=np.float64
    ):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(
            "{}.weight".format(name),
            (rng.standard_normal((out_features, in_features))/np.sqrt(in_features)).astype(dtype)
        )
        self.bias = Parameter(
            "{}.bias".format(name),
            np.zeros(out_features, dtype=dtype)
        ) if bias else None

    def __call__(self, x: Variable) -> Variable:
        tape = x.tape
        return F.fully_connected(
            x,
            tape.watch(self.weight),
            None if self.bias is None else tape.watch(self.bias)
        )


class BatchNorm1d(Module):
    """Batch normalisation of B×D batches with running statistics."""

    def __init__(self, name: str, features: int, dtype=np.float64):
        self.name = name
        self.gamma = Parameter("{}.gamma".format(name), np.ones(features, dtype=dtype))
        self.beta = Parameter("{}.beta".format(name), np.zeros(features, dtype=dtype))
        self.stats = RunningStats.zeros(features, dtype=dtype)

    def buffers(self) -> Dict[str, RunningStats]:
        return {self.name: self.stats}

    def __call__(self, x: Variable, mode: str) -> Variable:
        tape = x.tape
        return F.batch_norm(x, tape.watch(self.gamma), tape.watch(self.beta), self.stats, mode)


class ConvStack(Module):
    """Chain of same-kernel convolutions with ReLU in between."""

    def __init__(
        self,
        name: str,
        widths: Sequence[int],
        kernel: int,
        rng: np.random.Generator,
        final_relu: bool = True,
        zero_last: bool = False,
        strides: Optional[Sequence[int]] = None,
        dtype=np.float64
    ):
        """Create a new convolution stack.

        Parameters
        ----------
        name: str,
            Prefix of the layer names, layers are suffixed with their position.
        widths: Sequence[int],
            Channel counts, input first: n widths give n − 1 layers.
        kernel: int,
            Kernel side, padded to keep the spatial size at stride 1.
        rng: np.random.Generator,
            Source of the initialisation.
        final_relu: bool = True,
            Whether the last layer is followed by a ReLU.
        zero_last: bool = False,
            Whether the last layer starts from zero weights.
        strides: Optional[Sequence[int]] = None,
            Stride of every layer, 1 by default.
        dtype = np.float64,
            Parameter dtype.
        """
        self.widths = tuple(widths)
        self.final_relu = final_relu
        strides = strides or (1,)*(len(widths) - 1)
        self.layers = [
            Conv2d(
                "{name}.{index}".format(name=name, index=index),
                widths[index],
                widths[index + 1],
                kernel,
                rng,
                stride=strides[index],
                pad=kernel//2,
                zero=zero_last and index == len(widths) - 2,
                dtype=dtype
            )
            for index in range(len(widths) - 1)
        ]

    def __call__(self, x: Variable) -> Variable:
        for index, layer in enumerate(self.layers):
            x = layer(x)
            if self.final_relu or index < len(self.layers) - 1:
                x = F.relu(x)
        return x
