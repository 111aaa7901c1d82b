"""Backbone G and segmentation head R of the toy task network."""
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import operations as F
from .autodiff import Variable
from .exceptions import ConfigurationError, ShapeError
from .layers import Conv2d, ConvStack, Module
from .pyramid import PyramidConfig
from .utils import conv2d_output_size, softmax

__all__ = ["ModelConfig", "Backbone", "SegmentationHead", "DTYPES"]

DTYPES = {"float64": np.float64, "float32": np.float32}


def _desk_pyramid() -> PyramidConfig:
    return PyramidConfig.desk(channels=16)


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the task network and of the pyramid attached to it.

    Parameters
    ----------
    in_channels: int = 3,
        Image channels.
    image_size: int = 32,
        Side of the square input images.
    backbone_widths: Tuple[int, ...] = (16, 32),
        Output width of every 3×3 backbone convolution; the last one is Ĉ.
    backbone_strides: Tuple[int, ...] = (2, 1),
        Stride of every backbone convolution.
    classes: int = 4,
        Number C_sem of semantic classes, background included.
    dtype: str = "float64",
        Either "float64" or "float32".
    pyramid: PyramidConfig,
        Pyramid attached to the backbone features, fitted to their size
        when the model is built.
    """
    in_channels: int = 3
    image_size: int = 32
    backbone_widths: Tuple[int, ...] = (16, 32)
    backbone_strides: Tuple[int, ...] = (2, 1)
    classes: int = 4
    dtype: str = "float64"
    pyramid: PyramidConfig = field(default_factory=_desk_pyramid)

    def __post_init__(self):
        object.__setattr__(self, "backbone_widths", tuple(int(w) for w in self.backbone_widths))
        object.__setattr__(self, "backbone_strides", tuple(int(s) for s in self.backbone_strides))
        if len(self.backbone_widths) != len(self.backbone_strides) or not self.backbone_widths:
            raise ConfigurationError(
                "Backbone widths {widths} and strides {strides} must be "
                "non-empty and of equal length.".format(
                    widths=self.backbone_widths,
                    strides=self.backbone_strides
                )
            )
        if min(self.backbone_widths) < 1 or min(self.backbone_strides) < 1:
            raise ConfigurationError("Backbone widths and strides must be positive.")
        if self.classes < 2:
            raise ConfigurationError("The task needs at least two classes.")
        if self.dtype not in DTYPES:
            raise ConfigurationError(
                "Unknown dtype {dtype}, expected float64 or float32.".format(dtype=self.dtype)
            )
        if self.feature_size < 1:
            raise ConfigurationError(
                "A {size}×{size} image is too small for the backbone.".format(size=self.image_size)
            )

    @property
    def feature_channels(self) -> int:
        """Return the backbone output width Ĉ."""
        return self.backbone_widths[-1]

    @property
    def feature_size(self) -> int:
        """Return the side of the backbone feature map."""
        size = self.image_size
        for stride in self.backbone_strides:
            size = conv2d_output_size(size, 3, stride, 1)
        return size

    @property
    def numpy_dtype(self):
        """Return the numpy dtype of parameters and activations."""
        return DTYPES[self.dtype]


class Backbone(Module):
    """Stack of 3×3 conv + ReLU layers producing the features f̂."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.layers = ConvStack(
            "backbone",
            (config.in_channels,) + config.backbone_widths,
            3,
            rng,
            strides=config.backbone_strides,
            dtype=config.numpy_dtype
        )

    def __call__(self, images: Variable) -> Variable:
        """Return f̂ for a B×3×S×S batch of images.

        Raises
        ------
        ShapeError:
            If the images do not match the configured size.
        """
        expected = (self.config.in_channels, self.config.image_size, self.config.image_size)
        if images.ndim != 4 or images.shape[1:] != expected:
            raise ShapeError(
                "Expected a B×{expected} batch of images, got {shape}.".format(
                    expected="×".join(map(str, expected)),
                    shape=images.shape
                )
            )
        return self.layers(images)


class SegmentationHead(Module):
    """One 3×3 conv + ReLU and one 1×1 conv to per-pixel class logits."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        width = config.feature_channels
        self.hidden = Conv2d("head.hidden", width, width, 3, rng, pad=1, dtype=config.numpy_dtype)
        self.classifier = Conv2d("head.classifier", width, config.classes, 1, rng, dtype=config.numpy_dtype)

    def __call__(self, features: Variable) -> Variable:
        """Return the B×C_sem×H×W logits."""
        return self.classifier(F.relu(self.hidden(features)))

    @staticmethod
    def guided_map(logits: Variable, detach: bool = True) -> Variable:
        """Return the per-pixel class probabilities used as guided map P̂."""
        if detach:
            return logits.tape.constant(softmax(logits.value, axis=1))
        return F.softmax(logits, axis=1)
