"""Spatial attention pyramid: multi-scale pooling, task-guided spatial attention
masks, channel-wise scale selection and the domain discriminator.

Usage examples
--------------

.. code:: python

    from spatial_attention_pyramid import PyramidConfig, SpatialAttentionPyramid, Tape

    config = PyramidConfig.with_levels(3, channels=16).fitted(24, 24)
    pyramid = SpatialAttentionPyramid(config, in_channels=16, guide_channels=4)
    tape = Tape()
    probability, state = pyramid.forward(
        tape.constant(features),
        tape.constant(guided_map),
        mode="eval"
    )
"""
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from userinput.utils import closest

from . import operations as F
from .autodiff import Variable, grad_reverse
from .exceptions import ConfigurationError, ShapeError
from .layers import BatchNorm1d, ConvStack, Linear, Module
from .utils import equal_scale_weights, pooled_size

__all__ = [
    "DESK_SIZES",
    "DETECTION_SIZES",
    "SEGMENTATION_SIZES",
    "LEVEL_SIZES",
    "PyramidConfig",
    "AttentionState",
    "SpatialAttentionPyramid",
    "reduction_widths"
]

DETECTION_SIZES = (3, 6, 9, 12, 15, 18, 21, 24, 27, 30, 33, 35, 37)
SEGMENTATION_SIZES = (3, 9, 15, 21, 27, 33, 39, 45, 51)
# Fits the 16×16 features of the default task network.
DESK_SIZES = (3, 6, 9, 12, 15)
LEVEL_SIZES = {
    3: (3, 21, 37),
    5: DESK_SIZES,
    7: (3, 9, 15, 21, 27, 33, 37),
    9: SEGMENTATION_SIZES,
    13: DETECTION_SIZES
}
POOLING_KINDS = ("avg", "max")
REVERSAL_POINTS = ("features", "vector")


@dataclass(frozen=True)
class PyramidConfig:
    """Shape of the spatial attention pyramid and its ablation switches.

    Parameters
    ----------
    sizes: Tuple[int, ...] = DETECTION_SIZES,
        Pooling window sizes K, strictly increasing.
    channels: int = 256,
        Reduced channel count C.
    compact_dim: Optional[int] = None,
        Dimension d of the compact feature z, C/2 when None.
    use_guided_map: bool = True,
        Whether the task prediction map guides the attention masks.
    use_spatial_attention: bool = True,
        Whether to build the pyramid at all; when False the discriminator
        sees the global average of the reduced features.
    use_channel_attention: bool = True,
        Whether scales are selected per channel; when False every level
        weighs 1/N.
    pooling: str = "avg",
        Either "avg" or "max".
    detach_guided_map: bool = True,
        Whether the guided map is cut from the task head's gradient.
    reverse_at: str = "features",
        Where the gradient reversal sits: on the backbone features entering
        the pyramid ("features") or on the fused vector ("vector").
    """
    sizes: Tuple[int, ...] = DETECTION_SIZES
    channels: int = 256
    compact_dim: Optional[int] = None
    use_guided_map: bool = True
    use_spatial_attention: bool = True
    use_channel_attention: bool = True
    pooling: str = "avg"
    detach_guided_map: bool = True
    reverse_at: str = "features"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(size) for size in self.sizes))
        if not self.sizes:
            raise ConfigurationError("The pyramid needs at least one pooling size.")
        if self.sizes[0] < 1 or any(a >= b for a, b in zip(self.sizes, self.sizes[1:])):
            raise ConfigurationError(
                "Pooling sizes must be positive and strictly increasing, got {sizes}.".format(
                    sizes=self.sizes
                )
            )
        if self.channels < 1:
            raise ConfigurationError("The reduced channel count must be positive.")
        if self.compact_dim is None:
            object.__setattr__(self, "compact_dim", max(1, self.channels//2))
        if self.compact_dim < 1:
            raise ConfigurationError("The compact dimension must be positive.")
        if self.pooling not in POOLING_KINDS:
            raise ConfigurationError(
                "Unknown pooling {pooling}. Did you mean {closest}?".format(
                    pooling=self.pooling,
                    closest=closest(self.pooling, POOLING_KINDS)
                )
            )
        if self.reverse_at not in REVERSAL_POINTS:
            raise ConfigurationError(
                "Unknown reversal point {point}. Did you mean {closest}?".format(
                    point=self.reverse_at,
                    closest=closest(self.reverse_at, REVERSAL_POINTS)
                )
            )

    @property
    def levels(self) -> int:
        """Return the number N of pyramid levels."""
        return len(self.sizes)

    @classmethod
    def detection(cls, **kwargs) -> "PyramidConfig":
        """Return the 13-level configuration used for detection-style maps."""
        return cls(sizes=DETECTION_SIZES, **kwargs)

    @classmethod
    def segmentation(cls, **kwargs) -> "PyramidConfig":
        """Return the 9-level configuration used for segmentation-style maps."""
        return cls(sizes=SEGMENTATION_SIZES, **kwargs)

    @classmethod
    def desk(cls, **kwargs) -> "PyramidConfig":
        """Return the 5-level configuration sized for 16×16 feature maps."""
        return cls(sizes=DESK_SIZES, **kwargs)

    @classmethod
    def with_levels(cls, levels: int, **kwargs) -> "PyramidConfig":
        """Return the configuration with the standard pooling set of N levels.

        Raises
        ------
        ConfigurationError:
            If N is not one of 3, 5, 7, 9 or 13.
        """
        if levels not in LEVEL_SIZES:
            raise ConfigurationError(
                "No pooling set with {levels} levels. Did you mean {closest}?".format(
                    levels=levels,
                    closest=closest(str(levels), [str(key) for key in LEVEL_SIZES])
                )
            )
        return cls(sizes=LEVEL_SIZES[levels], **kwargs)

    def level_shapes(self, height: int, width: int) -> List[Tuple[int, int]]:
        """Return the spatial extent H−k+1 × W−k+1 of every level."""
        return [
            (pooled_size(height, size), pooled_size(width, size))
            for size in self.sizes
        ]

    def check_fits(self, height: int, width: int):
        """Raise a ConfigurationError listing the sizes exceeding a height×width map."""
        offending = [size for size in self.sizes if size > min(height, width)]
        if offending:
            raise ConfigurationError(
                "Pooling sizes {offending} exceed the {height}×{width} feature map.".format(
                    offending=offending,
                    height=height,
                    width=width
                )
            )

    def fitted(self, height: int, width: int) -> "PyramidConfig":
        """Return a copy whose pooling sizes fit a height×width feature map.

        Sizes are reduced from the largest down, keeping them strictly
        increasing, and a RuntimeWarning lists the reduced sizes.

        Raises
        ------
        ConfigurationError:
            If the map is too small to host N distinct sizes.
        """
        sizes = list(self.sizes)
        cap = min(height, width)
        for index in range(len(sizes) - 1, -1, -1):
            sizes[index] = min(sizes[index], cap)
            cap = sizes[index] - 1
        if sizes[0] < 1:
            raise ConfigurationError(
                "A {height}×{width} feature map cannot host {levels} pyramid levels.".format(
                    height=height,
                    width=width,
                    levels=self.levels
                )
            )
        if tuple(sizes) != self.sizes:
            warnings.warn(
                "Pooling sizes {original} reduced to {sizes} to fit "
                "the {height}×{width} feature map.".format(
                    original=self.sizes,
                    sizes=tuple(sizes),
                    height=height,
                    width=width
                ),
                RuntimeWarning
            )
        return replace(self, sizes=tuple(sizes))


@dataclass
class AttentionState:
    """Everything the pyramid computed for one batch, as plain arrays."""
    masks: List[np.ndarray] = field(default_factory=list)
    vectors: List[np.ndarray] = field(default_factory=list)
    channel_weights: List[np.ndarray] = field(default_factory=list)
    fused: Optional[np.ndarray] = None
    compact: Optional[np.ndarray] = None

    def mean_channel_weights(self) -> List[float]:
        """Return mean_c φ^n(c) for every level, averaged over the batch."""
        return [float(weights.mean()) for weights in self.channel_weights]


def reduction_widths(in_channels: int, channels: int) -> Tuple[int, int, int, int]:
    """Return the widths Ĉ → max(C, Ĉ/2) → max(C, Ĉ/4) → C of the channel reduction.

    Raises
    ------
    ConfigurationError:
        If Ĉ < C, since the reduction never expands channels.
    """
    if in_channels < channels:
        raise ConfigurationError(
            "Cannot reduce {in_channels} backbone channels to {channels}: "
            "the reduced count must not exceed the backbone width.".format(
                in_channels=in_channels,
                channels=channels
            )
        )
    return (
        in_channels,
        max(channels, int(round(in_channels/2))),
        max(channels, int(round(in_channels/4))),
        channels
    )


class SpatialAttentionPyramid(Module):
    """Domain discriminator head built on the spatial attention pyramid."""

    def __init__(
        self,
        config: PyramidConfig,
        in_channels: int,
        guide_channels: int,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float64
    ):
        """Create a new pyramid.

        Parameters
        ----------
        config: PyramidConfig,
            Pyramid shape and ablation switches.
        in_channels: int,
            Channel count Ĉ of the backbone features.
        guide_channels: int,
            Channel count C_sem of the guided map.
        rng: Optional[np.random.Generator] = None,
            Source of the initialisation, seeded with 0 when None.
        dtype = np.float64,
            Parameter dtype.

        Raises
        ------
        ConfigurationError:
            If Ĉ < C.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        self.config = config
        self.in_channels = in_channels
        self.guide_channels = guide_channels
        channels = config.channels
        self.reducer = ConvStack(
            "pyramid.reduce",
            reduction_widths(in_channels, channels),
            1,
            rng,
            dtype=dtype
        )
        self.guide = None
        self.mask_heads = []
        self.squeeze = None
        self.squeeze_norm = None
        self.selectors = []
        if config.use_spatial_attention:
            self.guide = ConvStack(
                "pyramid.guide",
                (self.guided_in_channels, channels, channels, channels),
                3,
                rng,
                dtype=dtype
            )
            self.mask_heads = [
                ConvStack(
                    "pyramid.mask{level}".format(level=level),
                    (channels, max(1, channels//2), max(1, channels//4), 1),
                    3,
                    rng,
                    final_relu=False,
                    zero_last=True,
                    dtype=dtype
                )
                for level in range(config.levels)
            ]
            if config.use_channel_attention:
                self.squeeze = Linear("pyramid.squeeze", channels, config.compact_dim, rng, bias=False, dtype=dtype)
                self.squeeze_norm = BatchNorm1d("pyramid.squeeze_norm", config.compact_dim, dtype=dtype)
                self.selectors = [
                    Linear(
                        "pyramid.select{level}".format(level=level),
                        config.compact_dim,
                        channels,
                        rng,
                        bias=False,
                        dtype=dtype
                    )
                    for level in range(config.levels)
                ]
        self.discriminator = Linear("discriminator", channels, 1, rng, dtype=dtype)

    @property
    def guided_in_channels(self) -> int:
        """Return the input width of the first guided-feature convolution."""
        if self.config.use_guided_map:
            return self.in_channels + self.guide_channels
        return self.in_channels

    def reduce_channels(self, features: Variable) -> Variable:
        """Return f̄: the backbone features through three 1×1 conv + ReLU stages."""
        return self.reducer(features)

    def build_pyramid(self, reduced: Variable) -> List[Variable]:
        """Return the N pooled maps f^n of the reduced features.

        Raises
        ------
        ConfigurationError:
            If a pooling size exceeds the map.
        """
        self.config.check_fits(*reduced.shape[-2:])
        pool = F.avg_pool2d if self.config.pooling == "avg" else F.max_pool2d
        return [pool(reduced, size) for size in self.config.sizes]

    def build_guided_feature(self, features: Variable, guided_map: Optional[Variable]) -> Variable:
        """Return P̄: the guided map concatenated to f̂, through three 3×3 conv + ReLU.

        Raises
        ------
        ConfigurationError:
            If the guided map is required but missing.
        ShapeError:
            If the guided map has the wrong width or batch size.
        """
        if not self.config.use_guided_map:
            return self.guide(features)
        if guided_map is None:
            raise ConfigurationError(
                "The pyramid is configured with a guided map but none was given."
            )
        if guided_map.shape[-3] != self.guide_channels or guided_map.shape[:-3] != features.shape[:-3]:
            raise ShapeError(
                "Guided map of shape {guided} does not match features of shape "
                "{features} with {channels} guide channels.".format(
                    guided=guided_map.shape,
                    features=features.shape,
                    channels=self.guide_channels
                )
            )
        if guided_map.shape[-2:] != features.shape[-2:]:
            guided_map = F.resize_bilinear(guided_map, *features.shape[-2:])
        return self.guide(F.concat([features, guided_map], axis=-3))

    def spatial_attention_mask(self, guided_feature: Variable, level: int, shape: Tuple[int, int]) -> Variable:
        """Return ω^n: the softmax over positions of the level's mask logits.

        Parameters
        ----------
        guided_feature: Variable,
            The shared guided feature map P̄, B×C×H×W.
        level: int,
            Zero-based level index n.
        shape: Tuple[int, int],
            Spatial extent Hn×Wn of the level.
        """
        logits = self.mask_heads[level](F.resize_bilinear(guided_feature, *shape))
        return F.spatial_softmax(F.reshape(logits, logits.shape[:-3] + logits.shape[-2:]))

    def attention_vector(self, pooled: Variable, mask: Variable) -> Variable:
        """Return V^n(c) = Σ_ij f^n(c, i, j)·ω^n(i, j)."""
        return F.attention_vector(pooled, mask)

    def channel_attention(self, vectors: Sequence[Variable], mode: str) -> Tuple[Variable, Optional[Variable]]:
        """Return the N×B×C scale weights φ and the compact feature z.

        φ is the per-channel softmax across levels of a_n·z with
        z = relu(BN(W_z·Σ_n V^n)); without channel attention every level
        weighs 1/N and z is None.
        """
        tape = vectors[0].tape
        if not self.config.use_channel_attention:
            levels = len(vectors)
            return tape.constant(equal_scale_weights(
                levels,
                vectors[0].shape,
                dtype=vectors[0].value.dtype
            )), None
        total = vectors[0]
        for vector in vectors[1:]:
            total = F.add(total, vector)
        compact = F.relu(self.squeeze_norm(self.squeeze(total), mode))
        logits = F.stack([selector(compact) for selector in self.selectors])
        return F.softmax(logits, axis=0), compact

    def fuse(self, vectors: Sequence[Variable], weights: Variable) -> Variable:
        """Return V = Σ_n V^n ⊙ φ^n; an equal mean when channel attention is off."""
        stacked = F.stack(vectors)
        if not self.config.use_channel_attention:
            return F.mean(stacked, axis=0)
        return F.fuse(stacked, weights)

    def discriminate(self, fused: Variable, lam: Optional[float] = None) -> Variable:
        """Return x_i: the probability that each sample comes from the target domain.

        When λ is given and the reversal sits on the vector, the gradient is
        reversed right before the fully-connected layer.
        """
        if lam is not None and self.config.reverse_at == "vector":
            fused = grad_reverse(fused, lam)
        logits = self.discriminator(fused)
        return F.sigmoid(F.reshape(logits, logits.shape[:-1]))

    def forward(
        self,
        features: Variable,
        guided_map: Optional[Variable],
        mode: str = "train",
        lam: Optional[float] = None
    ) -> Tuple[Variable, AttentionState]:
        """Return the domain probability of every sample and the attention state.

        Parameters
        ----------
        features: Variable,
            Backbone features f̂, B×Ĉ×H×W.
        guided_map: Optional[Variable],
            Guided map P̂, B×C_sem×H'×W', resized to H×W when needed.
        mode: str = "train",
            Batch normalisation mode of the compact feature.
        lam: Optional[float] = None,
            Gradient reversal factor; no reversal when None.

        Raises
        ------
        ConfigurationError:
            If the pooling sizes do not fit the feature map.
        """
        if features.ndim != 4 or features.shape[1] != self.in_channels:
            raise ShapeError(
                "Expected a B×{channels}×H×W batch of features, got {shape}.".format(
                    channels=self.in_channels,
                    shape=features.shape
                )
            )
        if lam is not None and self.config.reverse_at == "features":
            features = grad_reverse(features, lam)
            if guided_map is not None and not self.config.detach_guided_map:
                guided_map = grad_reverse(guided_map, lam)
        reduced = self.reduce_channels(features)
        state = AttentionState()
        if not self.config.use_spatial_attention:
            fused = F.mean(reduced, axis=(2, 3))
            state.vectors = [fused.value.copy()]
            state.channel_weights = [np.ones_like(fused.value)]
            state.fused = fused.value.copy()
            return self.discriminate(fused, lam), state
        pyramid = self.build_pyramid(reduced)
        guided_feature = self.build_guided_feature(features, guided_map)
        vectors = []
        for level, pooled in enumerate(pyramid):
            mask = self.spatial_attention_mask(guided_feature, level, pooled.shape[-2:])
            vectors.append(self.attention_vector(pooled, mask))
            state.masks.append(mask.value.copy())
        weights, compact = self.channel_attention(vectors, mode)
        fused = self.fuse(vectors, weights)
        state.vectors = [vector.value.copy() for vector in vectors]
        state.channel_weights = list(weights.value.copy())
        state.fused = fused.value.copy()
        state.compact = None if compact is None else compact.value.copy()
        return self.discriminate(fused, lam), state

    __call__ = forward
