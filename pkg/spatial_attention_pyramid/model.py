"""Task network with the spatial attention pyramid attached as domain discriminator."""
from typing import Dict, List, Optional, Tuple

import numpy as np

from .autodiff import Parameter, Tape, Variable
from .exceptions import DataFormatError
from .layers import Module
from .pyramid import AttentionState, SpatialAttentionPyramid
from .task_net import Backbone, ModelConfig, SegmentationHead
from .utils import resize_bilinear

__all__ = ["SAPNet"]


class SAPNet(Module):
    """Backbone G, segmentation head R and pyramid discriminator D.

    The task parameters and the pyramid parameters are initialised from
    independent streams of the seed, so the task network starts identical
    whatever the pyramid configuration.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        """Create a new model.

        Parameters
        ----------
        config: ModelConfig,
            Network shapes. The pyramid sizes are fitted to the backbone
            feature map, with a RuntimeWarning when they have to shrink.
        seed: int = 0,
            Seed of the parameter initialisation.
        """
        self.config = config
        task_rng = np.random.default_rng([seed, 0])
        pyramid_rng = np.random.default_rng([seed, 1])
        self.backbone = Backbone(config, task_rng)
        self.head = SegmentationHead(config, task_rng)
        size = config.feature_size
        self.pyramid_config = config.pyramid.fitted(size, size)
        self.pyramid = SpatialAttentionPyramid(
            self.pyramid_config,
            config.feature_channels,
            config.classes,
            pyramid_rng,
            dtype=config.numpy_dtype
        )

    def task_parameters(self) -> List[Parameter]:
        """Return the parameters of G and R."""
        return self.backbone.parameters() + self.head.parameters()

    def adversarial_parameters(self) -> List[Parameter]:
        """Return the parameters of the pyramid and its discriminator."""
        return self.pyramid.parameters()

    def images(self, tape: Tape, images: np.ndarray) -> Variable:
        """Return the images as a constant of the model dtype."""
        return tape.constant(np.asarray(images, dtype=self.config.numpy_dtype))

    def forward_task(self, tape: Tape, images: np.ndarray) -> Tuple[Variable, Variable]:
        """Return backbone features f̂ and class logits for a batch of images."""
        features = self.backbone(self.images(tape, images))
        return features, self.head(features)

    def forward_domain(
        self,
        features: Variable,
        logits: Variable,
        mode: str = "train",
        lam: Optional[float] = None
    ) -> Tuple[Variable, AttentionState]:
        """Return the target-domain probability of every sample and the attention state."""
        guided_map = None
        if self.pyramid_config.use_guided_map:
            guided_map = SegmentationHead.guided_map(logits, self.pyramid_config.detach_guided_map)
        return self.pyramid(features, guided_map, mode=mode, lam=lam)

    def _batches(self, images: np.ndarray, batch_size: int):
        for start in range(0, len(images), batch_size):
            yield images[start:start + batch_size]

    def predict(self, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
        """Return the B×S×S predicted class maps at image resolution."""
        predictions = []
        size = self.config.image_size
        for batch in self._batches(images, batch_size):
            _, logits = self.forward_task(Tape(), batch)
            predictions.append(
                np.argmax(resize_bilinear(logits.value, size, size), axis=1)
            )
        return np.concatenate(predictions)

    def domain_probabilities(self, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
        """Return the discriminator's target-domain probability of every image (eval mode)."""
        probabilities = []
        for batch in self._batches(images, batch_size):
            features, logits = self.forward_task(Tape(), batch)
            probability, _ = self.forward_domain(features, logits, mode="eval")
            probabilities.append(probability.value)
        return np.concatenate(probabilities)

    def attention(self, images: np.ndarray) -> AttentionState:
        """Return the attention state of a batch of images (eval mode)."""
        features, logits = self.forward_task(Tape(), images)
        return self.forward_domain(features, logits, mode="eval")[1]

    def state_tensors(self) -> Dict[str, np.ndarray]:
        """Return parameters and running statistics keyed by checkpoint name."""
        tensors = {
            "param/{}".format(name): parameter.value
            for name, parameter in self.named_parameters().items()
        }
        for name, stats in self.buffers().items():
            tensors["bn/{}/running_mean".format(name)] = stats.mean
            tensors["bn/{}/running_var".format(name)] = stats.var
        return tensors

    def load_state_tensors(self, tensors: Dict[str, np.ndarray]):
        """Overwrite parameters and running statistics from checkpoint tensors.

        Raises
        ------
        DataFormatError:
            If a tensor is missing or has the wrong shape.
        """
        def fetch(key: str, shape: Tuple[int, ...]) -> np.ndarray:
            if key not in tensors:
                raise DataFormatError(
                    "Checkpoint has no tensor {key}.".format(key=key)
                )
            if tensors[key].shape != shape:
                raise DataFormatError(
                    "Checkpoint tensor {key} has shape {got}, expected {shape}.".format(
                        key=key,
                        got=tensors[key].shape,
                        shape=shape
                    )
                )
            return tensors[key].astype(self.config.numpy_dtype)

        for name, parameter in self.named_parameters().items():
            parameter.value = fetch("param/{}".format(name), parameter.shape)
            parameter.zero_grad()
        for name, stats in self.buffers().items():
            stats.mean = fetch("bn/{}/running_mean".format(name), stats.mean.shape)
            stats.var = fetch("bn/{}/running_var".format(name), stats.var.shape)
