"""Deterministic synthetic two-domain segmentation dataset.

Source images show flat-coloured circles, squares and triangles on a plain
background. Target images share the geometry distribution but are seen
through a colour shift, a low-frequency haze and additive Gaussian noise.

Usage examples
--------------

.. code:: python

    from spatial_attention_pyramid import SceneSpec, SyntheticDataset

    dataset = SyntheticDataset.generate(count=200, seed=42, spec=SceneSpec())
    dataset.save("data/train")
    dataset = SyntheticDataset.load("data/train")
    source = dataset.domain(0)
"""
import os
from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from tqdm.auto import tqdm

from .exceptions import ConfigurationError, DataFormatError
from .losses import SOURCE, TARGET
from .utils import read_netpbm, resize_bilinear, write_pgm, write_ppm

__all__ = ["SceneSpec", "Sample", "SyntheticDataset", "generate", "save_dataset", "load_dataset", "CLASS_NAMES"]

CLASS_NAMES = ("background", "circle", "square", "triangle")
CLASS_COLORS = np.array([
    [0.85, 0.25, 0.20],
    [0.20, 0.75, 0.30],
    [0.25, 0.35, 0.90]
])
BACKGROUND = np.array([0.45, 0.45, 0.45])
FOG = np.array([0.85, 0.85, 0.88])
MANIFEST = "manifest.txt"


@dataclass(frozen=True)
class SceneSpec:
    """Geometry and appearance of the synthetic scenes.

    Parameters
    ----------
    image_size: int = 32,
        Side of the square images.
    min_shapes: int = 1,
        Fewest shapes per image.
    max_shapes: int = 3,
        Most shapes per image.
    min_radius: int = 3,
        Smallest half-extent of a shape, in pixels.
    max_radius: int = 7,
        Largest half-extent of a shape, in pixels.
    color_jitter: float = 0.1,
        Uniform per-channel jitter of the class colours.
    noise_sigma: float = 0.08,
        Standard deviation σ of the target-domain Gaussian noise.
    haze_alpha: float = 0.6,
        Strength α of the target-domain haze blend.
    color_shift: Tuple[float, float, float] = (0.15, 0.05, -0.15),
        Per-channel offset added to target-domain images.
    """
    image_size: int = 32
    min_shapes: int = 1
    max_shapes: int = 3
    min_radius: int = 3
    max_radius: int = 7
    color_jitter: float = 0.1
    noise_sigma: float = 0.08
    haze_alpha: float = 0.6
    color_shift: Tuple[float, float, float] = (0.15, 0.05, -0.15)

    def __post_init__(self):
        object.__setattr__(self, "color_shift", tuple(float(c) for c in self.color_shift))
        if len(self.color_shift) != 3:
            raise ConfigurationError("The colour shift needs one value per RGB channel.")
        if not 1 <= self.min_shapes <= self.max_shapes:
            raise ConfigurationError(
                "Shape counts must satisfy 1 ≤ min_shapes ≤ max_shapes, got {low} and {high}.".format(
                    low=self.min_shapes,
                    high=self.max_shapes
                )
            )
        if not 2 <= self.min_radius <= self.max_radius or 2*self.max_radius + 2 > self.image_size:
            raise ConfigurationError(
                "Shape radii {low}..{high} do not fit {size}×{size} images.".format(
                    low=self.min_radius,
                    high=self.max_radius,
                    size=self.image_size
                )
            )
        if self.noise_sigma < 0 or not 0 <= self.haze_alpha <= 1:
            raise ConfigurationError(
                "Severity must satisfy σ ≥ 0 and 0 ≤ α ≤ 1, got σ={sigma} and α={alpha}.".format(
                    sigma=self.noise_sigma,
                    alpha=self.haze_alpha
                )
            )


class Sample(NamedTuple):
    """One image with its optional label map and its domain."""
    image: np.ndarray
    label: Optional[np.ndarray]
    domain: int


def _render_geometry(spec: SceneSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Return the source-style image and its label map."""
    size = spec.image_size
    y, x = np.mgrid[0:size, 0:size]
    image = np.broadcast_to(BACKGROUND[:, None, None], (3, size, size)).copy()
    label = np.zeros((size, size), dtype=np.int64)
    for _ in range(rng.integers(spec.min_shapes, spec.max_shapes + 1)):
        kind = int(rng.integers(1, len(CLASS_NAMES)))
        radius = int(rng.integers(spec.min_radius, spec.max_radius + 1))
        cy, cx = rng.integers(radius + 1, size - radius - 1, size=2)
        color = np.clip(
            CLASS_COLORS[kind - 1] + rng.uniform(-spec.color_jitter, spec.color_jitter, size=3),
            0.0,
            1.0
        )
        if kind == 1:
            inside = (y - cy)**2 + (x - cx)**2 <= radius**2
        elif kind == 2:
            inside = (np.abs(y - cy) <= radius) & (np.abs(x - cx) <= radius)
        else:
            # Apex on top, base of width 2·radius at the bottom.
            inside = (y >= cy - radius) & (y <= cy + radius) & (2*np.abs(x - cx) <= y - (cy - radius))
        image[:, inside] = color[:, None]
        label[inside] = kind
    return image, label


def _apply_target_style(image: np.ndarray, spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Return the image seen through the target-domain colour shift, haze and noise."""
    size = image.shape[-1]
    image = image + np.asarray(spec.color_shift)[:, None, None]
    field = resize_bilinear(rng.uniform(0.0, 1.0, size=(1, 4, 4)), size, size)[0]
    haze = spec.haze_alpha*(0.5 + 0.5*field)
    image = image*(1.0 - haze) + FOG[:, None, None]*haze
    image = image + rng.normal(0.0, 1.0, size=image.shape)*spec.noise_sigma
    return np.clip(image, 0.0, 1.0)


def _quantise(image: np.ndarray) -> np.ndarray:
    return np.round(image*255.0)/255.0


def generate(domain: int, count: int, seed: int, spec: Optional[SceneSpec] = None) -> List[Sample]:
    """Return count samples of given domain.

    Geometry depends on (seed, index) only, appearance on (seed, index,
    domain), so both domains share the same scene distribution. Images are
    quantised to 8-bit levels so that they survive PPM storage exactly.

    Parameters
    ----------
    domain: int,
        0 for the source domain, 1 for the target domain.
    count: int,
        Number of samples, at least 1.
    seed: int,
        Seed of the scenes.
    spec: Optional[SceneSpec] = None,
        Scene parameters, defaults when None.

    Raises
    ------
    ConfigurationError:
        If the count is not positive or the domain is unknown.
    """
    spec = SceneSpec() if spec is None else spec
    if count < 1:
        raise ConfigurationError("The sample count must be positive, got {count}.".format(count=count))
    if domain not in (SOURCE, TARGET):
        raise ConfigurationError("Domain must be 0 (source) or 1 (target), got {domain}.".format(domain=domain))
    samples = []
    for index in range(count):
        image, label = _render_geometry(spec, np.random.default_rng([seed, index]))
        if domain == TARGET:
            image = _apply_target_style(image, spec, np.random.default_rng([seed, index, 1]))
        samples.append(Sample(_quantise(image), label, domain))
    return samples


class SyntheticDataset:
    """In-memory collection of samples from both domains."""

    def __init__(self, samples: List[Sample]):
        """Create a new dataset from a list of samples.

        Raises
        ------
        DataFormatError:
            If the dataset is empty or the image sizes differ.
        """
        if not samples:
            raise DataFormatError("A dataset needs at least one sample.")
        shapes = {sample.image.shape for sample in samples}
        if len(shapes) != 1:
            raise DataFormatError(
                "All images must share one shape, got {shapes}.".format(shapes=sorted(shapes))
            )
        self._samples = list(samples)

    @classmethod
    def generate(
        cls,
        count: int,
        seed: int,
        spec: Optional[SceneSpec] = None,
        target_labels: bool = False,
        verbose: bool = True
    ) -> "SyntheticDataset":
        """Return count source and count target samples.

        The target domain uses its own scenes (seed + 1) and, unless
        target_labels is set, its label maps are withheld.
        """
        samples = []
        for domain in tqdm(
            (SOURCE, TARGET),
            desc="Generating synthetic domains",
            disable=not verbose,
            dynamic_ncols=True,
            leave=False
        ):
            for sample in generate(domain, count, seed + domain, spec):
                keep = domain == SOURCE or target_labels
                samples.append(sample if keep else sample._replace(label=None))
        return cls(samples)

    def __len__(self) -> int:
        """Return the number of samples."""
        return len(self._samples)

    def __getitem__(self, index: int) -> Sample:
        """Return the sample at given index."""
        return self._samples[index]

    def __iter__(self) -> Iterator[Sample]:
        """Return an iterator over the samples."""
        return iter(self._samples)

    def domain(self, domain: int) -> "SyntheticDataset":
        """Return the samples of given domain.

        Raises
        ------
        DataFormatError:
            If the dataset holds no sample of that domain.
        """
        samples = [sample for sample in self if sample.domain == domain]
        if not samples:
            raise DataFormatError(
                "The dataset holds no {name} sample.".format(
                    name="source" if domain == SOURCE else "target"
                )
            )
        return SyntheticDataset(samples)

    @property
    def images(self) -> np.ndarray:
        """Return the N×3×S×S image stack."""
        return np.stack([sample.image for sample in self])

    @property
    def labels(self) -> np.ndarray:
        """Return the N×S×S label stack.

        Raises
        ------
        DataFormatError:
            If some sample has no label.
        """
        if any(sample.label is None for sample in self):
            raise DataFormatError("Some samples of this dataset carry no label map.")
        return np.stack([sample.label for sample in self])

    @property
    def domains(self) -> np.ndarray:
        """Return the domain label of every sample."""
        return np.array([sample.domain for sample in self], dtype=np.int64)

    def class_frequencies(self, classes: int = len(CLASS_NAMES)) -> np.ndarray:
        """Return the fraction of labelled pixels falling in every class."""
        counts = np.bincount(self.labels.ravel(), minlength=classes).astype(np.float64)
        return counts/counts.sum()

    def save(self, directory: str):
        """Store the dataset as PPM images, PGM labels and a manifest."""
        save_dataset(self, directory)

    @classmethod
    def load(cls, directory: str) -> "SyntheticDataset":
        """Return the dataset stored in given directory."""
        return load_dataset(directory)


def save_dataset(dataset: SyntheticDataset, directory: str):
    """Store the dataset in given directory.

    Images are written as binary PPM, labels as binary PGM whose pixel value
    is the class id, and ``manifest.txt`` lists ``<image> <label|-> <domain>``.
    """
    os.makedirs(directory, exist_ok=True)
    lines = []
    for index, sample in enumerate(dataset):
        stem = "{domain}_{index:05d}".format(
            domain="source" if sample.domain == SOURCE else "target",
            index=index
        )
        image_name = "{}.ppm".format(stem)
        write_ppm(
            os.path.join(directory, image_name),
            np.round(sample.image.transpose(1, 2, 0)*255.0)
        )
        label_name = "-"
        if sample.label is not None:
            label_name = "{}_label.pgm".format(stem)
            write_pgm(os.path.join(directory, label_name), sample.label)
        lines.append("{image} {label} {domain}".format(
            image=image_name,
            label=label_name,
            domain=sample.domain
        ))
    with open(os.path.join(directory, MANIFEST), "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(directory: str) -> SyntheticDataset:
    """Return the dataset stored in given directory.

    Raises
    ------
    DataFormatError:
        If the manifest is missing or malformed, naming the offending line,
        or if an image or label file cannot be parsed.
    """
    path = os.path.join(directory, MANIFEST)
    if not os.path.exists(path):
        raise DataFormatError("No {manifest} found in {directory}.".format(
            manifest=MANIFEST,
            directory=directory
        ))
    samples = []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 3 or fields[2] not in ("0", "1"):
                raise DataFormatError(
                    "{path} line {number}: expected '<image> <label|-> <domain 0|1>', "
                    "got {line!r}.".format(path=path, number=number, line=line.strip())
                )
            image_name, label_name, domain = fields
            for name in (image_name, label_name):
                if name != "-" and not os.path.exists(os.path.join(directory, name)):
                    raise DataFormatError(
                        "{path} line {number}: file {name} does not exist.".format(
                            path=path,
                            number=number,
                            name=name
                        )
                    )
            image = read_netpbm(os.path.join(directory, image_name))
            if image.ndim != 3:
                raise DataFormatError(
                    "{path} line {number}: image {name} is not a PPM file.".format(
                        path=path,
                        number=number,
                        name=image_name
                    )
                )
            label = None
            if label_name != "-":
                label = read_netpbm(os.path.join(directory, label_name)).astype(np.int64)
                if label.shape != image.shape[:2]:
                    raise DataFormatError(
                        "{path} line {number}: label {name} does not match its image size.".format(
                            path=path,
                            number=number,
                            name=label_name
                        )
                    )
            samples.append(Sample(
                image.transpose(2, 0, 1).astype(np.float64)/255.0,
                label,
                int(domain)
            ))
    return SyntheticDataset(samples)
