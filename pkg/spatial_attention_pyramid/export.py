"""Export of the spatial attention masks and scale weights of one image."""
import os
from typing import List

import numpy as np

from .exceptions import ConfigurationError, ShapeError
from .model import SAPNet
from .utils import read_netpbm, write_pgm

__all__ = ["export_attention", "load_image", "normalise_mask"]


def load_image(path: str, size: int) -> np.ndarray:
    """Return the 3×S×S image stored in a PPM file, scaled to [0, 1].

    Raises
    ------
    DataFormatError:
        If the file is not a valid PPM file.
    ShapeError:
        If the image is not a size×size colour image.
    """
    raster = read_netpbm(path)
    if raster.shape != (size, size, 3):
        raise ShapeError(
            "Image {path} has shape {shape}, expected a {size}×{size} colour image.".format(
                path=path,
                shape=raster.shape,
                size=size
            )
        )
    return raster.transpose(2, 0, 1).astype(np.float64)/255.0


def normalise_mask(mask: np.ndarray) -> np.ndarray:
    """Return the mask min-max scaled to 8-bit grey levels; constant masks map to 0."""
    low, high = mask.min(), mask.max()
    if high <= low:
        return np.zeros(mask.shape, dtype=np.uint8)
    return np.round((mask - low)/(high - low)*255.0).astype(np.uint8)


def export_attention(model: SAPNet, image: np.ndarray, directory: str) -> List[str]:
    """Write one PGM per pyramid level and the mean scale weight of every level.

    The masks ω^n are written at their native Hn×Wn resolution as
    ``level_<n>_k<size>.pgm``. ``weights.txt`` lists ``level size mean_phi``
    for every level.

    Parameters
    ----------
    model: SAPNet,
        Model whose pyramid runs in eval mode.
    image: np.ndarray,
        A 3×S×S image.
    directory: str,
        Output directory, created when missing.

    Raises
    ------
    ConfigurationError:
        If the pyramid has no spatial attention.

    Returns
    -------
    The paths of the written mask files.
    """
    config = model.pyramid_config
    if not config.use_spatial_attention:
        raise ConfigurationError(
            "The model was built without spatial attention, so it has no masks to export."
        )
    state = model.attention(np.asarray(image)[None])
    os.makedirs(directory, exist_ok=True)
    paths = []
    for level, (size, mask) in enumerate(zip(config.sizes, state.masks), start=1):
        path = os.path.join(directory, "level_{level:02d}_k{size}.pgm".format(level=level, size=size))
        write_pgm(path, normalise_mask(mask[0]))
        paths.append(path)
    with open(os.path.join(directory, "weights.txt"), "w") as f:
        f.write("level size mean_phi\n")
        for level, (size, weight) in enumerate(zip(config.sizes, state.mean_channel_weights()), start=1):
            f.write("{level} {size} {weight:.6f}\n".format(level=level, size=size, weight=weight))
    return paths
