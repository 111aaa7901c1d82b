"""Submodule providing the attention arithmetic of the spatial pyramid."""
from typing import Sequence

import numpy as np

from ..exceptions import ShapeError

__all__ = ["attention_vector", "fuse", "equal_scale_weights"]


def attention_vector(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Return the mask-weighted spatial sum of every channel.

    Parameters
    ----------
    features: np.ndarray,
        Pooled map C×Hn×Wn, or a batch B×C×Hn×Wn.
    mask: np.ndarray,
        Attention mask Hn×Wn, or a batch B×Hn×Wn.

    Raises
    ------
    ShapeError:
        If the spatial extents differ.

    Returns
    -------
    Vector of length C (or B×C) with V(c) = Σ_ij f(c, i, j)·ω(i, j).
    """
    features = np.asarray(features)
    mask = np.asarray(mask)
    if features.shape[-2:] != mask.shape[-2:] or features.ndim != mask.ndim + 1:
        raise ShapeError(
            "Cannot weight features of shape {features} with a mask of shape {mask}.".format(
                features=features.shape,
                mask=mask.shape
            )
        )
    return np.einsum("...chw,...hw->...c", features, mask)


def fuse(vectors: Sequence[np.ndarray], weights: Sequence[np.ndarray]) -> np.ndarray:
    """Return Σ_n V^n ⊙ φ^n.

    Raises
    ------
    ShapeError:
        If the number or the shapes of vectors and weights differ.
    """
    vectors = np.stack([np.asarray(v) for v in vectors])
    weights = np.stack([np.asarray(w) for w in weights])
    if vectors.shape != weights.shape:
        raise ShapeError(
            "Cannot fuse vectors of shape {vectors} with weights of shape {weights}.".format(
                vectors=vectors.shape,
                weights=weights.shape
            )
        )
    return (vectors*weights).sum(axis=0)


def equal_scale_weights(levels: int, shape: tuple, dtype=np.float64) -> np.ndarray:
    """Return φ^n(c) = 1/N for every level and channel."""
    return np.full((levels,) + tuple(shape), 1.0/levels, dtype=dtype)
