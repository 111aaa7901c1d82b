"""Submodule providing batch normalisation over a batch of vectors."""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError, ShapeError

__all__ = ["RunningStats", "batch_norm_vec", "batch_norm_backward"]

MODES = ("train", "eval")


@dataclass
class RunningStats:
    """Running mean and variance tracked by a batch normalisation layer."""
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def zeros(cls, dim: int, dtype=np.float64) -> "RunningStats":
        """Return fresh statistics: zero mean and unit variance."""
        return cls(np.zeros(dim, dtype=dtype), np.ones(dim, dtype=dtype))

    def update(self, mean: np.ndarray, unbiased_var: np.ndarray):
        """Blend given batch statistics into the running ones."""
        self.mean = (1.0 - self.momentum)*self.mean + self.momentum*mean
        self.var = (1.0 - self.momentum)*self.var + self.momentum*unbiased_var


def batch_norm_vec(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    stats: RunningStats,
    mode: str = "train",
    with_cache: bool = False
) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Return the batch-normalised B×D batch.

    Parameters
    ----------
    x: np.ndarray,
        Batch of B vectors of length D, or a single vector in eval mode.
    gamma: np.ndarray,
        Scale of length D.
    beta: np.ndarray,
        Shift of length D.
    stats: RunningStats,
        Running statistics, updated in place in train mode (momentum 0.1).
    mode: str = "train",
        Either "train" (batch statistics) or "eval" (running statistics).
    with_cache: bool = False,
        Whether to also return the normalised input and the inverse
        deviation needed by batch_norm_backward.

    Raises
    ------
    ConfigurationError:
        If the mode is unknown.
    ShapeError:
        If the feature count differs from gamma or a train-mode batch
        holds a single sample.
    """
    if mode not in MODES:
        raise ConfigurationError(
            "Unknown batch normalisation mode {mode}, expected train or eval.".format(
                mode=mode
            )
        )
    x = np.asarray(x)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(
            "Batch normalisation over {dim} features expects a B×{dim} batch, "
            "got {shape}.".format(dim=gamma.shape[0], shape=x.shape)
        )
    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError(
                "Batch normalisation in train mode needs at least 2 samples, got 1."
            )
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        stats.update(mean, var*x.shape[0]/(x.shape[0] - 1))
    else:
        mean = stats.mean
        var = stats.var
    inverse_std = 1.0/np.sqrt(var + stats.eps)
    normalised = (x - mean)*inverse_std
    y = gamma*normalised + beta
    if single:
        y, normalised = y[0], normalised[0]
    if with_cache:
        return y, normalised, inverse_std
    return y

def batch_norm_backward(
    grad: np.ndarray,
    gamma: np.ndarray,
    normalised: np.ndarray,
    inverse_std: np.ndarray,
    mode: str
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return gradients w.r.t. input, gamma and beta."""
    grad_gamma = (grad*normalised).sum(axis=0)
    grad_beta = grad.sum(axis=0)
    grad_normalised = grad*gamma
    if mode == "eval":
        return grad_normalised*inverse_std, grad_gamma, grad_beta
    batch = grad.shape[0]
    grad_x = inverse_std/batch*(
        batch*grad_normalised
        - grad_normalised.sum(axis=0)
        - normalised*(grad_normalised*normalised).sum(axis=0)
    )
    return grad_x, grad_gamma, grad_beta
