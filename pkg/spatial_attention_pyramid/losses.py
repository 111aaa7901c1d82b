"""Task and adversarial losses and the objective they form."""
from typing import Optional

import numpy as np

from . import operations as F
from .autodiff import Variable
from .exceptions import ConfigurationError

__all__ = ["SOURCE", "TARGET", "task_loss", "adv_loss", "total_objective"]

SOURCE = 0
TARGET = 1


def task_loss(logits: Variable, labels: np.ndarray, domains: Optional[np.ndarray] = None) -> Variable:
    """Return the mean per-pixel cross-entropy of source predictions.

    Parameters
    ----------
    logits: Variable,
        B×C_sem×H×W logits, upsampled to the label resolution when smaller.
    labels: np.ndarray,
        B×H'×W' integer class maps.
    domains: Optional[np.ndarray] = None,
        Domain label of every sample; all must be source (0).

    Raises
    ------
    ValueError:
        If any sample belongs to the target domain.
    """
    if domains is not None and np.any(np.asarray(domains) != SOURCE):
        raise ValueError(
            "The task loss is defined on labelled source samples only, "
            "got domains {domains}.".format(domains=np.asarray(domains).tolist())
        )
    labels = np.asarray(labels)
    if logits.shape[-2:] != labels.shape[-2:]:
        logits = F.resize_bilinear(logits, *labels.shape[-2:])
    return F.softmax_cross_entropy(logits, labels)


def adv_loss(probabilities: Variable, domains: np.ndarray) -> Variable:
    """Return the batch mean of −[y ln x + (1 − y) ln(1 − x)], x clamped to [1e-7, 1 − 1e-7]."""
    return F.binary_cross_entropy(probabilities, domains)


def total_objective(task: Variable, adversarial: Optional[Variable], lam: float) -> Variable:
    """Return task + adversarial loss for the single backward pass.

    The gradient reversal of factor λ must already sit between the task
    network and the discriminator, so the sum realises the min-max objective.

    Raises
    ------
    ConfigurationError:
        If the adversarial loss carries no reversal of factor λ.
    """
    if adversarial is None:
        return task
    factors = [
        node.saved["lam"]
        for node in adversarial.tape.nodes[:adversarial.index]
        if node.op == "grad_reverse"
    ]
    if not factors or any(factor != lam for factor in factors):
        raise ConfigurationError(
            "The adversarial loss must be built with gradient reversal "
            "of factor {lam}, found factors {factors}.".format(lam=lam, factors=factors)
        )
    return F.add(task, adversarial)
