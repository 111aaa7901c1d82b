"""Two-stage training of the task network against the pyramid discriminator.

The first stage minimises the task loss on labelled source samples only.
The second stage adds the adversarial path: source and target features go
through the gradient reversal into the spatial attention pyramid, and a
single backward pass of task + adversarial loss updates every parameter.

Usage examples
--------------

.. code:: python

    from spatial_attention_pyramid import ModelConfig, TrainConfig, SyntheticDataset, train, evaluate

    dataset = SyntheticDataset.generate(count=200, seed=42)
    checkpoint, metrics = train(ModelConfig(), TrainConfig(iterations=2000), dataset)
    metrics.to_csv("metrics.csv", index=False)
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union

import numba
import numpy as np
import pandas as pd
from tqdm.auto import tqdm
from userinput.utils import closest

from . import operations as F
from .autodiff import Parameter, Tape
from .checkpoint import Checkpoint
from .exceptions import ConfigurationError, DataFormatError, NumericalError
from .losses import SOURCE, TARGET, adv_loss, task_loss, total_objective
from .model import SAPNet
from .synthetic import SyntheticDataset
from .task_net import ModelConfig
from .utils import confusion_matrix, segmentation_scores

__all__ = [
    "LAMBDA_PRESETS",
    "METRICS_COLUMNS",
    "TrainConfig",
    "resolve_lambda",
    "adam_step",
    "Adam",
    "Trainer",
    "train",
    "evaluate"
]

LAMBDA_PRESETS = {
    "cityscapes_to_foggy": 1.0,
    "cityscapes_to_kitti": 0.01,
    "kitti_to_cityscapes": 0.2,
    "voc_to_clipart": 0.1,
    "voc_to_watercolor": 0.01,
    "sim10k_to_cityscapes": 0.1
}
METRICS_COLUMNS = ["iter", "task_loss", "adv_loss", "disc_acc", "lr"]


def resolve_lambda(value: Union[str, float]) -> float:
    """Return λ given as a number or as the name of a scenario preset.

    Raises
    ------
    ConfigurationError:
        If the value is neither a non-negative number nor a known preset.
    """
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            if value not in LAMBDA_PRESETS:
                raise ConfigurationError(
                    "Unknown λ preset {value}. Did you mean {closest}?".format(
                        value=value,
                        closest=closest(value, list(LAMBDA_PRESETS))
                    )
                )
            value = LAMBDA_PRESETS[value]
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ConfigurationError(
            "λ must be a finite non-negative number, got {value}.".format(value=value)
        )
    return value


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation schedule of a training run.

    Parameters
    ----------
    lam: float = 1.0,
        Trade-off λ between task and adversarial loss, or a preset name.
    learning_rate: float = 1e-3,
        Initial Adam learning rate, divided by 10 at every milestone.
    milestones: Tuple[int, ...] = (7000, 8000),
        Iterations at which the learning rate decays.
    iterations: int = 9000,
        Total number of iterations, pretraining included.
    pretrain_iterations: int = 1000,
        Iterations of source-only training before the adversarial stage.
    source_batch: int = 1,
        Labelled source samples per iteration.
    target_batch: int = 1,
        Unlabelled target samples per adversarial iteration.
    seed: int = 0,
        Seed of the initialisation and of the sampling streams.
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
        Adam hyper-parameters.
    log_every: int = 100,
        Iterations per metrics row.
    source_only: bool = False,
        Whether the whole run stays in the source-only stage.
    threads: Optional[int] = None,
        Number of numba threads, all available when None.
    """
    lam: float = 1.0
    learning_rate: float = 1e-3
    milestones: Tuple[int, ...] = (7000, 8000)
    iterations: int = 9000
    pretrain_iterations: int = 1000
    source_batch: int = 1
    target_batch: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 100
    source_only: bool = False
    threads: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "lam", resolve_lambda(self.lam))
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if self.iterations < 1 or not 0 <= self.pretrain_iterations <= self.iterations:
            raise ConfigurationError(
                "Iterations must satisfy 0 ≤ pretrain ≤ total and total ≥ 1, "
                "got {pretrain} and {total}.".format(
                    pretrain=self.pretrain_iterations,
                    total=self.iterations
                )
            )
        if any(a >= b for a, b in zip(self.milestones, self.milestones[1:])) or any(
            not 0 < milestone < self.iterations for milestone in self.milestones
        ):
            raise ConfigurationError(
                "Milestones {milestones} must be strictly increasing and "
                "below the {total} iterations.".format(
                    milestones=self.milestones,
                    total=self.iterations
                )
            )
        if self.learning_rate <= 0:
            raise ConfigurationError("The learning rate must be positive.")
        if self.source_batch < 1:
            raise ConfigurationError("Every iteration needs at least one source sample.")
        if not self.source_only and (self.target_batch < 1 or self.source_batch + self.target_batch < 2):
            raise ConfigurationError(
                "The adversarial stage needs at least one target sample, got {count}.".format(
                    count=self.target_batch
                )
            )
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigurationError("Adam needs 0 ≤ β1, β2 < 1 and ε > 0.")
        if self.log_every < 1:
            raise ConfigurationError("Metrics must be logged at least every iteration.")
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError("The thread count must be positive.")

    @classmethod
    def full_schedule(cls, **kwargs) -> "TrainConfig":
        """Return the full-length schedule: 90k iterations at 1e-5, decayed at 70k and 80k."""
        defaults = dict(
            learning_rate=1e-5,
            milestones=(70000, 80000),
            iterations=90000,
            pretrain_iterations=10000
        )
        defaults.update(kwargs)
        return cls(**defaults)

    def learning_rate_at(self, iteration: int) -> float:
        """Return the learning rate of given zero-based iteration."""
        decays = sum(iteration >= milestone for milestone in self.milestones)
        return self.learning_rate/10**decays

    def is_adversarial(self, iteration: int) -> bool:
        """Return whether given iteration belongs to the adversarial stage."""
        return not self.source_only and iteration >= self.pretrain_iterations


def adam_step(
    value: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the updated value and moments of one bias-corrected Adam step.

    Parameters
    ----------
    value: np.ndarray,
        Current parameter value.
    grad: np.ndarray,
        Gradient of the loss.
    m: np.ndarray,
        First moment before the step.
    v: np.ndarray,
        Second moment before the step.
    t: int,
        One-based index of this step.
    learning_rate: float,
        Step size.
    """
    m = beta1*m + (1.0 - beta1)*grad
    v = beta2*v + (1.0 - beta2)*grad*grad
    m_hat = m/(1.0 - beta1**t)
    v_hat = v/(1.0 - beta2**t)
    return value - learning_rate*m_hat/(np.sqrt(v_hat) + eps), m, v


class Adam:
    """Adam optimiser keeping moments and step count per parameter name.

    A parameter only starts counting steps the first time it is updated, so
    the discriminator joining at the adversarial stage gets its own bias
    correction.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t: Dict[str, int] = {}

    def step(self, parameters: List[Parameter], learning_rate: float):
        """Update given parameters in place from their gradients.

        Raises
        ------
        NumericalError:
            If a gradient holds NaN or infinite values; nothing is updated.
        """
        for parameter in parameters:
            if not np.all(np.isfinite(parameter.grad)):
                raise NumericalError(
                    "Non-finite gradient for parameter {name}.".format(name=parameter.name)
                )
        for parameter in parameters:
            name = parameter.name
            if name not in self.t:
                self.m[name] = np.zeros_like(parameter.value)
                self.v[name] = np.zeros_like(parameter.value)
                self.t[name] = 0
            self.t[name] += 1
            parameter.value, self.m[name], self.v[name] = adam_step(
                parameter.value,
                parameter.grad,
                self.m[name],
                self.v[name],
                self.t[name],
                learning_rate,
                self.beta1,
                self.beta2,
                self.eps
            )

    def state_tensors(self) -> Dict[str, np.ndarray]:
        """Return moments and step counts keyed by checkpoint name."""
        tensors = {}
        for name, t in self.t.items():
            tensors["adam_m/{}".format(name)] = self.m[name]
            tensors["adam_v/{}".format(name)] = self.v[name]
            tensors["adam_t/{}".format(name)] = np.array(t, dtype=np.float64)
        return tensors

    def load_state_tensors(self, tensors: Dict[str, np.ndarray], dtype=np.float64):
        """Replace the optimiser state with the one stored in checkpoint tensors.

        Raises
        ------
        DataFormatError:
            If a moment record is missing for a stored step count.
        """
        self.m, self.v, self.t = {}, {}, {}
        for key, t in tensors.items():
            if not key.startswith("adam_t/"):
                continue
            name = key[len("adam_t/"):]
            for moment in ("adam_m", "adam_v"):
                if "{}/{}".format(moment, name) not in tensors:
                    raise DataFormatError(
                        "Checkpoint has a step count but no {moment} record for {name}.".format(
                            moment=moment,
                            name=name
                        )
                    )
            self.t[name] = int(t)
            self.m[name] = tensors["adam_m/{}".format(name)].astype(dtype)
            self.v[name] = tensors["adam_v/{}".format(name)].astype(dtype)


class Trainer:
    """Training loop of one model on one dataset."""

    def __init__(
        self,
        model: SAPNet,
        config: TrainConfig,
        dataset: SyntheticDataset,
        echo: str = ""
    ):
        """Create a new trainer.

        Parameters
        ----------
        model: SAPNet,
            The model to train in place.
        config: TrainConfig,
            Optimisation schedule.
        dataset: SyntheticDataset,
            Labelled source samples and, unless the run is source-only,
            target samples whose labels are ignored.
        echo: str = "",
            Configuration text stored in every checkpoint.

        Raises
        ------
        DataFormatError:
            If a needed domain is missing or source labels are absent.
        """
        self.model = model
        self.config = config
        self.echo = echo
        source = dataset.domain(SOURCE)
        self.source_images = source.images
        self.source_labels = source.labels
        self.target_images = None
        if not config.source_only and config.pretrain_iterations < config.iterations:
            self.target_images = dataset.domain(TARGET).images
        self.optimizer = Adam(config.beta1, config.beta2, config.eps)
        self.iteration = 0
        self.rows: List[Dict[str, float]] = []
        self._window: List[Dict[str, float]] = []

    def _indices(self, domain: int, count: int, population: int) -> np.ndarray:
        rng = np.random.default_rng([self.config.seed, self.iteration, domain])
        return rng.integers(0, population, size=count)

    def step(self) -> Dict[str, float]:
        """Run one iteration and return its losses, accuracy and learning rate.

        Raises
        ------
        NumericalError:
            If the loss or a gradient is not finite.
        """
        config = self.config
        adversarial = config.is_adversarial(self.iteration)
        learning_rate = config.learning_rate_at(self.iteration)
        chosen = self._indices(SOURCE, config.source_batch, len(self.source_images))
        tape = Tape()
        source_features, source_logits = self.model.forward_task(tape, self.source_images[chosen])
        task = task_loss(source_logits, self.source_labels[chosen])
        record = {
            "task_loss": float(task.value),
            "adv_loss": np.nan,
            "disc_acc": np.nan,
            "lr": learning_rate
        }
        adversarial_loss = None
        if adversarial:
            chosen = self._indices(TARGET, config.target_batch, len(self.target_images))
            target_features, target_logits = self.model.forward_task(tape, self.target_images[chosen])
            domains = np.array([SOURCE]*config.source_batch + [TARGET]*config.target_batch)
            probabilities, _ = self.model.forward_domain(
                F.concat([source_features, target_features], axis=0),
                F.concat([source_logits, target_logits], axis=0),
                mode="train",
                lam=config.lam
            )
            adversarial_loss = adv_loss(probabilities, domains)
            record["adv_loss"] = float(adversarial_loss.value)
            record["disc_acc"] = float(np.mean((probabilities.value > 0.5) == domains))
        loss = total_objective(task, adversarial_loss, config.lam)
        if not np.isfinite(loss.value):
            raise NumericalError(
                "Non-finite loss {loss} at iteration {iteration}.".format(
                    loss=float(loss.value),
                    iteration=self.iteration
                )
            )
        self.model.zero_grad()
        tape.backward(loss)
        self.optimizer.step(
            self.model.parameters() if adversarial else self.model.task_parameters(),
            learning_rate
        )
        self.iteration += 1
        return record

    def _log(self):
        frame = pd.DataFrame(self._window)
        row = {"iter": self.iteration}
        for column in METRICS_COLUMNS[1:]:
            values = frame[column].dropna()
            row[column] = float(values.mean()) if len(values) else np.nan
        self.rows.append(row)
        self._window = []

    @property
    def metrics(self) -> pd.DataFrame:
        """Return the logged rows with columns iter, task_loss, adv_loss, disc_acc and lr."""
        return pd.DataFrame(self.rows, columns=METRICS_COLUMNS)

    def run(
        self,
        iterations: Optional[int] = None,
        verbose: bool = True,
        on_log: Optional[Callable[["Trainer"], None]] = None
    ) -> pd.DataFrame:
        """Train up to given iteration, the configured total by default.

        Parameters
        ----------
        iterations: Optional[int] = None,
            Iteration to stop at.
        verbose: bool = True,
            Whether to show the loading bar.
        on_log: Optional[Callable[[Trainer], None]] = None,
            Called after every metrics row, for instance to save checkpoints.

        Returns
        -------
        The metrics frame.
        """
        stop = self.config.iterations if iterations is None else min(iterations, self.config.iterations)
        if self.config.threads is not None:
            numba.set_num_threads(self.config.threads)
        with tqdm(
            total=stop,
            initial=self.iteration,
            desc="Training",
            disable=not verbose,
            dynamic_ncols=True,
            leave=False
        ) as bar:
            while self.iteration < stop:
                record = self.step()
                self._window.append(record)
                bar.update(1)
                bar.set_postfix({
                    key: "{:.4g}".format(value)
                    for key, value in record.items()
                    if np.isfinite(value)
                })
                if self.iteration % self.config.log_every == 0 or self.iteration == self.config.iterations:
                    self._log()
                    if on_log is not None:
                        on_log(self)
        return self.metrics

    def checkpoint(self) -> Checkpoint:
        """Return the checkpoint of the current state."""
        tensors = self.model.state_tensors()
        tensors.update(self.optimizer.state_tensors())
        return Checkpoint(
            self.iteration,
            self.echo,
            {name: np.array(tensor, copy=True) for name, tensor in tensors.items()}
        )

    def restore(self, checkpoint: Checkpoint):
        """Resume from given checkpoint; the sampling state follows from its iteration.

        Raises
        ------
        DataFormatError:
            If the checkpoint does not match the model or lies beyond the schedule.
        """
        if checkpoint.iteration > self.config.iterations:
            raise DataFormatError(
                "Checkpoint iteration {iteration} is beyond the {total} scheduled iterations.".format(
                    iteration=checkpoint.iteration,
                    total=self.config.iterations
                )
            )
        self.model.load_state_tensors(checkpoint.tensors)
        self.optimizer.load_state_tensors(checkpoint.tensors, self.model.config.numpy_dtype)
        self.iteration = checkpoint.iteration
        self._window = []


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    dataset: SyntheticDataset,
    echo: str = "",
    verbose: bool = True
) -> Tuple[Checkpoint, pd.DataFrame]:
    """Return the final checkpoint and the metrics of a full training run.

    Parameters
    ----------
    model_config: ModelConfig,
        Shape of the model, built from the training seed.
    train_config: TrainConfig,
        Optimisation schedule.
    dataset: SyntheticDataset,
        Training samples of both domains.
    echo: str = "",
        Configuration text stored in the checkpoint.
    verbose: bool = True,
        Whether to show the loading bar.
    """
    model = SAPNet(model_config, seed=train_config.seed)
    trainer = Trainer(model, train_config, dataset, echo)
    metrics = trainer.run(verbose=verbose)
    return trainer.checkpoint(), metrics


def evaluate(model: SAPNet, dataset: SyntheticDataset, batch_size: int = 8) -> Dict[str, float]:
    """Return per-class IoU, mIoU, pixel accuracy and discriminator accuracy.

    Batch normalisation runs with its running statistics. The discriminator
    accuracy is the fraction of samples whose target probability falls on
    the side of 0.5 matching their domain.

    Raises
    ------
    DataFormatError:
        If some sample has no label map.
    """
    images = dataset.images
    predictions = model.predict(images, batch_size)
    scores = segmentation_scores(confusion_matrix(predictions, dataset.labels, model.config.classes))
    probabilities = model.domain_probabilities(images, batch_size)
    scores["disc_acc"] = float(np.mean((probabilities > 0.5) == dataset.domains))
    return scores
