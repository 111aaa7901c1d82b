"""Repeated training runs comparing adaptation with the source-only baseline and the pyramid ablations.

Usage examples
--------------

.. code:: python

    from spatial_attention_pyramid import RunConfig, SyntheticDataset
    from spatial_attention_pyramid.experiment import run_experiment, summarise

    results = run_experiment(
        RunConfig(),
        SyntheticDataset.load("data/train"),
        SyntheticDataset.load("data/test"),
        seeds=(0, 1, 2),
        variants=("source_only", "adapted", "no_ca")
    )
    print(summarise(results))
"""
import time
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm.auto import tqdm
from userinput.utils import closest

from .config import ABLATIONS, RunConfig
from .exceptions import ConfigurationError
from .model import SAPNet
from .synthetic import SyntheticDataset
from .trainer import Trainer, evaluate

__all__ = [
    "VARIANTS",
    "DEFAULT_VARIANTS",
    "BASELINE",
    "RESULT_COLUMNS",
    "variant_overrides",
    "run_experiment",
    "summarise"
]

BASELINE = "source_only"
VARIANTS = (
    BASELINE,
    "adapted",
    "no_gm",
    "no_ca",
    "no_sa",
    "maxpool",
    "levels_1",
    "levels_3"
)
DEFAULT_VARIANTS = (BASELINE, "adapted")
RESULT_COLUMNS = ["variant", "seed", "miou", "pixel_accuracy", "disc_acc", "seconds"]


def _level_subset(sizes: Tuple[int, ...], levels: int) -> Tuple[int, ...]:
    """Return given number of pooling sizes, evenly spread and always keeping the largest."""
    if levels >= len(sizes):
        return sizes
    if levels == 1:
        return sizes[-1:]
    picks = np.linspace(0, len(sizes) - 1, levels).round().astype(int)
    return tuple(sizes[index] for index in picks)


def variant_overrides(variant: str, run: RunConfig) -> Dict[str, Any]:
    """Return the configuration overrides of the named variant.

    Level variants keep a subset of the configured pooling sizes, so they
    fit any feature map the full pyramid fits.

    Raises
    ------
    ConfigurationError:
        If the variant is unknown.
    """
    if variant not in VARIANTS:
        raise ConfigurationError(
            "Unknown variant {variant}. Did you mean {closest}?".format(
                variant=variant,
                closest=closest(variant, list(VARIANTS))
            )
        )
    if variant == BASELINE:
        return {"train.source_only": True}
    if variant.startswith("no_"):
        return dict(ABLATIONS[variant[3:]])
    if variant == "maxpool":
        return dict(ABLATIONS["maxpool"])
    if variant.startswith("levels_"):
        return {"pyramid.sizes": _level_subset(run.pyramid.sizes, int(variant.split("_")[1]))}
    return {}


def run_experiment(
    run: RunConfig,
    train_set: SyntheticDataset,
    test_set: SyntheticDataset,
    seeds: Sequence[int] = (0, 1, 2),
    variants: Sequence[str] = DEFAULT_VARIANTS,
    verbose: bool = True,
    on_result: Optional[Callable[[pd.DataFrame], None]] = None
) -> pd.DataFrame:
    """Return the target-domain scores of every variant trained with every seed.

    Parameters
    ----------
    run: RunConfig,
        Shared configuration; each variant applies its overrides on top,
        and each run replaces the training seed.
    train_set: SyntheticDataset,
        Training samples of both domains.
    test_set: SyntheticDataset,
        Labelled test samples; only the target domain is scored.
    seeds: Sequence[int] = (0, 1, 2),
        Training seeds.
    variants: Sequence[str] = ("source_only", "adapted"),
        Names from VARIANTS.
    verbose: bool = True,
        Whether to show the loading bar.
    on_result: Optional[Callable[[pd.DataFrame], None]] = None,
        Called with the results gathered so far after every run.

    Raises
    ------
    ConfigurationError:
        If a variant is unknown or no seed is given.

    Returns
    -------
    DataFrame with one row per variant and seed, holding variant, seed,
    miou, pixel_accuracy, disc_acc, seconds and the per-class IoU.
    """
    if not seeds:
        raise ConfigurationError("The experiment needs at least one seed.")
    configurations = {
        variant: run.override(variant_overrides(variant, run))
        for variant in variants
    }
    target = test_set.domain(1)
    rows = []
    jobs = [(variant, seed) for seed in seeds for variant in variants]
    for variant, seed in tqdm(
        jobs,
        desc="Running experiment",
        disable=not verbose,
        dynamic_ncols=True,
        leave=False
    ):
        current = configurations[variant].override({"train.seed": seed})
        start = time.perf_counter()
        model = SAPNet(current.model, seed=seed)
        Trainer(model, current.train, train_set, current.to_text()).run(verbose=False)
        scores = evaluate(model, target)
        rows.append(dict(
            variant=variant,
            seed=seed,
            seconds=time.perf_counter() - start,
            **scores
        ))
        if on_result is not None:
            on_result(_frame(rows))
    return _frame(rows)


def _frame(rows) -> pd.DataFrame:
    frame = pd.DataFrame(rows)
    extra = sorted(column for column in frame.columns if column not in RESULT_COLUMNS)
    return frame[RESULT_COLUMNS + extra]


def summarise(results: pd.DataFrame) -> pd.DataFrame:
    """Return the per-variant mean and deviation of the target mIoU and the gain over the baseline.

    The gain and the win count pair every run with the source-only run of
    the same seed; both are NaN when the baseline was not run.

    Returns
    -------
    DataFrame indexed by variant with columns runs, miou_mean, miou_std,
    gain_mean, wins and seconds.
    """
    baseline = results[results.variant == BASELINE].set_index("seed").miou
    rows = []
    for variant, group in results.groupby("variant", sort=False):
        paired = group.set_index("seed").miou
        gains = (paired - baseline.reindex(paired.index)).dropna()
        rows.append(dict(
            variant=variant,
            runs=len(group),
            miou_mean=group.miou.mean(),
            miou_std=group.miou.std(ddof=0),
            gain_mean=gains.mean() if len(gains) else np.nan,
            wins=int((gains > 0).sum()) if len(gains) else np.nan,
            seconds=group.seconds.sum()
        ))
    return pd.DataFrame(rows).set_index("variant")
