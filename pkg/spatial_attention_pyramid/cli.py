"""Command line interface: data generation, training, evaluation, experiments, gradient checks and attention export.

Exit codes are 0 on success, 1 on usage or configuration errors, 2 on data
errors and 3 on numerical failures.

Usage examples
--------------

.. code:: shell

    sap gen-data --out data --seed 42 --count 200 --severity 0.08,0.6
    sap train --data data --out runs/adapted --lambda cityscapes_to_foggy
    sap train --data data --out runs/no_ca --ablation ca --levels 7
    sap eval --ckpt runs/adapted/checkpoint.sapc --data data --split target
    sap experiment --data data --out runs/experiment --seeds 0,1,2 --variants source_only,adapted,no_ca
    sap gradcheck --full
    sap export-attention --ckpt runs/adapted/checkpoint.sapc --image data/test/target_00200.ppm --out masks
"""
import argparse
import os
import sys
import warnings
from dataclasses import asdict
from typing import List, Optional

import compress_json
import pandas as pd

from .checkpoint import Checkpoint
from .config import RunConfig, ablation_overrides, level_overrides
from .exceptions import ConfigurationError, DataFormatError, NumericalError, ShapeError
from .experiment import DEFAULT_VARIANTS, VARIANTS, run_experiment, summarise
from .export import export_attention, load_image
from .gradcheck import gradcheck_suite
from .model import SAPNet
from .synthetic import CLASS_NAMES, SyntheticDataset
from .trainer import METRICS_COLUMNS, Trainer, evaluate

__all__ = ["main", "build_parser", "load_model"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
CHECKPOINT_NAME = "checkpoint.sapc"
SPLITS = {"source": 0, "target": 1}


class _Parser(argparse.ArgumentParser):
    """Parser reporting usage errors as configuration errors."""

    def error(self, message: str):
        raise ConfigurationError(message)


def _severity(text: str) -> List[float]:
    try:
        values = [float(value) for value in text.split(",")]
    except ValueError:
        values = []
    if len(values) != 2:
        raise argparse.ArgumentTypeError(
            "severity must be given as σ,α, got {text!r}".format(text=text)
        )
    return values


def _integers(text: str) -> List[int]:
    try:
        return [int(value) for value in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma separated integers, got {text!r}".format(text=text)
        )


def _names(text: str) -> List[str]:
    return [name.strip() for name in text.split(",") if name.strip()]


def build_parser() -> argparse.ArgumentParser:
    """Return the parser of every subcommand."""
    parser = _Parser(
        prog="sap",
        description="Domain adaptation with a spatial attention pyramid discriminator."
    )
    parser.add_argument("--quiet", action="store_true", help="Hide the progress bars.")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    generation = commands.add_parser("gen-data", help="Write a synthetic two-domain dataset.")
    generation.add_argument("--out", required=True, help="Output directory.")
    generation.add_argument("--seed", type=int, default=0)
    generation.add_argument("--count", type=int, default=200, help="Training samples per domain.")
    generation.add_argument("--test-count", type=int, default=100, help="Test samples per domain.")
    generation.add_argument("--severity", type=_severity, help="Target noise σ and haze α, as σ,α.")
    generation.add_argument("--config", help="Run configuration providing the scene keys.")

    training = commands.add_parser("train", help="Run the two-stage training.")
    training.add_argument("--config", help="Run configuration file of key=value lines.")
    training.add_argument("--data", required=True, help="Dataset directory written by gen-data.")
    training.add_argument("--out", required=True, help="Output directory of checkpoint and metrics.")
    training.add_argument("--lambda", dest="lam", help="λ as a number or a scenario preset name.")
    training.add_argument(
        "--ablation",
        action="append",
        default=[],
        help="Pyramid component to switch off: gm, ca, sa or maxpool. Repeatable."
    )
    training.add_argument("--levels", type=int, help="Number of pyramid levels: 3, 5, 7, 9 or 13.")
    training.add_argument("--seed", type=int)
    training.add_argument("--source-only", action="store_true", help="Train on the source domain only.")
    training.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Any configuration key. Repeatable."
    )
    training.add_argument("--resume", action="store_true", help="Continue from the checkpoint in --out.")

    evaluation = commands.add_parser("eval", help="Score a checkpoint on one domain.")
    evaluation.add_argument("--ckpt", required=True)
    evaluation.add_argument("--data", required=True)
    evaluation.add_argument("--split", choices=sorted(SPLITS), default="target")
    evaluation.add_argument("--report", help="Report path, next to the checkpoint by default.")

    checking = commands.add_parser("gradcheck", help="Run the finite-difference suite.")
    checking.add_argument("--full", action="store_true", help="Also check the whole pyramid path.")
    checking.add_argument("--seed", type=int, default=0)

    experiment = commands.add_parser("experiment", help="Train every variant with every seed and score the target domain.")
    experiment.add_argument("--config", help="Run configuration file of key=value lines.")
    experiment.add_argument("--data", required=True, help="Dataset directory written by gen-data.")
    experiment.add_argument("--out", required=True, help="Output directory of the result tables.")
    experiment.add_argument("--seeds", type=_integers, default=[0, 1, 2], help="Comma separated training seeds.")
    experiment.add_argument(
        "--variants",
        type=_names,
        default=list(DEFAULT_VARIANTS),
        help="Comma separated variants among {variants}.".format(variants=", ".join(VARIANTS))
    )
    experiment.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Any configuration key. Repeatable."
    )

    exporting = commands.add_parser("export-attention", help="Write the attention masks of one image.")
    exporting.add_argument("--ckpt", required=True)
    exporting.add_argument("--image", required=True, help="PPM image of the configured size.")
    exporting.add_argument("--out", required=True)
    return parser


def load_model(checkpoint: Checkpoint) -> SAPNet:
    """Return the model rebuilt from the configuration echoed in a checkpoint."""
    run = RunConfig.from_text(checkpoint.config, source="checkpoint configuration")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = SAPNet(run.model, seed=run.train.seed)
    model.load_state_tensors(checkpoint.tensors)
    return model


def _split_directory(directory: str, split: str) -> str:
    candidate = os.path.join(directory, split)
    return candidate if os.path.isdir(candidate) else directory


def _generate(arguments: argparse.Namespace) -> int:
    run = RunConfig.load(arguments.config) if arguments.config else RunConfig()
    if arguments.severity is not None:
        sigma, alpha = arguments.severity
        run = run.override({"scene.noise_sigma": sigma, "scene.haze_alpha": alpha})
    verbose = not arguments.quiet
    SyntheticDataset.generate(
        arguments.count,
        arguments.seed,
        run.scene,
        verbose=verbose
    ).save(os.path.join(arguments.out, "train"))
    SyntheticDataset.generate(
        arguments.test_count,
        arguments.seed + 100,
        run.scene,
        target_labels=True,
        verbose=verbose
    ).save(os.path.join(arguments.out, "test"))
    compress_json.dump(
        {
            "seed": arguments.seed,
            "count": arguments.count,
            "test_count": arguments.test_count,
            "scene": asdict(run.scene)
        },
        os.path.join(arguments.out, "metadata.json")
    )
    return EXIT_OK


def _settings(settings: List[str]) -> dict:
    overrides = dict(setting.split("=", 1) for setting in settings if "=" in setting)
    if len(overrides) != len(settings):
        raise ConfigurationError("Overrides must be given as KEY=VALUE.")
    return overrides


def _train(arguments: argparse.Namespace) -> int:
    run = RunConfig.load(arguments.config) if arguments.config else RunConfig()
    overrides = _settings(arguments.set)
    overrides.update(ablation_overrides(arguments.ablation))
    overrides.update(level_overrides(arguments.levels))
    if arguments.lam is not None:
        overrides["train.lam"] = arguments.lam
    if arguments.seed is not None:
        overrides["train.seed"] = arguments.seed
    if arguments.source_only:
        overrides["train.source_only"] = True
    run = run.override(overrides)
    echo = run.to_text()

    dataset = SyntheticDataset.load(_split_directory(arguments.data, "train"))
    model = SAPNet(run.model, seed=run.train.seed)
    trainer = Trainer(model, run.train, dataset, echo)
    os.makedirs(arguments.out, exist_ok=True)
    checkpoint_path = os.path.join(arguments.out, CHECKPOINT_NAME)
    metrics_path = os.path.join(arguments.out, "metrics.csv")
    if arguments.resume and os.path.exists(checkpoint_path):
        checkpoint = Checkpoint.load(checkpoint_path)
        if checkpoint.config != echo:
            raise ConfigurationError(
                "The checkpoint in {out} was trained with another configuration.".format(
                    out=arguments.out
                )
            )
        trainer.restore(checkpoint)
        if os.path.exists(metrics_path):
            previous = pd.read_csv(metrics_path)
            trainer.rows = previous[previous.iter <= checkpoint.iteration].to_dict("records")
    with open(os.path.join(arguments.out, "config.txt"), "w") as f:
        f.write(echo)
    compress_json.dump(run.to_dict(), os.path.join(arguments.out, "config.json"))

    def store(current: Trainer):
        current.checkpoint().save(checkpoint_path)
        current.metrics.to_csv(metrics_path, index=False, columns=METRICS_COLUMNS)

    trainer.run(verbose=not arguments.quiet, on_log=store)
    store(trainer)
    return EXIT_OK


def _experiment(arguments: argparse.Namespace) -> int:
    run = RunConfig.load(arguments.config) if arguments.config else RunConfig()
    run = run.override(_settings(arguments.set))
    train_set = SyntheticDataset.load(_split_directory(arguments.data, "train"))
    test_set = SyntheticDataset.load(_split_directory(arguments.data, "test"))
    os.makedirs(arguments.out, exist_ok=True)
    results_path = os.path.join(arguments.out, "results.csv")
    with open(os.path.join(arguments.out, "config.txt"), "w") as f:
        f.write(run.to_text())

    def store(results: pd.DataFrame):
        results.to_csv(results_path, index=False)

    results = run_experiment(
        run,
        train_set,
        test_set,
        seeds=arguments.seeds,
        variants=arguments.variants,
        verbose=not arguments.quiet,
        on_result=store
    )
    store(results)
    summary = summarise(results)
    summary.to_csv(os.path.join(arguments.out, "summary.csv"))
    print(summary.to_string(float_format="{:.4f}".format))
    return EXIT_OK


def _evaluate(arguments: argparse.Namespace) -> int:
    checkpoint = Checkpoint.load(arguments.ckpt)
    model = load_model(checkpoint)
    dataset = SyntheticDataset.load(_split_directory(arguments.data, "test"))
    scores = evaluate(model, dataset.domain(SPLITS[arguments.split]))
    names = {
        "iou_{}".format(label): "IoU {}".format(name)
        for label, name in enumerate(CLASS_NAMES)
    }
    names.update(miou="mIoU", pixel_accuracy="pixel accuracy", disc_acc="discriminator accuracy")
    table = pd.DataFrame(
        [(names.get(key, key), value) for key, value in scores.items()],
        columns=["metric", arguments.split]
    )
    print(table.to_string(index=False, float_format="{:.4f}".format))
    report = arguments.report or os.path.join(
        os.path.dirname(os.path.abspath(arguments.ckpt)),
        "report_{split}.txt".format(split=arguments.split)
    )
    with open(report, "w") as f:
        f.write("split={split}\n".format(split=arguments.split))
        f.write("iteration={iteration}\n".format(iteration=checkpoint.iteration))
        for key, value in scores.items():
            f.write("{key}={value!r}\n".format(key=key, value=value))
    compress_json.dump(
        dict(split=arguments.split, iteration=checkpoint.iteration, **scores),
        os.path.splitext(report)[0] + ".json"
    )
    return EXIT_OK


def _gradcheck(arguments: argparse.Namespace) -> int:
    report = gradcheck_suite(full=arguments.full, seed=arguments.seed, verbose=not arguments.quiet)
    print(report.to_string(index=False))
    return EXIT_OK if report.passed.all() else EXIT_NUMERIC


def _export(arguments: argparse.Namespace) -> int:
    model = load_model(Checkpoint.load(arguments.ckpt))
    paths = export_attention(model, load_image(arguments.image, model.config.image_size), arguments.out)
    for path in paths:
        print(path)
    return EXIT_OK


COMMANDS = {
    "gen-data": _generate,
    "train": _train,
    "eval": _evaluate,
    "gradcheck": _gradcheck,
    "experiment": _experiment,
    "export-attention": _export
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line and return its exit code."""
    try:
        arguments = build_parser().parse_args(argv)
        return COMMANDS[arguments.command](arguments)
    except ConfigurationError as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, ShapeError, OSError) as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_NUMERIC
