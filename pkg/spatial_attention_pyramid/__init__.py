from .autodiff import Parameter, Tape, Variable, grad_reverse, finite_difference_check
from .pyramid import PyramidConfig, SpatialAttentionPyramid, AttentionState
from .task_net import ModelConfig
from .model import SAPNet
from .losses import task_loss, adv_loss, total_objective
from .synthetic import SceneSpec, SyntheticDataset, generate, save_dataset, load_dataset
from .checkpoint import Checkpoint
from .trainer import LAMBDA_PRESETS, TrainConfig, Adam, adam_step, Trainer, train, evaluate
from .config import RunConfig
from .export import export_attention
from .experiment import run_experiment, summarise
from .gradcheck import gradcheck_suite
from .exceptions import ShapeError, ConfigurationError, DataFormatError, NumericalError

__all__ = [
    "Parameter",
    "Tape",
    "Variable",
    "grad_reverse",
    "finite_difference_check",
    "PyramidConfig",
    "SpatialAttentionPyramid",
    "AttentionState",
    "ModelConfig",
    "SAPNet",
    "task_loss",
    "adv_loss",
    "total_objective",
    "SceneSpec",
    "SyntheticDataset",
    "generate",
    "save_dataset",
    "load_dataset",
    "Checkpoint",
    "LAMBDA_PRESETS",
    "TrainConfig",
    "Adam",
    "adam_step",
    "Trainer",
    "train",
    "evaluate",
    "RunConfig",
    "export_attention",
    "run_experiment",
    "summarise",
    "gradcheck_suite",
    "ShapeError",
    "ConfigurationError",
    "DataFormatError",
    "NumericalError"
]
