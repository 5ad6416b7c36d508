"""Event detection on dynamic graphs from graph-level (macro) dynamics."""

from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    DygedError,
    EmptyInputError,
    ParseError,
    UndefinedMetricError,
)
from .graph import DynamicGraph, Snapshot, SnapshotWindow, read_graph, windows, write_graph
from .model import VARIANTS, ModelConfig, ModelParams, WindowDataset, forward, init_params
from .trainer import TrainConfig, make_folds, run_experiment, train
from .evaluator import EvalReport, auc, evaluate, export, minmax_scale
from .synthgen import GenSpec, expected_separability, generate

__version__ = "0.1.0"
