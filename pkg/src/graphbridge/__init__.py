"""Graph domain adaptation by learned cross-domain edges on a combined source+target graph."""

from .config import ExperimentConfig, expand_sweep, load_config, parse_config
from .csbm import CsbmSpec, DomainSpec, generate_shift_pair, shift_pair_spec, shift_reduction_study
from .errors import (
    ConfigError,
    DataFormatError,
    DimensionError,
    GraphBridgeError,
    NumericError,
    SamplingError,
    TrainingError,
    ValidationError,
)
from .graphstore import CombinedGraph, Graph, apply_insertions, build_graph, combine, symmetric_normalize
from .numkernel import AdamState, SparseMatrix, Tape, Tensor, adam_step, finite_diff_check
from .trainer import FitResult, TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CombinedGraph", "ConfigError", "CsbmSpec", "DataFormatError", "DimensionError",
    "DomainSpec", "ExperimentConfig", "FitResult", "Graph", "GraphBridgeError", "NumericError",
    "SamplingError", "SparseMatrix", "Tape", "Tensor", "TrainConfig", "TrainingError", "ValidationError",
    "adam_step", "apply_insertions", "build_graph", "combine", "expand_sweep", "finite_diff_check", "fit",
    "generate_shift_pair", "load_config", "parse_config", "shift_pair_spec", "shift_reduction_study",
    "symmetric_normalize",
]
