"""Typed spatio-temporal message passing with label-graph fusion, on a small numpy autodiff core."""

from .autodiff import Tensor, gradient
from .batch import GraphBatch
from .graph import SymbolicGraph, TypeRegistry, VisualSTGraph, build_connectivity, default_registry, validate
from .model import ModelConfig, STMPNN, TaskSpec
from .training import TrainConfig, evaluate, train

__all__ = [
    "GraphBatch", "ModelConfig", "STMPNN", "SymbolicGraph", "TaskSpec", "Tensor", "TrainConfig",
    "TypeRegistry", "VisualSTGraph", "build_connectivity", "default_registry", "evaluate", "gradient",
    "train", "validate",
]
__version__ = "0.1.0"
