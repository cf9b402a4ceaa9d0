"""End-to-end trainable pairwise CRFs for multi-attribute prediction.

Potential tables are softplus functions of the input features, marginals come
from a fixed number of unrolled flooding sum-product rounds, and gradients
flow back through every round to the potential parameters.
"""

from .graph import FactorGraph, build_graph, build_graph_min, build_graph_rand, build_graph_top, graph_stats
from .inference import InferenceConfig, TableSet, backward_sum_product, run_sum_product
from .trainer import Model, TrainSchedule, evaluate, init_model, predict, train

__version__ = "0.1.0"

__all__ = [
    "FactorGraph", "build_graph", "build_graph_min", "build_graph_rand", "build_graph_top", "graph_stats",
    "InferenceConfig", "TableSet", "backward_sum_product", "run_sum_product",
    "Model", "TrainSchedule", "evaluate", "init_model", "predict", "train",
]
