"""Tree-regularized subgraph and hybrid graph convolutional networks for
credit default classification, in plain numpy."""

from .data import Dataset, SyntheticSpec, gen_synthetic, load_csv, normalize, rebalance, write_csv
from .errors import (ConsistencyError, CreditGCNError, DataError, NumericError, SchemaError,
                     ShapeError, TrainingError, ValidationError)
from .evaluation import (ExperimentResult, MetricsReport, baseline_mlp, compute_metrics, kfold_split,
                         oversmoothing_probe, run_experiment, sweep_dm)
from .graph import Graph, build_knn_graph, cosine_similarity, neighbor_ranking
from .model import ModelConfig, TrainedModel, forward, predict, train
from .numeric import make_rng
from .trees import TreeBatch, TreeSubgraph, extract_all, extract_tree, tree_features

__version__ = "0.1.0"

__all__ = [
    "ConsistencyError", "CreditGCNError", "DataError", "Dataset", "ExperimentResult", "Graph",
    "MetricsReport", "ModelConfig", "NumericError", "SchemaError", "ShapeError", "SyntheticSpec",
    "TrainedModel", "TrainingError", "TreeBatch", "TreeSubgraph", "ValidationError", "baseline_mlp",
    "build_knn_graph", "compute_metrics", "cosine_similarity", "extract_all", "extract_tree", "forward",
    "gen_synthetic", "kfold_split", "load_csv", "make_rng", "neighbor_ranking", "normalize",
    "oversmoothing_probe", "predict", "rebalance", "run_experiment", "sweep_dm", "train", "tree_features",
    "write_csv",
]
