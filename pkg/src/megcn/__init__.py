"""Semi-supervised text classification with a multi-stream GCN over a graph
whose edges carry one weight per embedding dimension."""

from .config import ExperimentConfig, load_config
from .corpus import Corpus, build_corpus, generate_synthetic, load_dataset, make_splits
from .embed import train_doc2vec, train_word2vec
from .graph import MultiEdgeGraph, build_graph
from .model import TrainConfig, forward, param_count, predict, train
from .pipeline import Run, RunReport, run_pipeline, sweep

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "ExperimentConfig",
    "MultiEdgeGraph",
    "Run",
    "RunReport",
    "TrainConfig",
    "build_corpus",
    "build_graph",
    "forward",
    "generate_synthetic",
    "load_config",
    "load_dataset",
    "make_splits",
    "param_count",
    "predict",
    "run_pipeline",
    "sweep",
    "train",
    "train_doc2vec",
    "train_word2vec",
]
