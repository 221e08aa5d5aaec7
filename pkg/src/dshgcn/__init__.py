"""Dual-stream hypergraph convolutional network for per-student engagement classification."""

from .data import Dataset, SyntheticConfig, generate_synthetic, load_dataset, write_dataset
from .model import ABLATIONS, ModelConfig
from .training import TrainConfig, evaluate, run, train

__version__ = "0.1.0"
