"""beamtrainer: trains the beam predictor on beamforge datasets and
exports runtime-loadable weight files."""

from .data import LoadedDataset, load_dataset
from .export import export_weights
from .model import BeamPredictor, build_model
from .training import TrainConfig, TrainHistory, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BeamPredictor",
    "LoadedDataset",
    "TrainConfig",
    "TrainHistory",
    "build_model",
    "evaluate",
    "export_weights",
    "load_dataset",
    "train",
]
