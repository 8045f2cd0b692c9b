"""Load serialized beam-predictor networks and run the forward pass."""

from .architecture import build_predictor_nodes, init_tensors, make_fixture_file
from .graph import (
    BlobIntegrityError,
    ComputationGraph,
    GraphShapeError,
    LayerSpec,
    TensorRefError,
    UnsupportedLayerError,
    WeightFileError,
    build_graph,
    forward,
)
from .predict import Prediction, conv_input_from_codebooks, predict, snap_to_codebook
from .weightfile import load_weights, save_weights

__all__ = [
    "BlobIntegrityError",
    "ComputationGraph",
    "GraphShapeError",
    "LayerSpec",
    "Prediction",
    "TensorRefError",
    "UnsupportedLayerError",
    "WeightFileError",
    "build_graph",
    "build_predictor_nodes",
    "conv_input_from_codebooks",
    "forward",
    "init_tensors",
    "load_weights",
    "make_fixture_file",
    "predict",
    "save_weights",
    "snap_to_codebook",
]
