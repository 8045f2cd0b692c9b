"""Executable computation graphs for the beam-predictor runtime.

A graph is a topologically ordered list of :class:`LayerSpec` nodes over
two named inputs, ``conv_in`` (4, N, N) and ``vec_in`` (2M,), producing the
three output heads (raw tx vector, raw rx vector, normalized power).
All shape checking happens when the graph is constructed, never during
:func:`forward`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers


class WeightFileError(Exception):
    """Base class for weight-file and graph validation failures."""


class BlobIntegrityError(WeightFileError):
    """Tensor blob is truncated, oversized, or fails its checksum."""


class TensorRefError(WeightFileError):
    """A node references a tensor that the manifest does not declare."""


class UnsupportedLayerError(WeightFileError):
    """A node uses a layer kind this runtime cannot execute."""


class GraphShapeError(WeightFileError):
    """Declared tensor or node shapes are mutually inconsistent."""


LAYER_KINDS = frozenset(
    {
        "conv2d",
        "depthwise_conv2d",
        "linear",
        "relu",
        "maxpool2x2",
        "global_avgpool",
        "concat",
        "residual_add",
        "flatten",
        "reshape_broadcast_add",
    }
)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...]
    params: dict
    weights: dict  # role -> tensor name

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "inputs": list(self.inputs),
            "params": self.params,
            "weights": self.weights,
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "LayerSpec":
        return LayerSpec(
            name=doc["name"],
            kind=doc["kind"],
            inputs=tuple(doc["inputs"]),
            params=dict(doc.get("params", {})),
            weights=dict(doc.get("weights", {})),
        )


@dataclass(frozen=True)
class ComputationGraph:
    n_antennas: int
    branching: int
    nodes: tuple[LayerSpec, ...]
    tensors: dict  # tensor name -> float64 ndarray (read-only)
    inputs: dict  # input name -> shape tuple
    outputs: tuple[str, str, str]
    shapes: dict  # node/input name -> inferred output shape

    @property
    def conv_input_shape(self) -> tuple[int, int, int]:
        return self.inputs["conv_in"]

    @property
    def vec_input_shape(self) -> tuple[int]:
        return self.inputs["vec_in"]


def _expect_weight(graph_tensors, node: LayerSpec, role: str, shape: tuple) -> np.ndarray:
    name = node.weights.get(role)
    if name is None:
        raise TensorRefError(f"node {node.name!r} is missing its {role!r} tensor reference")
    if name not in graph_tensors:
        raise TensorRefError(f"node {node.name!r} references undeclared tensor {name!r}")
    t = graph_tensors[name]
    if t.shape != shape:
        raise GraphShapeError(
            f"node {node.name!r}: tensor {name!r} has shape {t.shape}, expected {shape}"
        )
    return t


def _infer_node_shape(node: LayerSpec, in_shapes: list[tuple], tensors: dict) -> tuple:
    kind = node.kind
    if kind in ("conv2d", "depthwise_conv2d"):
        (shape,) = in_shapes
        if len(shape) != 3:
            raise GraphShapeError(f"node {node.name!r} expects a (C,H,W) input, got {shape}")
        c, h, w = shape
        p = node.params
        kernel = tuple(p["kernel"])
        stride = tuple(p["stride"])
        padding = tuple(p["padding"])
        out_c = int(p["out_channels"])
        in_c = int(p["in_channels"])
        if c != in_c:
            raise GraphShapeError(
                f"node {node.name!r}: input has {c} channels, declared in_channels={in_c}"
            )
        if kind == "conv2d":
            _expect_weight(tensors, node, "weight", (out_c, in_c) + kernel)
        else:
            if out_c != in_c:
                raise GraphShapeError(
                    f"node {node.name!r}: depthwise conv needs out_channels == in_channels"
                )
            _expect_weight(tensors, node, "weight", (out_c, 1) + kernel)
        _expect_weight(tensors, node, "bias", (out_c,))
        ho, wo = layers.conv_output_hw(h, w, kernel, stride, padding)
        if ho < 1 or wo < 1:
            raise GraphShapeError(f"node {node.name!r} produces an empty map from {shape}")
        return (out_c, ho, wo)
    if kind == "linear":
        (shape,) = in_shapes
        if len(shape) != 1:
            raise GraphShapeError(f"node {node.name!r} expects a vector input, got {shape}")
        out_f = int(node.params["out_features"])
        in_f = int(node.params["in_features"])
        if shape[0] != in_f:
            raise GraphShapeError(
                f"node {node.name!r}: input length {shape[0]}, declared in_features={in_f}"
            )
        _expect_weight(tensors, node, "weight", (out_f, in_f))
        _expect_weight(tensors, node, "bias", (out_f,))
        return (out_f,)
    if kind == "relu":
        (shape,) = in_shapes
        return shape
    if kind == "maxpool2x2":
        (shape,) = in_shapes
        c, h, w = shape
        if h < 2 or w < 2:
            raise GraphShapeError(f"node {node.name!r}: map {shape} too small to pool")
        return (c, h // 2, w // 2)
    if kind == "global_avgpool":
        (shape,) = in_shapes
        if len(shape) != 3:
            raise GraphShapeError(f"node {node.name!r} expects a (C,H,W) input, got {shape}")
        return (shape[0],)
    if kind == "concat":
        if not in_shapes:
            raise GraphShapeError(f"node {node.name!r} needs at least one input")
        trailing = {s[1:] for s in in_shapes}
        if len(trailing) != 1:
            raise GraphShapeError(f"node {node.name!r}: incompatible concat shapes {in_shapes}")
        return (sum(s[0] for s in in_shapes),) + in_shapes[0][1:]
    if kind == "residual_add":
        a, b = in_shapes
        if a != b:
            raise GraphShapeError(f"node {node.name!r}: add of {a} and {b}")
        return a
    if kind == "flatten":
        (shape,) = in_shapes
        return (int(np.prod(shape)),)
    if kind == "reshape_broadcast_add":
        map_shape, vec_shape = in_shapes
        if len(map_shape) != 3 or vec_shape != (map_shape[0],):
            raise GraphShapeError(
                f"node {node.name!r}: cannot broadcast {vec_shape} onto {map_shape}"
            )
        return map_shape
    raise UnsupportedLayerError(f"node {node.name!r} has unsupported kind {kind!r}")


def build_graph(
    n_antennas: int,
    branching: int,
    nodes: list[LayerSpec],
    tensors: dict,
    outputs: tuple[str, str, str],
) -> ComputationGraph:
    """Validate the node list and tensors, returning an executable graph.

    Nodes must be topologically ordered (each input defined earlier); all
    referenced tensors must exist with the shapes the node kinds imply.
    """
    inputs = {
        "conv_in": (4, n_antennas, n_antennas),
        "vec_in": (2 * branching,),
    }
    frozen = {}
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        arr.setflags(write=False)
        frozen[name] = arr

    shapes: dict = dict(inputs)
    seen = set(inputs)
    for node in nodes:
        if node.kind not in LAYER_KINDS:
            raise UnsupportedLayerError(
                f"node {node.name!r} has unsupported kind {node.kind!r}"
            )
        if node.name in seen:
            raise GraphShapeError(f"duplicate node name {node.name!r}")
        missing = [i for i in node.inputs if i not in seen]
        if missing:
            raise GraphShapeError(
                f"node {node.name!r} consumes undefined inputs {missing} "
                "(graph must be topologically ordered and acyclic)"
            )
        in_shapes = [shapes[i] for i in node.inputs]
        shapes[node.name] = _infer_node_shape(node, in_shapes, frozen)
        seen.add(node.name)

    for out in outputs:
        if out not in seen:
            raise GraphShapeError(f"declared output {out!r} is not produced by any node")
    return ComputationGraph(
        n_antennas=n_antennas,
        branching=branching,
        nodes=tuple(nodes),
        tensors=frozen,
        inputs=inputs,
        outputs=tuple(outputs),
        shapes=shapes,
    )


def _apply(node: LayerSpec, args: list[np.ndarray], tensors: dict) -> np.ndarray:
    kind = node.kind
    if kind == "conv2d":
        p = node.params
        return layers.conv2d(
            args[0],
            tensors[node.weights["weight"]],
            tensors[node.weights["bias"]],
            tuple(p["stride"]),
            tuple(p["padding"]),
        )
    if kind == "depthwise_conv2d":
        p = node.params
        return layers.depthwise_conv2d(
            args[0],
            tensors[node.weights["weight"]],
            tensors[node.weights["bias"]],
            tuple(p["stride"]),
            tuple(p["padding"]),
        )
    if kind == "linear":
        return layers.linear(
            args[0], tensors[node.weights["weight"]], tensors[node.weights["bias"]]
        )
    if kind == "relu":
        return layers.relu(args[0])
    if kind == "maxpool2x2":
        return layers.maxpool2x2(args[0])
    if kind == "global_avgpool":
        return layers.global_avgpool(args[0])
    if kind == "concat":
        return layers.concat(args)
    if kind == "residual_add":
        return layers.residual_add(args[0], args[1])
    if kind == "flatten":
        return layers.flatten(args[0])
    if kind == "reshape_broadcast_add":
        return layers.reshape_broadcast_add(args[0], args[1])
    raise UnsupportedLayerError(f"node {node.name!r} has unsupported kind {kind!r}")


def forward(
    graph: ComputationGraph,
    conv_input: np.ndarray,
    vec_input: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Execute the graph; returns (raw_tx_vec, raw_rx_vec, power_norm).

    Deterministic: identical graph and inputs give bit-identical outputs.
    """
    conv_input = np.asarray(conv_input, dtype=np.float64)
    vec_input = np.asarray(vec_input, dtype=np.float64)
    if conv_input.shape != graph.conv_input_shape:
        raise GraphShapeError(
            f"conv input shape {conv_input.shape} != expected {graph.conv_input_shape}"
        )
    if vec_input.shape != graph.vec_input_shape:
        raise GraphShapeError(
            f"vec input shape {vec_input.shape} != expected {graph.vec_input_shape}"
        )
    values = {"conv_in": conv_input, "vec_in": vec_input}
    for node in graph.nodes:
        values[node.name] = _apply(node, [values[i] for i in node.inputs], graph.tensors)
    tx_name, rx_name, pow_name = graph.outputs
    return values[tx_name], values[rx_name], float(values[pow_name][0])
