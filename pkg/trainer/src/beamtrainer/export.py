"""Fold batch norm, strip dropout, and write the THZNN1 weight container.

The emitted manifest mirrors the forward pass of :class:`BeamPredictor`
node for node, using the runtime's layer vocabulary. Tensors are stored
as little-endian float32 at sorted-name offsets; the manifest records the
blob's SHA-256.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .model import BeamPredictor

MAGIC = b"THZNN1\x00\x00"
FORMAT_VERSION = 1


def fold_conv_bn(conv: torch.nn.Conv2d, bn: torch.nn.BatchNorm2d):
    """Return (weight, bias) of the conv with the BN affine absorbed."""
    scale = bn.weight / torch.sqrt(bn.running_var + bn.eps)
    weight = conv.weight * scale[:, None, None, None]
    bias = (conv.bias - bn.running_mean) * scale + bn.bias
    return weight.detach().numpy(), bias.detach().numpy()


def fold_linear_bn(fc: torch.nn.Linear, bn: torch.nn.BatchNorm1d):
    scale = bn.weight / torch.sqrt(bn.running_var + bn.eps)
    weight = fc.weight * scale[:, None]
    bias = (fc.bias - bn.running_mean) * scale + bn.bias
    return weight.detach().numpy(), bias.detach().numpy()


class _GraphWriter:
    def __init__(self):
        self.nodes = []
        self.tensors = {}

    def conv(self, name, src, convbn, depthwise=False):
        conv = convbn.conv
        weight, bias = fold_conv_bn(conv, convbn.bn)
        kh, kw = conv.kernel_size
        self.nodes.append(
            {
                "name": name,
                "kind": "depthwise_conv2d" if depthwise else "conv2d",
                "inputs": [src],
                "params": {
                    "in_channels": conv.in_channels,
                    "out_channels": conv.out_channels,
                    "kernel": [kh, kw],
                    "stride": list(conv.stride),
                    "padding": list(conv.padding),
                },
                "weights": {"weight": f"{name}.weight", "bias": f"{name}.bias"},
            }
        )
        self.tensors[f"{name}.weight"] = weight
        self.tensors[f"{name}.bias"] = bias
        return name

    def linear(self, name, src, fc, bn=None):
        if bn is None:
            weight = fc.weight.detach().numpy()
            bias = fc.bias.detach().numpy()
        else:
            weight, bias = fold_linear_bn(fc, bn)
        self.nodes.append(
            {
                "name": name,
                "kind": "linear",
                "inputs": [src],
                "params": {"in_features": fc.in_features, "out_features": fc.out_features},
                "weights": {"weight": f"{name}.weight", "bias": f"{name}.bias"},
            }
        )
        self.tensors[f"{name}.weight"] = weight
        self.tensors[f"{name}.bias"] = bias
        return name

    def op(self, name, kind, *srcs):
        self.nodes.append(
            {"name": name, "kind": kind, "inputs": list(srcs), "params": {}, "weights": {}}
        )
        return name


def _emit_block(w: _GraphWriter, name: str, src: str, block, h: int):
    branches = []
    for tag in ("k1x1", "k1x3", "k3x1", "k3x3"):
        conv = w.conv(f"{name}.{tag}", src, getattr(block, tag))
        branches.append(w.op(f"{name}.{tag}.relu", "relu", conv))
    cat = w.op(f"{name}.cat", "concat", *branches)
    res = w.conv(f"{name}.res", cat, block.res)
    added = w.op(f"{name}.add", "residual_add", res, cat)
    out = w.op(f"{name}.relu", "relu", added)
    if h >= 2:
        out = w.op(f"{name}.pool", "maxpool2x2", out)
        h //= 2
    return out, h


def _emit_fusion(w: _GraphWriter, name: str, conv_src: str, vec_src: str, fusion, second: bool, h: int):
    if second:
        t = w.conv(f"{name}.conv", conv_src, fusion.fuse[0])
        t = w.op(f"{name}.conv.relu", "relu", t)
        t = w.conv(f"{name}.dw", t, fusion.fuse[2], depthwise=True)
        h = (h - 1) // 2 + 1
    else:
        t = w.conv(f"{name}.conv", conv_src, fusion.fuse)
    v2c = w.linear(f"{name}.v2c", vec_src, fusion.v2c)
    badd = w.op(f"{name}.badd", "reshape_broadcast_add", t, v2c)
    conv_out = w.op(f"{name}.crelu", "relu", badd)
    gap = w.op(f"{name}.gap", "global_avgpool", conv_out)
    c2v = w.linear(f"{name}.c2v", gap, fusion.c2v)
    vadd = w.op(f"{name}.vadd", "residual_add", vec_src, c2v)
    vec_out = w.op(f"{name}.vrelu", "relu", vadd)
    return conv_out, vec_out, h


def export_weights(model: BeamPredictor, path) -> None:
    """Serialize the trained model in its folded inference form."""
    model = model.eval()
    w = _GraphWriter()
    n = model.n_antennas
    h = n

    v = w.linear("vec.l1", "vec_in", model.vec1.fc, model.vec1.bn)
    v = w.op("vec.l1.relu", "relu", v)
    v = w.linear("vec.l2", v, model.vec2.fc, model.vec2.bn)
    v = w.op("vec.l2.relu", "relu", v)

    c, h = _emit_block(w, "b1", "conv_in", model.block1, h)
    c, v, h = _emit_fusion(w, "fus1", c, v, model.fusion1, second=False, h=h)
    v = w.linear("vec.l3", v, model.vec3.fc, model.vec3.bn)
    v = w.op("vec.l3.relu", "relu", v)

    c, h = _emit_block(w, "b2", c, model.block2, h)
    c, v, h = _emit_fusion(w, "fus2", c, v, model.fusion2, second=True, h=h)
    v = w.linear("vec.l4", v, model.vec4.fc, model.vec4.bn)
    v = w.op("vec.l4.relu", "relu", v)

    c, h = _emit_block(w, "b3", c, model.block3, h)
    gap = w.op("tail.gap", "global_avgpool", c)
    flat = w.op("tail.flat", "flatten", gap)
    feat = w.op("tail.cat", "concat", flat, v)
    w.linear("tx_head", feat, model.tx_head)
    w.linear("rx_head", feat, model.rx_head)
    w.linear("pow_head", feat, model.pow_head)

    _write_container(path, model.n_antennas, model.branching, w.nodes, w.tensors)


def _write_container(path, n_antennas: int, branching: int, nodes: list, tensors: dict) -> None:
    offset = 0
    table = {}
    chunks = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = arr.tobytes()
        table[name] = {"offset": offset, "shape": list(arr.shape)}
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {
        "format": "thznn",
        "version": FORMAT_VERSION,
        "n_antennas": int(n_antennas),
        "branching": int(branching),
        "inputs": {"conv_in": [4, n_antennas, n_antennas], "vec_in": [2 * branching]},
        "outputs": ["tx_head", "rx_head", "pow_head"],
        "nodes": nodes,
        "tensors": table,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(blob)
