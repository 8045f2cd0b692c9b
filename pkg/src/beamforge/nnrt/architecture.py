"""Canonical beam-predictor topology and seeded fixture weights.

Two branches joined by two fusion exchanges:

  * conv branch: three multi-kernel blocks (1x1 / 1x3 / 3x1 / 3x3 branches
    concatenated, a 3x3 residual unit, then 2x2 max pooling) with channel
    widths 32 -> 64 -> 128; each branch gets a quarter of the block width.
  * vector branch: four linear+ReLU layers of width 64 over the 2M
    first-layer powers.
  * fusion exchanges after blocks 1 and 2: the conv map goes through a
    fusion conv (1x1 stride 1 first, 3x3 stride 1 plus 3x3 depthwise
    stride 2 second), receives the vector state broadcast per channel, and
    sends its global average back into the vector state through a linear.

The tail global-average-pools the conv map, concatenates it with the
vector state, and feeds three linear heads: raw tx codeword (2N), raw rx
codeword (2N), and one normalized power scalar.

Batch norm and dropout exist only in training frameworks; graphs built
here describe the folded inference form.
"""

from __future__ import annotations

import numpy as np

from .graph import LayerSpec
from .weightfile import save_weights

BLOCK_WIDTHS = (32, 64, 128)
VEC_WIDTH = 64


class _Builder:
    def __init__(self) -> None:
        self.nodes: list[LayerSpec] = []
        self.shapes: dict[str, tuple] = {}

    def conv(self, name, src, in_c, out_c, kernel, stride=(1, 1), depthwise=False):
        kh, kw = kernel
        padding = (kh // 2, kw // 2)
        kind = "depthwise_conv2d" if depthwise else "conv2d"
        self.nodes.append(
            LayerSpec(
                name=name,
                kind=kind,
                inputs=(src,),
                params={
                    "in_channels": in_c,
                    "out_channels": out_c,
                    "kernel": list(kernel),
                    "stride": list(stride),
                    "padding": list(padding),
                },
                weights={"weight": f"{name}.weight", "bias": f"{name}.bias"},
            )
        )
        wshape = (out_c, 1, kh, kw) if depthwise else (out_c, in_c, kh, kw)
        self.shapes[f"{name}.weight"] = wshape
        self.shapes[f"{name}.bias"] = (out_c,)
        return name

    def linear(self, name, src, in_f, out_f):
        self.nodes.append(
            LayerSpec(
                name=name,
                kind="linear",
                inputs=(src,),
                params={"in_features": in_f, "out_features": out_f},
                weights={"weight": f"{name}.weight", "bias": f"{name}.bias"},
            )
        )
        self.shapes[f"{name}.weight"] = (out_f, in_f)
        self.shapes[f"{name}.bias"] = (out_f,)
        return name

    def op(self, name, kind, *srcs):
        self.nodes.append(
            LayerSpec(name=name, kind=kind, inputs=tuple(srcs), params={}, weights={})
        )
        return name


def _conv_block(b: _Builder, name: str, src: str, in_c: int, out_c: int, h: int) -> tuple[str, int]:
    """Multi-kernel block with residual unit and optional 2x2 pool."""
    branch_c = out_c // 4
    branches = []
    for tag, kernel in (("k1x1", (1, 1)), ("k1x3", (1, 3)), ("k3x1", (3, 1)), ("k3x3", (3, 3))):
        conv = b.conv(f"{name}.{tag}", src, in_c, branch_c, kernel)
        branches.append(b.op(f"{name}.{tag}.relu", "relu", conv))
    cat = b.op(f"{name}.cat", "concat", *branches)
    # residual unit over the concatenated features: same width in and out,
    # so the skip path is always the identity
    res_conv = b.conv(f"{name}.res", cat, out_c, out_c, (3, 3))
    added = b.op(f"{name}.add", "residual_add", res_conv, cat)
    out = b.op(f"{name}.relu", "relu", added)
    if h >= 2:
        out = b.op(f"{name}.pool", "maxpool2x2", out)
        h //= 2
    return out, h


def _fusion(
    b: _Builder,
    name: str,
    conv_src: str,
    vec_src: str,
    channels: int,
    h: int,
    second: bool,
) -> tuple[str, str, int]:
    """Bidirectional exchange between the conv map and the vector state."""
    if not second:
        t = b.conv(f"{name}.conv", conv_src, channels, channels, (1, 1))
    else:
        t = b.conv(f"{name}.conv", conv_src, channels, channels, (3, 3))
        t = b.op(f"{name}.conv.relu", "relu", t)
        t = b.conv(f"{name}.dw", t, channels, channels, (3, 3), stride=(2, 2), depthwise=True)
        h = (h - 1) // 2 + 1
    v2c = b.linear(f"{name}.v2c", vec_src, VEC_WIDTH, channels)
    badd = b.op(f"{name}.badd", "reshape_broadcast_add", t, v2c)
    conv_out = b.op(f"{name}.crelu", "relu", badd)
    gap = b.op(f"{name}.gap", "global_avgpool", conv_out)
    c2v = b.linear(f"{name}.c2v", gap, channels, VEC_WIDTH)
    vadd = b.op(f"{name}.vadd", "residual_add", vec_src, c2v)
    vec_out = b.op(f"{name}.vrelu", "relu", vadd)
    return conv_out, vec_out, h


def build_predictor_nodes(n_antennas: int, branching: int) -> tuple[list[LayerSpec], dict]:
    """Node list and tensor-shape table for the (N, M) predictor graph."""
    if n_antennas < 2:
        raise ValueError(f"predictor needs n_antennas >= 2, got {n_antennas}")
    b = _Builder()
    c1, c2, c3 = BLOCK_WIDTHS
    h = n_antennas

    v = b.linear("vec.l1", "vec_in", 2 * branching, VEC_WIDTH)
    v = b.op("vec.l1.relu", "relu", v)
    v = b.linear("vec.l2", v, VEC_WIDTH, VEC_WIDTH)
    v = b.op("vec.l2.relu", "relu", v)

    conv, h = _conv_block(b, "b1", "conv_in", 4, c1, h)
    conv, v, h = _fusion(b, "fus1", conv, v, c1, h, second=False)

    v = b.linear("vec.l3", v, VEC_WIDTH, VEC_WIDTH)
    v = b.op("vec.l3.relu", "relu", v)

    conv, h = _conv_block(b, "b2", conv, c1, c2, h)
    conv, v, h = _fusion(b, "fus2", conv, v, c2, h, second=True)

    v = b.linear("vec.l4", v, VEC_WIDTH, VEC_WIDTH)
    v = b.op("vec.l4.relu", "relu", v)

    conv, h = _conv_block(b, "b3", conv, c2, c3, h)

    gap = b.op("tail.gap", "global_avgpool", conv)
    flat = b.op("tail.flat", "flatten", gap)
    feat = b.op("tail.cat", "concat", flat, v)
    feat_len = c3 + VEC_WIDTH
    b.linear("tx_head", feat, feat_len, 2 * n_antennas)
    b.linear("rx_head", feat, feat_len, 2 * n_antennas)
    b.linear("pow_head", feat, feat_len, 1)
    return b.nodes, b.shapes


def init_tensors(shapes: dict, seed: int) -> dict:
    """Seeded He-style random weights; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith(".bias"):
            tensors[name] = rng.standard_normal(shape) * 0.05
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            tensors[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return tensors


def make_fixture_file(path, n_antennas: int, branching: int, seed: int) -> None:
    """Write a valid, randomly initialized weight file for tests and demos."""
    nodes, shapes = build_predictor_nodes(n_antennas, branching)
    tensors = init_tensors(shapes, seed)
    save_weights(
        path,
        n_antennas=n_antennas,
        branching=branching,
        nodes=nodes,
        tensors=tensors,
        outputs=("tx_head", "rx_head", "pow_head"),
    )
