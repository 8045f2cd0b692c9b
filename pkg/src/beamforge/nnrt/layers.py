"""Numpy reference implementations of the runtime layer kinds.

Single-sample semantics, no batch dimension: feature maps are (C, H, W),
vectors are (L,). Convolutions are cross-correlations (no kernel flip)
with zero padding, matching the usual deep-learning convention.

Everything reduces through ``np.einsum`` without the optimizer, or through
explicit sequential accumulation, so a given input always produces
bit-identical output.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: tuple[int, int],
    padding: tuple[int, int],
) -> np.ndarray:
    """(C_in, H, W) -> (C_out, H', W'); weight is (C_out, C_in, kh, kw)."""
    sh, sw = stride
    ph, pw = padding
    if ph or pw:
        x = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    kh, kw = weight.shape[2], weight.shape[3]
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    out = np.einsum("cijhw,ochw->oij", windows, weight)
    return out + bias[:, None, None]


def depthwise_conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: tuple[int, int],
    padding: tuple[int, int],
) -> np.ndarray:
    """Per-channel convolution; weight is (C, 1, kh, kw)."""
    sh, sw = stride
    ph, pw = padding
    if ph or pw:
        x = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    kh, kw = weight.shape[2], weight.shape[3]
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    out = np.einsum("cijhw,chw->cij", windows, weight[:, 0])
    return out + bias[:, None, None]


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """(L_in,) -> (L_out,); weight is (L_out, L_in)."""
    return np.einsum("oi,i->o", weight, x) + bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling with stride 2; trailing odd rows/columns are dropped."""
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError(f"maxpool2x2 input too small: {x.shape}")
    trimmed = x[:, : h2 * 2, : w2 * 2]
    return trimmed.reshape(c, h2, 2, w2, 2).max(axis=(2, 4))


def global_avgpool(x: np.ndarray) -> np.ndarray:
    """(C, H, W) -> (C,) channel means.

    Accumulated sequentially in C order (not numpy's blocked reduction) so
    the result is reproducible bit-for-bit and matches a plain scalar loop.
    """
    c, h, w = x.shape
    count = h * w
    out = np.empty(c, dtype=x.dtype)
    for ch in range(c):
        acc = 0.0
        for v in x[ch].reshape(-1):
            acc += v
        out[ch] = acc / count
    return out


def concat(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts, axis=0)


def residual_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"residual_add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def flatten(x: np.ndarray) -> np.ndarray:
    return x.reshape(-1)


def reshape_broadcast_add(feature_map: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Add a length-C vector onto every spatial position of a (C, H, W) map."""
    if vec.shape != (feature_map.shape[0],):
        raise ValueError(
            f"broadcast vector length {vec.shape} does not match channels "
            f"{feature_map.shape[0]}"
        )
    return feature_map + vec[:, None, None]


def conv_output_hw(h: int, w: int, kernel, stride, padding) -> tuple[int, int]:
    """Spatial output extents of a strided, padded convolution."""
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    return ho, wo
