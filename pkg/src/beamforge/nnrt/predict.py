"""Beam-pair prediction from the 2M first-layer power measurements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codebook import HierarchicalCodebook
from ..datagen import NormConstants, normalize_power
from .graph import ComputationGraph, forward


@dataclass(frozen=True)
class Prediction:
    tx_index: int
    rx_index: int
    predicted_power_norm: float
    raw_tx_vec: np.ndarray
    raw_rx_vec: np.ndarray


def conv_input_from_codebooks(
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
) -> np.ndarray:
    """Constant (4, N, N) tensor: re/im parts of both narrow codebooks.

    Channel order (tx-re, tx-im, rx-re, rx-im); row n is codeword n.
    """
    tx = np.stack([w.coeffs for w in tx_codebook.narrow_layer()])
    rx = np.stack([w.coeffs for w in rx_codebook.narrow_layer()])
    return np.stack([tx.real, tx.imag, rx.real, rx.imag])


def snap_to_codebook(raw_vec: np.ndarray, narrow_codewords) -> int:
    """Project a raw 2N output onto the narrow codebook.

    The first N entries are the real parts, the last N the imaginary
    parts; returns the 1-based index maximizing |w_n^H w_hat| (invariant
    to global phase and positive scaling; ties to the lowest index).
    """
    raw_vec = np.asarray(raw_vec, dtype=np.float64)
    n = raw_vec.shape[0] // 2
    w_hat = raw_vec[:n] + 1j * raw_vec[n:]
    if not np.any(w_hat):
        raise ValueError("cannot snap an all-zero vector: direction undefined")
    best_index = 1
    best_score = -1.0
    for word in narrow_codewords:
        score = float(abs(np.conj(word.coeffs) @ w_hat))
        if score > best_score:
            best_score = score
            best_index = word.index
    return best_index


def predict(
    graph: ComputationGraph,
    first_layer_powers,
    norms: NormConstants,
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
) -> Prediction:
    """Normalize the 2M powers, run the graph, snap both raw outputs.

    ``first_layer_powers`` is ordered [p_1^T..p_M^T, p_1^R..p_M^R]; the tx
    entries are normalized with the tx-side constants and the rx entries
    with the rx-side constants from the dataset manifest.
    """
    if norms is None:
        raise ValueError("normalization constants are required for prediction")
    m = graph.branching
    powers = list(first_layer_powers)
    if len(powers) != 2 * m:
        raise ValueError(f"expected {2 * m} first-layer powers, got {len(powers)}")
    if tx_codebook.n_antennas != graph.n_antennas or rx_codebook.n_antennas != graph.n_antennas:
        raise ValueError(
            f"codebook size mismatch: graph expects N={graph.n_antennas}"
        )
    vec_in = np.array(
        [normalize_power(p, norms.p_floor_tx, norms.p_ceil_tx) for p in powers[:m]]
        + [normalize_power(p, norms.p_floor_rx, norms.p_ceil_rx) for p in powers[m:]]
    )
    conv_in = conv_input_from_codebooks(tx_codebook, rx_codebook)
    raw_tx, raw_rx, power_norm = forward(graph, conv_in, vec_in)
    return Prediction(
        tx_index=snap_to_codebook(raw_tx, tx_codebook.narrow_layer()),
        rx_index=snap_to_codebook(raw_rx, rx_codebook.narrow_layer()),
        predicted_power_norm=min(max(power_norm, 0.0), 1.0),
        raw_tx_vec=raw_tx,
        raw_rx_vec=raw_rx,
    )
