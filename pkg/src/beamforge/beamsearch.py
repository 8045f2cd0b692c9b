"""Beam-training protocols over an abstract measurement oracle.

Every channel access made by a search procedure goes through a
:class:`MeasurementOracle`, whose invocation counter is the ground truth
for the complexity accounting:

    exhaustive            N_T * N_R
    one-side sweep        2N
    one-side M-tree       2M * log_M(N)
    both-side M-tree      M^2 * log_M(N)
    adaptive (M = 2)      4 * log2(N)
    first-layer probe     2M

Ties are always broken toward the lowest index so results are
deterministic and independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, ThzParams, received_power
from .codebook import Codeword, HierarchicalCodebook, children


class MeasurementOracle:
    """Maps a (tx codeword, rx codeword) pair to a received power.

    The base class owns the invocation counter; subclasses implement
    ``_power``. One oracle instance should serve one search at a time.
    """

    def __init__(self) -> None:
        self._count = 0

    @property
    def count(self) -> int:
        return self._count

    def measure(self, w_tx: Codeword, w_rx: Codeword) -> float:
        self._count += 1
        return float(self._power(w_tx, w_rx))

    def _power(self, w_tx: Codeword, w_rx: Codeword) -> float:
        raise NotImplementedError


class ChannelOracle(MeasurementOracle):
    """Oracle backed by a full channel matrix via :func:`received_power`."""

    def __init__(
        self,
        channel: ChannelRealization,
        params: ThzParams,
        rng: np.random.Generator | None = None,
    ) -> None:
        super().__init__()
        self._channel = channel
        self._params = params
        self._rng = rng

    def _power(self, w_tx: Codeword, w_rx: Codeword) -> float:
        return received_power(w_tx.coeffs, w_rx.coeffs, self._channel, self._params, rng=self._rng)


@dataclass(frozen=True)
class SearchResult:
    """Selected pair, achieved power, and the full measurement record."""

    tx_layer: int
    tx_index: int
    rx_layer: int
    rx_index: int
    power: float
    measurements: int
    p_rx_trace: tuple[float, ...] = field(default=())
    p_tx_trace: tuple[float, ...] = field(default=())
    trace: tuple[float, ...] = field(default=())


def _require_square(tx_codebook: HierarchicalCodebook, rx_codebook: HierarchicalCodebook) -> None:
    if tx_codebook.n_antennas != rx_codebook.n_antennas:
        raise ValueError(
            "square configuration required: "
            f"N_T={tx_codebook.n_antennas} != N_R={rx_codebook.n_antennas}"
        )


def _require_branching(codebook: HierarchicalCodebook, branching: int) -> None:
    if codebook.branching != branching:
        raise ValueError(
            f"branching mismatch: M={branching} but codebook was built with "
            f"M={codebook.branching}"
        )


def _argmax_lowest_index(powers: list[float]) -> int:
    """0-based position of the maximum; first occurrence wins ties."""
    best = 0
    for i in range(1, len(powers)):
        if powers[i] > powers[best]:
            best = i
    return best


def exhaustive_search(
    oracle: MeasurementOracle,
    tx_narrow: tuple[Codeword, ...],
    rx_narrow: tuple[Codeword, ...],
) -> SearchResult:
    """Test every (tx, rx) narrow-beam pair; N_T * N_R measurements.

    The winner is selected after all measurements, so shuffling the input
    codeword order changes neither the chosen pair nor the count; ties go
    to the lexicographically smallest (tx_index, rx_index).
    """
    if not tx_narrow or not rx_narrow:
        raise ValueError("exhaustive search requires non-empty codebooks")
    records = []
    trace = []
    for w_tx in tx_narrow:
        for w_rx in rx_narrow:
            p = oracle.measure(w_tx, w_rx)
            trace.append(p)
            records.append((-p, w_tx.index, w_rx.index, w_tx, w_rx))
    neg_p, _, _, best_tx, best_rx = min(records)
    return SearchResult(
        tx_layer=best_tx.layer,
        tx_index=best_tx.index,
        rx_layer=best_rx.layer,
        rx_index=best_rx.index,
        power=-neg_p,
        measurements=len(trace),
        trace=tuple(trace),
    )


def one_side_sweep(
    oracle: MeasurementOracle,
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
) -> SearchResult:
    """Sweep all N narrow Rx beams under an omni Tx, then all N Tx beams."""
    _require_square(tx_codebook, rx_codebook)
    tx_omni = tx_codebook.root
    rx_narrow = rx_codebook.narrow_layer()
    p_rx = [oracle.measure(tx_omni, w) for w in rx_narrow]
    best_rx = rx_narrow[_argmax_lowest_index(p_rx)]

    tx_narrow = tx_codebook.narrow_layer()
    p_tx = [oracle.measure(w, best_rx) for w in tx_narrow]
    best_tx_at = _argmax_lowest_index(p_tx)
    best_tx = tx_narrow[best_tx_at]
    return SearchResult(
        tx_layer=best_tx.layer,
        tx_index=best_tx.index,
        rx_layer=best_rx.layer,
        rx_index=best_rx.index,
        power=p_tx[best_tx_at],
        measurements=len(p_rx) + len(p_tx),
        p_rx_trace=tuple(p_rx),
        p_tx_trace=tuple(p_tx),
        trace=tuple(p_rx + p_tx),
    )


def _descend(
    codebook: HierarchicalCodebook,
    measure_pair,
) -> tuple[Codeword, float, list[float]]:
    """M-way tree descent from the root; ``measure_pair(w)`` probes one codeword.

    Every stage re-measures all M children of the current best; the last
    winning measurement is the achieved power of the returned codeword.
    """
    current = codebook.root
    trace: list[float] = []
    best_power = float("nan")
    for layer in range(1, codebook.depth + 1):
        child_words = [codebook.codeword(layer, n) for n in children(codebook, layer - 1, current.index)]
        powers = [measure_pair(w) for w in child_words]
        trace.extend(powers)
        at = _argmax_lowest_index(powers)
        current = child_words[at]
        best_power = powers[at]
    return current, best_power, trace


def one_side_tree_search(
    oracle: MeasurementOracle,
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
    branching: int,
) -> SearchResult:
    """Rx tree descent under an omni Tx, then Tx descent under the Rx winner.

    This is the data-generation protocol: the Rx side is resolved first
    with Tx fixed at the layer-0 codeword, the Rx is then set directional
    at its narrow winner while the Tx tree is descended. 2M log_M(N)
    measurements, traces filled stage-major.
    """
    _require_branching(tx_codebook, branching)
    _require_branching(rx_codebook, branching)
    tx_omni = tx_codebook.root
    best_rx, _, p_rx = _descend(rx_codebook, lambda w: oracle.measure(tx_omni, w))
    best_tx, power, p_tx = _descend(tx_codebook, lambda w: oracle.measure(w, best_rx))
    return SearchResult(
        tx_layer=best_tx.layer,
        tx_index=best_tx.index,
        rx_layer=best_rx.layer,
        rx_index=best_rx.index,
        power=power,
        measurements=len(p_rx) + len(p_tx),
        p_rx_trace=tuple(p_rx),
        p_tx_trace=tuple(p_tx),
        trace=tuple(p_rx + p_tx),
    )


def both_side_tree_search(
    oracle: MeasurementOracle,
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
    branching: int,
) -> SearchResult:
    """Joint descent: every stage tests all M x M child pairs of the best pair."""
    _require_branching(tx_codebook, branching)
    _require_branching(rx_codebook, branching)
    _require_square(tx_codebook, rx_codebook)
    best_tx = tx_codebook.root
    best_rx = rx_codebook.root
    trace: list[float] = []
    power = float("nan")
    for layer in range(1, tx_codebook.depth + 1):
        tx_children = [tx_codebook.codeword(layer, n) for n in children(tx_codebook, layer - 1, best_tx.index)]
        rx_children = [rx_codebook.codeword(layer, n) for n in children(rx_codebook, layer - 1, best_rx.index)]
        records = []
        for w_tx in tx_children:
            for w_rx in rx_children:
                p = oracle.measure(w_tx, w_rx)
                trace.append(p)
                records.append((-p, w_tx.index, w_rx.index, w_tx, w_rx))
        neg_p, _, _, best_tx, best_rx = min(records)
        power = -neg_p
    return SearchResult(
        tx_layer=best_tx.layer,
        tx_index=best_tx.index,
        rx_layer=best_rx.layer,
        rx_index=best_rx.index,
        power=power,
        measurements=len(trace),
        trace=tuple(trace),
    )


def adaptive_search(
    oracle: MeasurementOracle,
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
) -> SearchResult:
    """Alias of the both-side tree search at M = 2 (4 log2 N measurements)."""
    return both_side_tree_search(oracle, tx_codebook, rx_codebook, branching=2)


def first_layer_probe(
    oracle: MeasurementOracle,
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
) -> tuple[list[float], int, int]:
    """The 2M live measurements consumed by the learned predictor.

    Measures the M first-layer Rx beams under an omni Tx, parks the Rx on
    the best of those wide beams, then measures the M first-layer Tx
    beams. Returns (first_layer_powers, rx_wide_index, tx_wide_index)
    with powers ordered Tx entries first, matching the dataset layout.
    """
    m = rx_codebook.branching
    _require_branching(tx_codebook, m)
    tx_omni = tx_codebook.root
    p_rx = [oracle.measure(tx_omni, rx_codebook.codeword(1, n)) for n in range(1, m + 1)]
    rx_wide_index = _argmax_lowest_index(p_rx) + 1
    rx_wide = rx_codebook.codeword(1, rx_wide_index)
    p_tx = [oracle.measure(tx_codebook.codeword(1, n), rx_wide) for n in range(1, m + 1)]
    tx_wide_index = _argmax_lowest_index(p_tx) + 1
    return p_tx + p_rx, rx_wide_index, tx_wide_index
