"""Evaluation bench: power-vs-distance curves, gain-loss CDFs, complexity.

Evaluation draws are rank-1 LoS, so a per-trial table of per-codeword
gains |w^H a|^2 reproduces every protocol's measurements exactly while
keeping 10^4-trial sweeps fast; :class:`FastRankOneOracle` serves those
table lookups through the standard counting-oracle interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .beamsearch import (
    MeasurementOracle,
    exhaustive_search,
    first_layer_probe,
    one_side_tree_search,
)
from .channel import LinkGeometry, ThzParams, default_params, path_loss_alpha, steering_vector
from .codebook import Codeword, HierarchicalCodebook, build_hierarchical
from .datagen import DEFAULT_D_MIN_M, DEFAULT_RADIUS_M, NormConstants
from .nnrt import ComputationGraph, predict

PROTOCOL_EXHAUSTIVE = "exhaustive"
PROTOCOL_ONE_SIDE = "one-side"
PROTOCOL_ONE_SIDE_TREE = "one-side-tree"
PROTOCOL_BOTH_SIDE_TREE = "both-side-tree"
PROTOCOL_ADAPTIVE = "adaptive"
PROTOCOL_PROPOSED = "proposed"


@dataclass(frozen=True)
class EvalConfig:
    n_antennas: int = 64
    branching: int = 2
    params: ThzParams | None = None
    radius_m: float = DEFAULT_RADIUS_M
    d_min_m: float = DEFAULT_D_MIN_M
    n_bins: int = 10
    bin_edges: tuple[float, ...] = ()
    n_trials: int = 10000
    seed: int = 0
    n_rf: int = 4
    protocols: tuple[str, ...] = (PROTOCOL_EXHAUSTIVE, PROTOCOL_ONE_SIDE_TREE)

    def __post_init__(self) -> None:
        if self.n_trials <= 0:
            raise ValueError(f"n_trials must be positive, got {self.n_trials}")
        edges = self.bin_edges or tuple(
            np.linspace(self.d_min_m, self.radius_m, self.n_bins + 1)
        )
        if any(b >= a for b, a in zip(edges, edges[1:])) or len(edges) < 2:
            raise ValueError(f"bin edges must be strictly increasing, got {edges}")
        object.__setattr__(self, "bin_edges", tuple(float(e) for e in edges))

    def resolved_params(self) -> ThzParams:
        if self.params is not None:
            return self.params
        return default_params(self.n_antennas, self.n_antennas)


@dataclass(frozen=True)
class GainLossRecord:
    p_exh: float
    p_prop: float
    delta_norm: float


def normalized_gain_loss(p_exh: float, p_prop: float) -> float:
    """(P_exh - P_prop) / P_exh: fractional power given up vs exhaustive."""
    if p_exh <= 0:
        raise ValueError(f"p_exh must be positive, got {p_exh!r}")
    if p_prop < 0:
        raise ValueError(f"p_prop must be >= 0, got {p_prop!r}")
    return (p_exh - p_prop) / p_exh


def empirical_cdf(values) -> list[tuple[float, float]]:
    """Right-continuous step CDF: (x, F(x)) at each distinct sorted value."""
    values = sorted(values)
    if not values:
        raise ValueError("empirical_cdf needs a non-empty sample")
    n = len(values)
    points = []
    for i, x in enumerate(values):
        if i + 1 == n or values[i + 1] != x:
            points.append((float(x), (i + 1) / n))
    return points


class FastRankOneOracle(MeasurementOracle):
    """Counting oracle over precomputed per-codeword gain tables.

    For H = sqrt(G N_R N_T) psi a_R a_T^H alpha every pair power factors as
    gamma G N_R N_T |psi|^2 alpha^2 * |w_R^H a_R|^2 * |a_T^H w_T|^2, so one
    gain table per side reproduces received_power for every codeword pair.
    Noiseless only.
    """

    def __init__(
        self,
        params: ThzParams,
        tx_codebook: HierarchicalCodebook,
        rx_codebook: HierarchicalCodebook,
        geometry: LinkGeometry,
        psi: complex,
        tx_matrices: list[np.ndarray] | None = None,
        rx_matrices: list[np.ndarray] | None = None,
    ) -> None:
        super().__init__()
        alpha = path_loss_alpha(params, geometry.distance_m)
        self._scale = (
            params.gamma_linear
            * params.gain_product_linear
            * tx_codebook.n_antennas
            * rx_codebook.n_antennas
            * abs(psi) ** 2
            * alpha**2
        )
        tx_matrices = codebook_matrices(tx_codebook) if tx_matrices is None else tx_matrices
        rx_matrices = codebook_matrices(rx_codebook) if rx_matrices is None else rx_matrices
        self._g_tx = _gain_tables(tx_matrices, tx_codebook.n_antennas, geometry.aod_u)
        self._g_rx = _gain_tables(rx_matrices, rx_codebook.n_antennas, geometry.aoa_u)
        self._depth = tx_codebook.depth

    def _power(self, w_tx: Codeword, w_rx: Codeword) -> float:
        return self._scale * self._g_tx[w_tx.layer][w_tx.index - 1] * self._g_rx[w_rx.layer][w_rx.index - 1]

    def pair_power(self, tx_index: int, rx_index: int) -> float:
        """Achieved power of a narrow pair; a link-use read, not counted."""
        return float(
            self._scale * self._g_tx[self._depth][tx_index - 1] * self._g_rx[self._depth][rx_index - 1]
        )

    def exhaustive_best(self) -> tuple[int, int, float]:
        """Narrow-layer argmax pair without spending oracle measurements.

        The objective is separable over the sides, so the per-side argmax
        (first occurrence, i.e. lowest index) selects the same pair as the
        counted exhaustive sweep, with an identical float power.
        """
        tx_idx = int(np.argmax(self._g_tx[self._depth])) + 1
        rx_idx = int(np.argmax(self._g_rx[self._depth])) + 1
        return tx_idx, rx_idx, self.pair_power(tx_idx, rx_idx)


def codebook_matrices(codebook: HierarchicalCodebook) -> list[np.ndarray]:
    """Per-layer codeword matrices, stacked once so trials can share them."""
    return [np.stack([w.coeffs for w in row]) for row in codebook.layers]


def _gain_tables(matrices: list[np.ndarray], n_antennas: int, u: float) -> list[np.ndarray]:
    a_conj = np.conj(steering_vector(n_antennas, u))
    return [np.abs(mat @ a_conj) ** 2 for mat in matrices]


def trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=(int(master_seed), int(trial)))


def draw_eval_link(
    rng: np.random.Generator, radius_m: float, d_min_m: float
) -> tuple[LinkGeometry, complex]:
    """Geometry and fading draw for one evaluation trial."""
    distance = radius_m - (radius_m - d_min_m) * rng.random()
    aod_u = rng.uniform(-1.0, 1.0)
    aoa_u = rng.uniform(-1.0, 1.0)
    psi = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)
    return LinkGeometry(distance_m=distance, aod_u=aod_u, aoa_u=aoa_u), psi


def _proposed_pair(
    oracle: FastRankOneOracle,
    graph: ComputationGraph,
    norms: NormConstants,
    tx_cb: HierarchicalCodebook,
    rx_cb: HierarchicalCodebook,
) -> tuple[int, int]:
    powers, _, _ = first_layer_probe(oracle, tx_cb, rx_cb)
    pred = predict(graph, powers, norms, tx_cb, rx_cb)
    return pred.tx_index, pred.rx_index


def power_vs_distance(
    config: EvalConfig,
    graph: ComputationGraph | None = None,
    norms: NormConstants | None = None,
) -> tuple[list[dict], list[dict]]:
    """Per-trial protocol powers and their per-distance-bin means.

    Returns (trial_records, bin_rows). Each trial record carries the trial
    index, the drawn distance, and one achieved power per protocol; each
    bin row carries the bin center and the per-protocol mean.
    """
    if PROTOCOL_PROPOSED in config.protocols and (graph is None or norms is None):
        raise ValueError("the proposed protocol needs trained weights and norm constants")
    params = config.resolved_params()
    tx_cb = build_hierarchical(config.n_antennas, config.branching)
    rx_cb = build_hierarchical(config.n_antennas, config.branching)
    tx_mats = codebook_matrices(tx_cb)
    rx_mats = codebook_matrices(rx_cb)

    records = []
    for trial in range(config.n_trials):
        rng = np.random.default_rng(trial_seed(config.seed, trial))
        geometry, psi = draw_eval_link(rng, config.radius_m, config.d_min_m)
        row: dict = {"trial": trial, "distance_m": geometry.distance_m}
        for protocol in config.protocols:
            oracle = FastRankOneOracle(
                params, tx_cb, rx_cb, geometry, psi, tx_matrices=tx_mats, rx_matrices=rx_mats
            )
            if protocol == PROTOCOL_EXHAUSTIVE:
                _, _, power = oracle.exhaustive_best()
            elif protocol == PROTOCOL_ONE_SIDE_TREE:
                power = one_side_tree_search(oracle, tx_cb, rx_cb, config.branching).power
            elif protocol == PROTOCOL_PROPOSED:
                tx_idx, rx_idx = _proposed_pair(oracle, graph, norms, tx_cb, rx_cb)
                power = oracle.pair_power(tx_idx, rx_idx)
            else:
                raise ValueError(f"power_vs_distance does not support protocol {protocol!r}")
            row[protocol] = power
        records.append(row)

    edges = config.bin_edges
    bins: list[dict] = []
    for lo, hi in zip(edges, edges[1:]):
        in_bin = [
            r for r in records if lo <= r["distance_m"] < hi or (hi == edges[-1] and r["distance_m"] == hi)
        ]
        row = {"bin_center": (lo + hi) / 2.0, "count": len(in_bin)}
        for protocol in config.protocols:
            row[protocol] = (
                float(np.mean([r[protocol] for r in in_bin])) if in_bin else float("nan")
            )
        bins.append(row)
    return records, bins


def _formula_counts(n: int, m: int, n_rf: int) -> dict:
    k = round(math.log(n, m))
    if m**k != n:
        raise ValueError(f"N={n} is not a power of M={m}")

    def exact(x: float):
        return int(x) if float(x).is_integer() else float(x)

    return {
        PROTOCOL_EXHAUSTIVE: n * n,
        PROTOCOL_ONE_SIDE: 2 * n,
        PROTOCOL_ADAPTIVE: exact(4 * math.log2(n)),
        "parallel": exact(n * n / n_rf),
        PROTOCOL_ONE_SIDE_TREE: 2 * m * k,
        PROTOCOL_BOTH_SIDE_TREE: m * m * k,
        PROTOCOL_PROPOSED: 2 * m,
    }


def complexity_table(
    n_list,
    branching: int,
    n_rf: int = 4,
    seed: int = 0,
    graph_for: dict | None = None,
    norms: NormConstants | None = None,
) -> list[dict]:
    """Formula vs measured measurement counts for every protocol and N.

    The measured column replays each simulated protocol on one drawn
    channel through a counting oracle; the parallel-search row is reported
    as a formula only (it needs N_RF chains this single-RF system lacks).
    ``graph_for`` may map N to a trained graph; otherwise the proposed
    protocol runs on seeded fixture weights (counts do not depend on the
    weight values).
    """
    from .beamsearch import adaptive_search, both_side_tree_search, one_side_sweep
    from .nnrt import build_graph, build_predictor_nodes, init_tensors

    rows = []
    for n in n_list:
        formulas = _formula_counts(n, branching, n_rf)
        params = default_params(n, n)
        tx_cb = build_hierarchical(n, branching)
        rx_cb = build_hierarchical(n, branching)
        rng = np.random.default_rng(trial_seed(seed, n))
        geometry, psi = draw_eval_link(rng, DEFAULT_RADIUS_M, DEFAULT_D_MIN_M)

        def fresh_oracle() -> FastRankOneOracle:
            return FastRankOneOracle(params, tx_cb, rx_cb, geometry, psi)

        measured: dict[str, int | None] = {}
        oracle = fresh_oracle()
        exhaustive_search(oracle, tx_cb.narrow_layer(), rx_cb.narrow_layer())
        measured[PROTOCOL_EXHAUSTIVE] = oracle.count
        oracle = fresh_oracle()
        one_side_sweep(oracle, tx_cb, rx_cb)
        measured[PROTOCOL_ONE_SIDE] = oracle.count
        if branching == 2:
            oracle = fresh_oracle()
            adaptive_search(oracle, tx_cb, rx_cb)
            measured[PROTOCOL_ADAPTIVE] = oracle.count
        else:
            measured[PROTOCOL_ADAPTIVE] = None
        measured["parallel"] = None
        oracle = fresh_oracle()
        one_side_tree_search(oracle, tx_cb, rx_cb, branching)
        measured[PROTOCOL_ONE_SIDE_TREE] = oracle.count
        oracle = fresh_oracle()
        both_side_tree_search(oracle, tx_cb, rx_cb, branching)
        measured[PROTOCOL_BOTH_SIDE_TREE] = oracle.count

        if graph_for is not None and n in graph_for:
            graph = graph_for[n]
            prop_norms = norms
        else:
            nodes, shapes = build_predictor_nodes(n, branching)
            graph = build_graph(
                n, branching, nodes, init_tensors(shapes, seed), ("tx_head", "rx_head", "pow_head")
            )
            prop_norms = norms if norms is not None else NormConstants(1e-30, 1.0, 1e-30, 1.0)
        oracle = fresh_oracle()
        _proposed_pair(oracle, graph, prop_norms, tx_cb, rx_cb)
        measured[PROTOCOL_PROPOSED] = oracle.count

        for protocol, formula in formulas.items():
            rows.append(
                {
                    "n": n,
                    "protocol": protocol,
                    "formula": formula,
                    "measured": measured[protocol],
                }
            )
    return rows


def gain_loss_records(
    config: EvalConfig,
    pair_selector,
) -> list[GainLossRecord]:
    """Delta_norm of ``pair_selector``'s pair vs exhaustive, per trial.

    ``pair_selector(oracle, tx_cb, rx_cb) -> (tx_index, rx_index)`` chooses
    a narrow-layer pair, spending whatever oracle measurements it needs.
    """
    params = config.resolved_params()
    tx_cb = build_hierarchical(config.n_antennas, config.branching)
    rx_cb = build_hierarchical(config.n_antennas, config.branching)
    tx_mats = codebook_matrices(tx_cb)
    rx_mats = codebook_matrices(rx_cb)
    records = []
    for trial in range(config.n_trials):
        rng = np.random.default_rng(trial_seed(config.seed, trial))
        geometry, psi = draw_eval_link(rng, config.radius_m, config.d_min_m)
        oracle = FastRankOneOracle(
            params, tx_cb, rx_cb, geometry, psi, tx_matrices=tx_mats, rx_matrices=rx_mats
        )
        _, _, p_exh = oracle.exhaustive_best()
        tx_idx, rx_idx = pair_selector(oracle, tx_cb, rx_cb)
        p_prop = oracle.pair_power(tx_idx, rx_idx)
        records.append(
            GainLossRecord(
                p_exh=p_exh,
                p_prop=p_prop,
                delta_norm=normalized_gain_loss(p_exh, p_prop),
            )
        )
    return records


def run_gain_loss_cdf(
    config: EvalConfig,
    graph: ComputationGraph,
    norms: NormConstants,
) -> tuple[list[GainLossRecord], list[tuple[float, float]], dict]:
    """Gain-loss records, their CDF, and summary stats for the NN predictor."""
    if graph is None or norms is None:
        raise ValueError("run_gain_loss_cdf needs trained weights and norm constants")

    def selector(oracle, tx_cb, rx_cb):
        return _proposed_pair(oracle, graph, norms, tx_cb, rx_cb)

    records = gain_loss_records(config, selector)
    deltas = [r.delta_norm for r in records]
    cdf = empirical_cdf(deltas)
    stats = {
        "mean": float(np.mean(deltas)),
        "median": float(np.median(deltas)),
        "p80": float(np.percentile(deltas, 80)),
        "p95": float(np.percentile(deltas, 95)),
    }
    return records, cdf, stats
