import numpy as np
import pytest

from beamforge.beamsearch import ChannelOracle, one_side_tree_search
from beamforge.channel import LinkGeometry, build_channel, default_params
from beamforge.codebook import build_hierarchical
from beamforge.datagen import NormConstants
from beamforge.evalbench import (
    EvalConfig,
    FastRankOneOracle,
    complexity_table,
    draw_eval_link,
    empirical_cdf,
    gain_loss_records,
    normalized_gain_loss,
    power_vs_distance,
    run_gain_loss_cdf,
    trial_seed,
)
from beamforge.nnrt import build_graph, build_predictor_nodes, init_tensors


class TestNormalizedGainLoss:
    def test_identical_pairs(self):
        assert normalized_gain_loss(2.5, 2.5) == 0.0

    def test_total_miss(self):
        assert normalized_gain_loss(1e-6, 0.0) == 1.0

    def test_arithmetic(self):
        assert normalized_gain_loss(4.0, 3.0) == pytest.approx(0.25)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            normalized_gain_loss(0.0, 0.0)
        with pytest.raises(ValueError):
            normalized_gain_loss(1.0, -0.1)


class TestEmpiricalCdf:
    def test_singleton(self):
        assert empirical_cdf([0.5]) == [(0.5, 1.0)]

    def test_order_statistics(self):
        cdf = dict(empirical_cdf([1, 2, 3, 4]))
        assert cdf[2] == 0.5
        assert cdf[4] == 1.0

    def test_duplicates_collapse(self):
        assert empirical_cdf([1.0, 1.0, 2.0]) == [(1.0, 2 / 3), (2.0, 1.0)]

    def test_properties_random_draws(self):
        rng = np.random.default_rng(0)
        values = rng.random(10000)
        cdf = empirical_cdf(values)
        fs = [f for _, f in cdf]
        xs = [x for x, _ in cdf]
        assert all(a < b for a, b in zip(xs, xs[1:]))
        assert all(a <= b for a, b in zip(fs, fs[1:]))
        assert all(0 < f <= 1 for f in fs)
        assert fs[-1] == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_cdf([])


class TestFastOracle:
    def test_matches_channel_oracle(self):
        n, m = 16, 2
        params = default_params(n, n)
        cb = build_hierarchical(n, m)
        rng = np.random.default_rng(33)
        for _ in range(5):
            geo, psi = draw_eval_link(rng, 50.0, 1.0)
            chan = build_channel(params, n, n, geo, psi)
            slow = ChannelOracle(chan, params)
            fast = FastRankOneOracle(params, cb, cb, geo, psi)
            for layer_t in range(cb.depth + 1):
                for layer_r in (0, cb.depth):
                    w_t = cb.codeword(layer_t, 1 + rng.integers(m**layer_t))
                    w_r = cb.codeword(layer_r, 1 + rng.integers(m**layer_r))
                    a = slow.measure(w_t, w_r)
                    b = fast.measure(w_t, w_r)
                    assert b == pytest.approx(a, rel=1e-12)
            assert fast.count == slow.count

    def test_exhaustive_best_matches_counted_search(self):
        from beamforge.beamsearch import exhaustive_search

        n = 8
        params = default_params(n, n)
        cb = build_hierarchical(n, 2)
        rng = np.random.default_rng(4)
        geo, psi = draw_eval_link(rng, 50.0, 1.0)
        fast = FastRankOneOracle(params, cb, cb, geo, psi)
        shortcut = fast.exhaustive_best()
        counted = exhaustive_search(
            FastRankOneOracle(params, cb, cb, geo, psi), cb.narrow_layer(), cb.narrow_layer()
        )
        assert shortcut == (counted.tx_index, counted.rx_index, counted.power)

    def test_pair_power_not_counted(self):
        n = 8
        params = default_params(n, n)
        cb = build_hierarchical(n, 2)
        geo, psi = draw_eval_link(np.random.default_rng(9), 50.0, 1.0)
        fast = FastRankOneOracle(params, cb, cb, geo, psi)
        fast.pair_power(3, 4)
        assert fast.count == 0


class TestPowerVsDistance:
    def test_exhaustive_dominates_tree_per_trial(self):
        config = EvalConfig(n_antennas=16, n_trials=300, seed=5)
        records, bins = power_vs_distance(config)
        for r in records:
            assert r["exhaustive"] >= r["one-side-tree"]

    def test_bin_means_match_scalar_recompute(self):
        config = EvalConfig(n_antennas=8, n_trials=500, seed=6, n_bins=5)
        records, bins = power_vs_distance(config)
        edges = config.bin_edges
        for row, (lo, hi) in zip(bins, zip(edges, edges[1:])):
            members = [
                r["exhaustive"]
                for r in records
                if lo <= r["distance_m"] < hi or (hi == edges[-1] and r["distance_m"] == hi)
            ]
            assert row["count"] == len(members)
            if members:
                assert row["exhaustive"] == pytest.approx(sum(members) / len(members), rel=1e-12)

    def test_proposed_requires_weights(self):
        config = EvalConfig(n_antennas=8, n_trials=10, protocols=("exhaustive", "proposed"))
        with pytest.raises(ValueError):
            power_vs_distance(config)

    def test_deterministic_under_seed(self):
        config = EvalConfig(n_antennas=8, n_trials=50, seed=7)
        a = power_vs_distance(config)
        b = power_vs_distance(config)
        assert a == b


class TestComplexityTable:
    def test_formula_equals_measured(self):
        rows = complexity_table([4, 16], 2, n_rf=4, seed=0)
        by_key = {(r["n"], r["protocol"]): r for r in rows}
        for n in (4, 16):
            for protocol in ("exhaustive", "one-side", "adaptive", "one-side-tree", "both-side-tree", "proposed"):
                row = by_key[(n, protocol)]
                assert row["measured"] == row["formula"], (n, protocol)
            assert by_key[(n, "parallel")]["measured"] is None
            assert by_key[(n, "parallel")]["formula"] == n * n / 4

    def test_proposed_is_2m(self):
        rows = complexity_table([16], 2, seed=1)
        row = next(r for r in rows if r["protocol"] == "proposed")
        assert row["formula"] == 4 and row["measured"] == 4


class TestGainLoss:
    def test_tree_selector_baseline(self):
        """Selector running the tree search reproduces the hierarchical
        baseline; every delta is in [0, 1] and exact matches give 0."""
        config = EvalConfig(n_antennas=16, n_trials=100, seed=8)

        def tree_selector(oracle, tx_cb, rx_cb):
            res = one_side_tree_search(oracle, tx_cb, rx_cb, tx_cb.branching)
            return res.tx_index, res.rx_index

        records = gain_loss_records(config, tree_selector)
        deltas = [r.delta_norm for r in records]
        assert all(-1e-12 <= d <= 1.0 for d in deltas)
        exact = sum(1 for d in deltas if d == 0.0)
        assert exact > 0  # the tree finds the exhaustive pair on some draws

    def test_perfect_selector_gives_zero(self):
        config = EvalConfig(n_antennas=8, n_trials=50, seed=9)

        def oracle_selector(oracle, tx_cb, rx_cb):
            tx, rx, _ = oracle.exhaustive_best()
            return tx, rx

        records = gain_loss_records(config, oracle_selector)
        assert all(r.delta_norm == 0.0 for r in records)

    def test_random_selector_dominated_by_tree(self):
        config = EvalConfig(n_antennas=16, n_trials=200, seed=10)
        rng = np.random.default_rng(0)

        def random_selector(oracle, tx_cb, rx_cb):
            return int(rng.integers(1, 17)), int(rng.integers(1, 17))

        def tree_selector(oracle, tx_cb, rx_cb):
            res = one_side_tree_search(oracle, tx_cb, rx_cb, tx_cb.branching)
            return res.tx_index, res.rx_index

        random_mean = np.mean([r.delta_norm for r in gain_loss_records(config, random_selector)])
        tree_mean = np.mean([r.delta_norm for r in gain_loss_records(config, tree_selector)])
        assert tree_mean < random_mean

    def test_run_gain_loss_cdf_with_fixture_graph(self):
        n, m = 8, 2
        nodes, shapes = build_predictor_nodes(n, m)
        graph = build_graph(n, m, nodes, init_tensors(shapes, 13), ("tx_head", "rx_head", "pow_head"))
        norms = NormConstants(1e-12, 1e-4, 1e-12, 1e-5)
        config = EvalConfig(n_antennas=n, branching=m, n_trials=40, seed=11)
        records, cdf, stats = run_gain_loss_cdf(config, graph, norms)
        assert len(records) == 40
        assert all(r.delta_norm <= 1.0 + 1e-12 for r in records)
        assert 0 <= stats["median"] <= 1
        assert stats["p80"] <= stats["p95"] + 1e-12
        assert cdf[-1][1] == 1.0

    def test_missing_graph_rejected(self):
        config = EvalConfig(n_antennas=8, n_trials=5)
        with pytest.raises(ValueError):
            run_gain_loss_cdf(config, None, None)


class TestEvalConfig:
    def test_bin_edges_strictly_increasing(self):
        with pytest.raises(ValueError):
            EvalConfig(bin_edges=(1.0, 1.0, 2.0))
        with pytest.raises(ValueError):
            EvalConfig(n_trials=0)

    def test_default_edges_span_range(self):
        config = EvalConfig(n_antennas=8, d_min_m=1.0, radius_m=50.0, n_bins=10)
        assert len(config.bin_edges) == 11
        assert config.bin_edges[0] == 1.0
        assert config.bin_edges[-1] == 50.0
