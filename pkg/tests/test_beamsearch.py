import math

import numpy as np
import pytest

from beamforge.beamsearch import (
    ChannelOracle,
    adaptive_search,
    both_side_tree_search,
    exhaustive_search,
    first_layer_probe,
    one_side_sweep,
    one_side_tree_search,
)
from beamforge.channel import LinkGeometry, default_params, draw_channel, received_power
from beamforge.codebook import build_hierarchical


def make_link(n, seed, d=None):
    params = default_params(n, n)
    rng = np.random.default_rng(seed)
    geo = LinkGeometry(
        d if d is not None else 1.0 + 49.0 * rng.random(),
        rng.uniform(-1, 1),
        rng.uniform(-1, 1),
    )
    chan = draw_channel(params, n, n, geo, rng)
    return params, geo, chan


class TestExhaustive:
    def test_single_pair(self):
        params, _, chan = make_link(1, 0, d=5.0)
        # N=1 has no tree; hand the search a one-word narrow layer directly
        from beamforge.codebook import Codeword

        word = Codeword(layer=0, index=1, coeffs=np.array([1.0 + 0j]))
        oracle = ChannelOracle(chan, params)
        res = exhaustive_search(oracle, (word,), (word,))
        assert res.measurements == 1
        assert (res.tx_index, res.rx_index) == (1, 1)

    def test_counts(self):
        for n in (4, 16):
            params, _, chan = make_link(n, n)
            cb = build_hierarchical(n, 2)
            oracle = ChannelOracle(chan, params)
            res = exhaustive_search(oracle, cb.narrow_layer(), cb.narrow_layer())
            assert res.measurements == n * n
            assert oracle.count == n * n

    def test_self_oracle_full_enumeration(self):
        n = 8
        params, _, chan = make_link(n, 42)
        cb = build_hierarchical(n, 2)
        res = exhaustive_search(ChannelOracle(chan, params), cb.narrow_layer(), cb.narrow_layer())
        best = -1.0
        for w_tx in cb.narrow_layer():
            for w_rx in cb.narrow_layer():
                best = max(best, received_power(w_tx.coeffs, w_rx.coeffs, chan, params))
        assert res.power == pytest.approx(best, rel=1e-12)

    def test_permutation_invariance(self):
        n = 8
        params, _, chan = make_link(n, 7)
        cb = build_hierarchical(n, 2)
        base = exhaustive_search(ChannelOracle(chan, params), cb.narrow_layer(), cb.narrow_layer())
        rng = np.random.default_rng(0)
        for _ in range(3):
            tx = list(cb.narrow_layer())
            rx = list(cb.narrow_layer())
            rng.shuffle(tx)
            rng.shuffle(rx)
            shuffled = exhaustive_search(ChannelOracle(chan, params), tuple(tx), tuple(rx))
            assert (shuffled.tx_index, shuffled.rx_index) == (base.tx_index, base.rx_index)
            assert shuffled.measurements == base.measurements

    def test_analytic_argmax_match(self):
        # the rank-1 objective separates into per-side steering gains
        n = 16
        params, geo, chan = make_link(n, 9)
        cb = build_hierarchical(n, 2)
        res = exhaustive_search(ChannelOracle(chan, params), cb.narrow_layer(), cb.narrow_layer())
        from beamforge.channel import steering_vector

        a_t = steering_vector(n, geo.aod_u)
        a_r = steering_vector(n, geo.aoa_u)
        words = np.stack([w.coeffs for w in cb.narrow_layer()])
        g_tx = np.abs(words @ a_t.conj()) ** 2
        g_rx = np.abs(words @ a_r.conj()) ** 2
        assert res.tx_index == int(np.argmax(g_tx)) + 1
        assert res.rx_index == int(np.argmax(g_rx)) + 1
        scale = params.gamma_linear * params.gain_product_linear * n * n * abs(chan.psi) ** 2 * chan.alpha**2
        assert res.power == pytest.approx(scale * g_tx.max() * g_rx.max(), rel=1e-9)

    def test_empty_codebook_rejected(self):
        params, _, chan = make_link(4, 1)
        cb = build_hierarchical(4, 2)
        with pytest.raises(ValueError):
            exhaustive_search(ChannelOracle(chan, params), (), cb.narrow_layer())


class TestOneSideSweep:
    def test_count(self):
        for n in (4, 16, 64):
            params, _, chan = make_link(n, n + 1)
            cb = build_hierarchical(n, 2)
            oracle = ChannelOracle(chan, params)
            res = one_side_sweep(oracle, cb, cb)
            assert res.measurements == 2 * n
            assert oracle.count == 2 * n
            assert len(res.p_rx_trace) == n
            assert len(res.p_tx_trace) == n

    def test_matches_exhaustive_rate(self):
        """Noiseless rank-1 separability: the sweep should find the
        exhaustive pair nearly always; the measured rate is recorded."""
        n, draws = 16, 200
        cb = build_hierarchical(n, 2)
        hits = 0
        for seed in range(draws):
            params, _, chan = make_link(n, seed)
            sweep = one_side_sweep(ChannelOracle(chan, params), cb, cb)
            exh = exhaustive_search(ChannelOracle(chan, params), cb.narrow_layer(), cb.narrow_layer())
            hits += (sweep.tx_index, sweep.rx_index) == (exh.tx_index, exh.rx_index)
        rate = hits / draws
        print(f"\none-side sweep vs exhaustive match rate: {rate:.3f}")
        assert rate >= 0.90

    def test_power_consistency(self):
        params, _, chan = make_link(8, 77)
        cb = build_hierarchical(8, 2)
        res = one_side_sweep(ChannelOracle(chan, params), cb, cb)
        w_tx = cb.codeword(cb.depth, res.tx_index)
        w_rx = cb.codeword(cb.depth, res.rx_index)
        again = received_power(w_tx.coeffs, w_rx.coeffs, chan, params)
        assert res.power == pytest.approx(again, rel=1e-12)


class TestOneSideTree:
    def test_counts_and_trace_lengths(self):
        for n, m in ((4, 2), (16, 2), (64, 2), (16, 4), (27, 3)):
            params, _, chan = make_link(n, n + m)
            cb = build_hierarchical(n, m)
            k = cb.depth
            oracle = ChannelOracle(chan, params)
            res = one_side_tree_search(oracle, cb, cb, m)
            assert res.measurements == 2 * m * k
            assert oracle.count == 2 * m * k
            assert len(res.p_rx_trace) == m * k
            assert len(res.p_tx_trace) == m * k

    def test_single_stage_equals_first_layer_argmax(self):
        # N = M: one stage per side, the narrow layer IS the first layer
        n = m = 4
        params, _, chan = make_link(n, 5)
        cb = build_hierarchical(n, m)
        oracle = ChannelOracle(chan, params)
        res = one_side_tree_search(oracle, cb, cb, m)
        assert res.measurements == 2 * m
        assert res.rx_index == 1 + int(np.argmax(res.p_rx_trace))
        assert res.tx_index == 1 + int(np.argmax(res.p_tx_trace))

    def test_branching_mismatch_rejected(self):
        params, _, chan = make_link(16, 3)
        cb = build_hierarchical(16, 2)
        with pytest.raises(ValueError):
            one_side_tree_search(ChannelOracle(chan, params), cb, cb, 4)

    def test_power_consistency(self):
        params, _, chan = make_link(16, 21)
        cb = build_hierarchical(16, 2)
        res = one_side_tree_search(ChannelOracle(chan, params), cb, cb, 2)
        w_tx = cb.codeword(cb.depth, res.tx_index)
        w_rx = cb.codeword(cb.depth, res.rx_index)
        again = received_power(w_tx.coeffs, w_rx.coeffs, chan, params)
        assert res.power == pytest.approx(again, rel=1e-12)
        assert res.tx_layer == res.rx_layer == cb.depth


class TestBothSideTree:
    def test_counts(self):
        for n, m in ((4, 2), (16, 2), (64, 2), (16, 4)):
            params, _, chan = make_link(n, n - 1)
            cb = build_hierarchical(n, m)
            oracle = ChannelOracle(chan, params)
            res = both_side_tree_search(oracle, cb, cb, m)
            k = cb.depth
            assert res.measurements == m * m * k
            assert oracle.count == m * m * k

    def test_single_joint_stage(self):
        n = m = 4
        params, _, chan = make_link(n, 2)
        cb = build_hierarchical(n, m)
        res = both_side_tree_search(ChannelOracle(chan, params), cb, cb, m)
        assert res.measurements == m * m

    def test_gain_loss_distribution_recorded(self):
        """Joint descent vs exhaustive over 500 draws; report the loss CDF."""
        n, draws = 16, 500
        cb = build_hierarchical(n, 2)
        deltas = []
        for seed in range(draws):
            params, _, chan = make_link(n, seed)
            tree = both_side_tree_search(ChannelOracle(chan, params), cb, cb, 2)
            exh = exhaustive_search(ChannelOracle(chan, params), cb.narrow_layer(), cb.narrow_layer())
            deltas.append((exh.power - tree.power) / exh.power)
        deltas = np.array(deltas)
        assert np.all(deltas >= -1e-12)
        assert np.all(deltas <= 1.0 + 1e-12)
        print(
            f"\nboth-side tree gain loss: median={np.median(deltas):.4f} "
            f"mean={deltas.mean():.4f} p95={np.percentile(deltas, 95):.4f}"
        )

    def test_power_consistency(self):
        params, _, chan = make_link(16, 31)
        cb = build_hierarchical(16, 2)
        res = both_side_tree_search(ChannelOracle(chan, params), cb, cb, 2)
        w_tx = cb.codeword(cb.depth, res.tx_index)
        w_rx = cb.codeword(cb.depth, res.rx_index)
        assert res.power == pytest.approx(
            received_power(w_tx.coeffs, w_rx.coeffs, chan, params), rel=1e-12
        )


class TestAdaptive:
    def test_alias_of_m2_both_side(self):
        n = 16
        params, _, chan = make_link(n, 55)
        cb = build_hierarchical(n, 2)
        a = adaptive_search(ChannelOracle(chan, params), cb, cb)
        b = both_side_tree_search(ChannelOracle(chan, params), cb, cb, 2)
        assert a == b

    def test_counts(self):
        for n in (2, 64):
            params, _, chan = make_link(n, n)
            cb = build_hierarchical(n, 2)
            res = adaptive_search(ChannelOracle(chan, params), cb, cb)
            assert res.measurements == 4 * int(math.log2(n))

    def test_requires_binary_codebook(self):
        params, _, chan = make_link(16, 4)
        cb = build_hierarchical(16, 4)
        with pytest.raises(ValueError):
            adaptive_search(ChannelOracle(chan, params), cb, cb)


class TestFirstLayerProbe:
    def test_budget_and_order(self):
        n, m = 16, 2
        params, _, chan = make_link(n, 13)
        cb = build_hierarchical(n, m)
        oracle = ChannelOracle(chan, params)
        powers, rx_wide, tx_wide = first_layer_probe(oracle, cb, cb)
        assert oracle.count == 2 * m
        assert len(powers) == 2 * m
        assert 1 <= rx_wide <= m and 1 <= tx_wide <= m
        # rx entries were measured under the omni tx codeword
        for pos, p in enumerate(powers[m:], start=1):
            again = received_power(
                cb.root.coeffs, cb.codeword(1, pos).coeffs, chan, params
            )
            assert p == pytest.approx(again, rel=1e-12)
