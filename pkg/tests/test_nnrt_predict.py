import json
import math
from pathlib import Path

import numpy as np
import pytest

from beamforge.codebook import build_hierarchical
from beamforge.datagen import NormConstants
from beamforge.nnrt import (
    build_graph,
    build_predictor_nodes,
    conv_input_from_codebooks,
    forward,
    init_tensors,
    load_weights,
    make_fixture_file,
    predict,
    snap_to_codebook,
)

GOLDEN = json.loads((Path(__file__).parent / "golden" / "predictor_fixture.json").read_text())


def split_re_im(word):
    return np.concatenate([word.coeffs.real, word.coeffs.imag])


class TestSnap:
    def test_exact_codeword(self):
        cb = build_hierarchical(8, 2)
        for index in (1, 5, 8):
            raw = split_re_im(cb.codeword(cb.depth, index))
            assert snap_to_codebook(raw, cb.narrow_layer()) == index

    def test_phase_invariance(self):
        cb = build_hierarchical(8, 2)
        word = cb.codeword(cb.depth, 5)
        for phi in (0.3, 1.7, -2.9, math.pi / 2):
            rotated = np.exp(1j * phi) * word.coeffs
            raw = np.concatenate([rotated.real, rotated.imag])
            assert snap_to_codebook(raw, cb.narrow_layer()) == 5

    def test_positive_scale_invariance(self):
        cb = build_hierarchical(8, 2)
        word = cb.codeword(cb.depth, 3)
        raw = split_re_im(word)
        for scale in (1e-6, 0.5, 40.0):
            assert snap_to_codebook(scale * raw, cb.narrow_layer()) == 3

    def test_matches_scalar_correlation_oracle(self):
        cb = build_hierarchical(8, 2)
        rng = np.random.default_rng(17)
        for _ in range(50):
            raw = rng.standard_normal(16)
            w_hat = raw[:8] + 1j * raw[8:]
            scores = []
            for word in cb.narrow_layer():
                acc = 0j
                for i in range(8):
                    acc += complex(word.coeffs[i]).conjugate() * w_hat[i]
                scores.append(abs(acc))
            want = 1 + max(range(8), key=lambda i: scores[i])
            assert snap_to_codebook(raw, cb.narrow_layer()) == want

    def test_all_zero_rejected(self):
        cb = build_hierarchical(8, 2)
        with pytest.raises(ValueError):
            snap_to_codebook(np.zeros(16), cb.narrow_layer())


class TestForwardDeterminism:
    def test_bit_identical_repeat(self):
        nodes, shapes = build_predictor_nodes(8, 2)
        graph = build_graph(8, 2, nodes, init_tensors(shapes, 42), ("tx_head", "rx_head", "pow_head"))
        rng = np.random.default_rng(0)
        conv_in = rng.standard_normal((4, 8, 8))
        vec_in = rng.random(4)
        a = forward(graph, conv_in, vec_in)
        b = forward(graph, conv_in, vec_in)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()
        assert a[2] == b[2]

    def test_input_shape_mismatch_rejected(self):
        nodes, shapes = build_predictor_nodes(8, 2)
        graph = build_graph(8, 2, nodes, init_tensors(shapes, 1), ("tx_head", "rx_head", "pow_head"))
        with pytest.raises(Exception):
            forward(graph, np.zeros((4, 4, 4)), np.zeros(4))
        with pytest.raises(Exception):
            forward(graph, np.zeros((4, 8, 8)), np.zeros(6))


class TestConvInput:
    def test_channel_layout(self):
        cb = build_hierarchical(8, 2)
        conv_in = conv_input_from_codebooks(cb, cb)
        assert conv_in.shape == (4, 8, 8)
        narrow = np.stack([w.coeffs for w in cb.narrow_layer()])
        np.testing.assert_array_equal(conv_in[0], narrow.real)
        np.testing.assert_array_equal(conv_in[1], narrow.imag)
        np.testing.assert_array_equal(conv_in[2], narrow.real)
        np.testing.assert_array_equal(conv_in[3], narrow.imag)


class TestPredict:
    def _fixture(self, tmp_path):
        weights = tmp_path / "fixture.thznn"
        make_fixture_file(weights, GOLDEN["n_antennas"], GOLDEN["branching"], GOLDEN["weight_seed"])
        cb = build_hierarchical(GOLDEN["n_antennas"], GOLDEN["branching"])
        norms = NormConstants(**{k: float.fromhex(v) for k, v in GOLDEN["norms"].items()})
        powers = [float.fromhex(h) for h in GOLDEN["first_layer_powers_hex"]]
        return load_weights(weights), cb, norms, powers

    def test_golden_prediction(self, tmp_path):
        """Frozen outputs of the seeded fixture graph.

        Values were produced once by this repo's own writer/runtime and are
        compared bit-for-bit (hex-encoded float64), pinning determinism on
        the build platform.
        """
        graph, cb, norms, powers = self._fixture(tmp_path)
        pred = predict(graph, powers, norms, cb, cb)
        assert pred.tx_index == GOLDEN["tx_index"]
        assert pred.rx_index == GOLDEN["rx_index"]
        assert float(pred.predicted_power_norm).hex() == GOLDEN["predicted_power_norm_hex"]
        assert [float(v).hex() for v in pred.raw_tx_vec] == GOLDEN["raw_tx_vec_hex"]
        assert [float(v).hex() for v in pred.raw_rx_vec] == GOLDEN["raw_rx_vec_hex"]

    def test_repeat_load_bitwise_identical(self, tmp_path):
        graph, cb, norms, powers = self._fixture(tmp_path)
        a = predict(graph, powers, norms, cb, cb)
        graph2, _, _, _ = self._fixture(tmp_path)
        b = predict(graph2, powers, norms, cb, cb)
        assert a.raw_tx_vec.tobytes() == b.raw_tx_vec.tobytes()
        assert a.raw_rx_vec.tobytes() == b.raw_rx_vec.tobytes()
        assert (a.tx_index, a.rx_index) == (b.tx_index, b.rx_index)

    def test_degenerate_equal_powers(self, tmp_path):
        graph, cb, norms, _ = self._fixture(tmp_path)
        pred = predict(graph, [1e-8] * 4, norms, cb, cb)
        assert 1 <= pred.tx_index <= 8
        assert 1 <= pred.rx_index <= 8
        assert 0.0 <= pred.predicted_power_norm <= 1.0

    def test_missing_norms_rejected(self, tmp_path):
        graph, cb, _, powers = self._fixture(tmp_path)
        with pytest.raises(ValueError):
            predict(graph, powers, None, cb, cb)

    def test_wrong_power_count_rejected(self, tmp_path):
        graph, cb, norms, _ = self._fixture(tmp_path)
        with pytest.raises(ValueError):
            predict(graph, [1e-8] * 6, norms, cb, cb)

    def test_power_norm_clipped(self, tmp_path):
        graph, cb, norms, powers = self._fixture(tmp_path)
        pred = predict(graph, powers, norms, cb, cb)
        assert 0.0 <= pred.predicted_power_norm <= 1.0
