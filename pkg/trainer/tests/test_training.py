import subprocess
import sys

import numpy as np
import pytest
import torch

from beamtrainer.data import load_dataset, steering_matrix
from beamtrainer.model import build_model
from beamtrainer.training import (
    TrainConfig,
    evaluate,
    first_layer_argmax_baseline,
    snap_indices,
    train,
)


@pytest.fixture(scope="module")
def tiny_sets(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    subprocess.run(
        [sys.executable, "-m", "beamforge", "datagen", "--n", "8", "--m", "2",
         "--train-count", "256", "--test-count", "64", "--seed", "21",
         "--out-dir", str(out)],
        check=True,
        capture_output=True,
    )
    return load_dataset(out / "train.thzbt"), load_dataset(out / "test.thzbt")


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(dropout=1.0)


class TestSnap:
    def test_exact_codewords(self):
        narrow = steering_matrix(8)
        raw = np.concatenate([narrow.real, narrow.imag], axis=1)
        np.testing.assert_array_equal(snap_indices(raw, narrow), np.arange(1, 9))

    def test_phase_invariance(self):
        narrow = steering_matrix(8)
        rotated = np.exp(0.9j) * narrow[3]
        raw = np.concatenate([rotated.real, rotated.imag])[None]
        assert snap_indices(raw, narrow)[0] == 4


class TestTrain:
    def test_loss_decreases(self, tiny_sets):
        train_ds, test_ds = tiny_sets
        model = build_model(8, 2, seed=0)
        history = train(model, train_ds, test_ds, TrainConfig(max_epochs=6, seed=0))
        assert history.test_loss[-1] < history.test_loss[0]
        assert len(history.acc_tx) == len(history.test_loss)

    def test_reproducible_under_seed(self, tiny_sets):
        train_ds, test_ds = tiny_sets
        config = TrainConfig(max_epochs=3, seed=9)
        hist_a = train(build_model(8, 2, seed=9), train_ds, test_ds, config)
        hist_b = train(build_model(8, 2, seed=9), train_ds, test_ds, config)
        assert hist_a.test_loss[-1] == pytest.approx(hist_b.test_loss[-1], rel=1e-6)

    def test_power_head_decoupled(self, tiny_sets):
        """lambda_pow = 0 leaves the power head untrained and the beam
        heads unaffected relative to a seeded twin."""
        train_ds, test_ds = tiny_sets
        config = TrainConfig(max_epochs=2, seed=4, lambda_pow=0.0)
        model = build_model(8, 2, seed=4)
        before = model.pow_head.weight.detach().clone()
        history = train(model, train_ds, test_ds, config)
        assert torch.equal(model.pow_head.weight, before)
        assert len(history.test_loss) == 2

    def test_nan_loss_aborts(self, tiny_sets):
        train_ds, test_ds = tiny_sets
        model = build_model(8, 2, seed=2)
        with pytest.raises(RuntimeError, match="non-finite"):
            train(model, train_ds, test_ds, TrainConfig(learning_rate=1e18, max_epochs=8, seed=2))

    def test_dataset_model_mismatch(self, tiny_sets):
        train_ds, test_ds = tiny_sets
        model = build_model(16, 2, seed=0)
        with pytest.raises(ValueError):
            train(model, train_ds, test_ds, TrainConfig(max_epochs=1))


class TestEvaluate:
    def test_metrics_shape(self, tiny_sets):
        _, test_ds = tiny_sets
        model = build_model(8, 2, seed=0)
        metrics = evaluate(model, test_ds)
        assert 0 <= metrics["pair_match"] <= 1
        assert len(metrics["delta_norm"]) == len(test_ds)
        assert np.all(metrics["delta_norm"] <= 1.0 + 1e-12)

    def test_label_predictor_ceiling(self, tiny_sets):
        """Feeding the stored labels back reproduces the hierarchical-
        vs-exhaustive gain-loss exactly."""
        from beamtrainer.data import exhaustive_reference, pair_powers

        _, test_ds = tiny_sets
        ref = exhaustive_reference(test_ds)
        p_label = pair_powers(ref, test_ds.label_tx, test_ds.label_rx)
        deltas = (ref["p_exh"] - p_label) / ref["p_exh"]
        assert np.all(deltas >= -1e-12)
        assert np.median(deltas) <= 0.1

    def test_naive_baseline_valid_indices(self, tiny_sets):
        _, test_ds = tiny_sets
        tx_idx, rx_idx = first_layer_argmax_baseline(test_ds)
        assert tx_idx.min() >= 1 and tx_idx.max() <= 8
        assert rx_idx.min() >= 1 and rx_idx.max() <= 8
