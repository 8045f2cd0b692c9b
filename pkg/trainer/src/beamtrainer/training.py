"""Training loop: composite MSE, adaptive-moment optimizer, early stop.

The loss is lambda_beam * (MSE(tx) + MSE(rx)) + lambda_pow * MSE(power)
against the re/im stack of the true narrow codewords and the normalized
label power. Training stops once the test loss is stable: its relative
change across a five-epoch gap drops below 1%.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .data import LoadedDataset, conv_input, exhaustive_reference, network_arrays, pair_powers, steering_matrix
from .model import BeamPredictor

STABILITY_WINDOW = 5  # epochs
STABILITY_THRESHOLD = 0.01  # relative spread


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    dropout: float = 0.5
    max_epochs: int = 100
    lambda_beam: float = 1.0
    lambda_pow: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    acc_tx: list[float] = field(default_factory=list)
    acc_rx: list[float] = field(default_factory=list)
    mean_gain_loss: list[float] = field(default_factory=list)
    stabilized_epoch: int | None = None

    def rows(self):
        for e in range(len(self.train_loss)):
            yield (
                e + 1,
                self.train_loss[e],
                self.test_loss[e],
                self.acc_tx[e],
                self.acc_rx[e],
                self.mean_gain_loss[e],
            )


def snap_indices(raw: np.ndarray, narrow: np.ndarray) -> np.ndarray:
    """1-based narrow-codebook indices for a (batch, 2N) raw output."""
    n = narrow.shape[0]
    w_hat = raw[:, :n] + 1j * raw[:, n:]
    scores = np.abs(w_hat @ narrow.conj().T)
    return scores.argmax(axis=1) + 1


def composite_loss(outputs, targets, lambda_beam: float, lambda_pow: float):
    tx, rx, pw = outputs
    mse = torch.nn.functional.mse_loss
    return lambda_beam * (mse(tx, targets["target_tx"]) + mse(rx, targets["target_rx"])) + (
        lambda_pow * mse(pw, targets["target_pow"])
    )


def _stabilized(test_losses: list[float]) -> bool:
    if len(test_losses) < STABILITY_WINDOW + 1:
        return False
    past = test_losses[-(STABILITY_WINDOW + 1)]
    return abs(test_losses[-1] - past) / past < STABILITY_THRESHOLD


def train(
    model: BeamPredictor,
    train_ds: LoadedDataset,
    test_ds: LoadedDataset,
    config: TrainConfig,
) -> TrainHistory:
    if train_ds.n_antennas != model.n_antennas or train_ds.branching != model.branching:
        raise ValueError(
            f"dataset is N={train_ds.n_antennas}, M={train_ds.branching} but the model "
            f"expects N={model.n_antennas}, M={model.branching}"
        )
    torch.manual_seed(config.seed)
    device = torch.device("cpu")
    model = model.to(device)

    conv_const = torch.from_numpy(conv_input(model.n_antennas))
    tr = {k: torch.from_numpy(v) for k, v in network_arrays(train_ds).items()}
    te = {k: torch.from_numpy(v) for k, v in network_arrays(test_ds).items()}
    narrow = steering_matrix(model.n_antennas)
    reference = exhaustive_reference(test_ds)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    n_train = len(train_ds)
    history = TrainHistory()

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue  # batch-norm needs more than one sample
            batch_conv = conv_const.expand(len(idx), -1, -1, -1)
            outputs = model(batch_conv, tr["vec"][idx])
            targets = {k: tr[k][idx] for k in ("target_tx", "target_rx", "target_pow")}
            loss = composite_loss(outputs, targets, config.lambda_beam, config.lambda_pow)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"loss became non-finite at epoch {epoch} "
                    f"(lr={config.learning_rate}, batch={config.batch_size})"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(idx)
        history.train_loss.append(epoch_loss / n_train)

        model.eval()
        with torch.no_grad():
            tx, rx, pw = _batched_forward(model, conv_const, te["vec"])
            test_loss = composite_loss(
                (tx, rx, pw),
                {k: te[k] for k in ("target_tx", "target_rx", "target_pow")},
                config.lambda_beam,
                config.lambda_pow,
            )
        history.test_loss.append(float(test_loss))

        pred_tx = snap_indices(tx.numpy(), narrow)
        pred_rx = snap_indices(rx.numpy(), narrow)
        history.acc_tx.append(float(np.mean(pred_tx == test_ds.label_tx)))
        history.acc_rx.append(float(np.mean(pred_rx == test_ds.label_rx)))
        p_prop = pair_powers(reference, pred_tx, pred_rx)
        history.mean_gain_loss.append(
            float(np.mean((reference["p_exh"] - p_prop) / reference["p_exh"]))
        )

        if history.stabilized_epoch is None and _stabilized(history.test_loss):
            history.stabilized_epoch = epoch
            break
    return history


def _batched_forward(model, conv_const, vec, batch: int = 256):
    outs = ([], [], [])
    for start in range(0, len(vec), batch):
        chunk = vec[start : start + batch]
        tx, rx, pw = model(conv_const.expand(len(chunk), -1, -1, -1), chunk)
        for acc, t in zip(outs, (tx, rx, pw)):
            acc.append(t)
    return tuple(torch.cat(a) for a in outs)


def evaluate(model: BeamPredictor, test_ds: LoadedDataset) -> dict:
    """Exact-match rates and the gain-loss distribution vs exhaustive,
    with random-index and first-layer-argmax baselines for comparison."""
    if test_ds.n_antennas != model.n_antennas:
        raise ValueError(
            f"dataset is N={test_ds.n_antennas} but the model expects N={model.n_antennas}"
        )
    model = model.eval()
    n = model.n_antennas
    m = model.branching
    conv_const = torch.from_numpy(conv_input(n))
    arrays = network_arrays(test_ds)
    narrow = steering_matrix(n)
    reference = exhaustive_reference(test_ds)

    with torch.no_grad():
        tx, rx, _ = _batched_forward(model, conv_const, torch.from_numpy(arrays["vec"]))
    pred_tx = snap_indices(tx.numpy(), narrow)
    pred_rx = snap_indices(rx.numpy(), narrow)

    def gain_loss(tx_idx, rx_idx):
        p = pair_powers(reference, tx_idx, rx_idx)
        return (reference["p_exh"] - p) / reference["p_exh"]

    deltas = gain_loss(pred_tx, pred_rx)

    rng = np.random.default_rng(0)
    random_deltas = gain_loss(
        rng.integers(1, n + 1, len(test_ds)), rng.integers(1, n + 1, len(test_ds))
    )
    naive_deltas = gain_loss(*first_layer_argmax_baseline(test_ds))

    return {
        "pair_match": float(np.mean((pred_tx == test_ds.label_tx) & (pred_rx == test_ds.label_rx))),
        "acc_tx": float(np.mean(pred_tx == test_ds.label_tx)),
        "acc_rx": float(np.mean(pred_rx == test_ds.label_rx)),
        "delta_norm": deltas,
        "delta_norm_random": random_deltas,
        "delta_norm_naive": naive_deltas,
        "mean_gain_loss": float(deltas.mean()),
        "median_gain_loss": float(np.median(deltas)),
        "p80_gain_loss": float(np.percentile(deltas, 80)),
    }


def first_layer_argmax_baseline(ds: LoadedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Pick the winning first-layer wide beam per side and map it to the
    narrow beam at the center of its subtree."""
    n, m = ds.n_antennas, ds.branching
    leaves = n // m  # narrow beams under one first-layer beam
    wide_tx = ds.first_layer[:, :m].argmax(axis=1)
    wide_rx = ds.first_layer[:, m:].argmax(axis=1)
    tx_idx = wide_tx * leaves + leaves // 2 + 1
    rx_idx = wide_rx * leaves + leaves // 2 + 1
    return tx_idx.astype(np.int64), rx_idx.astype(np.int64)
