"""Reader for the THZBT1 dataset container and tensor preparation.

The container is little-endian: 8-byte magic, u32 version, u64 manifest
length, canonical-JSON manifest, u64 sample count, then fixed-size
records (five f64 geometry/fading fields, the two stage-major power
traces, the 2M first-layer powers, two u32 labels, one f64 label power).

Network inputs and regression targets are produced here: first-layer
powers go through the manifest's bounded-log normalization (per side),
labels become the re/im stack of the true narrow codeword, and the label
power normalizes with the tx-side constants.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"THZBT1\x00\x00"
SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class LoadedDataset:
    manifest: dict
    distance_m: np.ndarray
    aod_u: np.ndarray
    aoa_u: np.ndarray
    psi: np.ndarray  # complex
    p_rx: np.ndarray
    p_tx: np.ndarray
    first_layer: np.ndarray  # (samples, 2M) raw linear powers
    label_tx: np.ndarray  # 1-based
    label_rx: np.ndarray
    label_power: np.ndarray

    def __len__(self) -> int:
        return len(self.label_tx)

    @property
    def n_antennas(self) -> int:
        return int(self.manifest["n_antennas"])

    @property
    def branching(self) -> int:
        return int(self.manifest["branching"])


def load_dataset(path) -> LoadedDataset:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:8]!r}")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    (manifest_len,) = struct.unpack_from("<Q", blob, 12)
    manifest = json.loads(blob[20 : 20 + manifest_len].decode("utf-8"))
    offset = 20 + manifest_len
    (count,) = struct.unpack_from("<Q", blob, offset)
    offset += 8

    n = int(manifest["n_antennas"])
    m = int(manifest["branching"])
    depth = round(math.log(n, m))
    trace = m * depth
    record = struct.Struct(f"<5d{trace}d{trace}d{2 * m}dIId")
    if len(blob) != offset + count * record.size:
        raise ValueError(f"{path}: truncated or oversized record section")

    rows = [record.unpack_from(blob, offset + i * record.size) for i in range(count)]
    arr = np.array([r[:5] for r in rows])
    p_rx = np.array([r[5 : 5 + trace] for r in rows])
    p_tx = np.array([r[5 + trace : 5 + 2 * trace] for r in rows])
    first = np.array([r[5 + 2 * trace : 5 + 2 * trace + 2 * m] for r in rows])
    labels = np.array([r[5 + 2 * trace + 2 * m :] for r in rows])
    return LoadedDataset(
        manifest=manifest,
        distance_m=arr[:, 0],
        aod_u=arr[:, 1],
        aoa_u=arr[:, 2],
        psi=arr[:, 3] + 1j * arr[:, 4],
        p_rx=p_rx,
        p_tx=p_tx,
        first_layer=first,
        label_tx=labels[:, 0].astype(np.int64),
        label_rx=labels[:, 1].astype(np.int64),
        label_power=labels[:, 2],
    )


def normalize_power(p: np.ndarray, floor: float, ceil: float) -> np.ndarray:
    v = (np.log10(np.maximum(p, floor)) - math.log10(floor)) / (
        math.log10(ceil) - math.log10(floor)
    )
    return np.clip(v, 0.0, 1.0)


def steering_matrix(n_antennas: int) -> np.ndarray:
    """Rows are the narrow codewords: a(N, -1 + (2n-1)/N), n = 1..N."""
    u = -1.0 + (2.0 * np.arange(1, n_antennas + 1) - 1.0) / n_antennas
    phases = np.pi * np.outer(u, np.arange(n_antennas))
    return np.exp(1j * phases) / math.sqrt(n_antennas)


def conv_input(n_antennas: int) -> np.ndarray:
    """Constant (4, N, N) stack: tx re/im then rx re/im of the narrow codebook."""
    narrow = steering_matrix(n_antennas)
    return np.stack([narrow.real, narrow.imag, narrow.real, narrow.imag]).astype(np.float32)


def network_arrays(ds: LoadedDataset) -> dict:
    """Normalized inputs plus regression targets, all float32."""
    norm = ds.manifest["norm"]
    m = ds.branching
    vec = np.concatenate(
        [
            normalize_power(ds.first_layer[:, :m], norm["p_floor_tx"], norm["p_ceil_tx"]),
            normalize_power(ds.first_layer[:, m:], norm["p_floor_rx"], norm["p_ceil_rx"]),
        ],
        axis=1,
    ).astype(np.float32)
    narrow = steering_matrix(ds.n_antennas)
    tx_words = narrow[ds.label_tx - 1]
    rx_words = narrow[ds.label_rx - 1]
    target_tx = np.concatenate([tx_words.real, tx_words.imag], axis=1).astype(np.float32)
    target_rx = np.concatenate([rx_words.real, rx_words.imag], axis=1).astype(np.float32)
    target_pow = normalize_power(
        ds.label_power, norm["p_floor_tx"], norm["p_ceil_tx"]
    ).astype(np.float32)[:, None]
    return {
        "vec": vec,
        "target_tx": target_tx,
        "target_rx": target_rx,
        "target_pow": target_pow,
    }


def path_loss_alpha(carrier_hz: float, kappa_per_m: float, distance_m: np.ndarray) -> np.ndarray:
    free_space = SPEED_OF_LIGHT / (4.0 * math.pi * carrier_hz * distance_m)
    return free_space * np.exp(-0.5 * kappa_per_m * distance_m)


def exhaustive_reference(ds: LoadedDataset) -> dict:
    """Per-sample steering gains and the exhaustive-search optimum,
    recomputed from the stored (psi, geometry) draws."""
    man = ds.manifest
    params = man["params"]
    n = ds.n_antennas
    gamma = 10.0 ** (params["tx_snr_db"] / 10.0)
    gain = 10.0 ** ((params["gain_tx_db"] + params["gain_rx_db"]) / 10.0)
    alpha = path_loss_alpha(params["carrier_hz"], params["kappa_per_m"], ds.distance_m)
    scale = gamma * gain * n * n * np.abs(ds.psi) ** 2 * alpha**2

    narrow = steering_matrix(n)
    steer_tx = np.exp(1j * np.pi * np.outer(ds.aod_u, np.arange(n))) / math.sqrt(n)
    steer_rx = np.exp(1j * np.pi * np.outer(ds.aoa_u, np.arange(n))) / math.sqrt(n)
    g_tx = np.abs(steer_tx.conj() @ narrow.T) ** 2  # (samples, N)
    g_rx = np.abs(steer_rx.conj() @ narrow.T) ** 2
    p_exh = scale * g_tx.max(axis=1) * g_rx.max(axis=1)
    return {"scale": scale, "g_tx": g_tx, "g_rx": g_rx, "p_exh": p_exh}


def pair_powers(ref: dict, tx_idx: np.ndarray, rx_idx: np.ndarray) -> np.ndarray:
    """Achieved power of 1-based narrow pairs against the reference gains."""
    rows = np.arange(len(tx_idx))
    return ref["scale"] * ref["g_tx"][rows, tx_idx - 1] * ref["g_rx"][rows, rx_idx - 1]
