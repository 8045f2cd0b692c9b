"""Training-dataset generation and bit-exact serialization.

One sample = one random Rx placement in a disk of radius R around the Tx:
geometry and fading are drawn from a per-sample seed, the one-side tree
search is replayed on the resulting channel (Rx sweep under an omni Tx
first, then Tx sweep under the directional Rx winner), and the stage-major
power traces plus the narrow-beam winners become the training record.

File layout (all little-endian):

    magic    8 bytes  b"THZBT1\\0\\0"
    version  u32
    u64      manifest byte length
    manifest canonical JSON (sorted keys, compact separators), UTF-8
    u64      sample count
    records  fixed-size, per sample:
                 f64  distance_m, aod_u, aoa_u, psi_re, psi_im
                 f64 x M*K   p_rx (stage-major)
                 f64 x M*K   p_tx (stage-major)
                 f64 x 2M    first-layer powers [p1_T..pM_T, p1_R..pM_R]
                 u32  label_tx_index, u32 label_rx_index
                 f64  label_power
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .beamsearch import ChannelOracle, exhaustive_search, one_side_tree_search
from .channel import LinkGeometry, ThzParams, build_channel
from .codebook import HierarchicalCodebook, build_hierarchical

MAGIC = b"THZBT1\x00\x00"
FORMAT_VERSION = 1

DEFAULT_RADIUS_M = 50.0
DEFAULT_D_MIN_M = 1.0


class DatasetFormatError(Exception):
    """Raised when a dataset file violates the container format."""


@dataclass(frozen=True)
class Sample:
    distance_m: float
    aod_u: float
    aoa_u: float
    psi_re: float
    psi_im: float
    p_rx: tuple[float, ...]
    p_tx: tuple[float, ...]
    first_layer_powers: tuple[float, ...]
    label_tx_index: int
    label_rx_index: int
    label_power: float


@dataclass(frozen=True)
class NormConstants:
    """Bounded-log normalization bounds, one pair per side."""

    p_floor_tx: float
    p_ceil_tx: float
    p_floor_rx: float
    p_ceil_rx: float

    def __post_init__(self) -> None:
        for floor, ceil, side in (
            (self.p_floor_tx, self.p_ceil_tx, "tx"),
            (self.p_floor_rx, self.p_ceil_rx, "rx"),
        ):
            if not (0 < floor < ceil):
                raise ValueError(
                    f"invalid {side} normalization bounds: floor={floor!r}, ceil={ceil!r}"
                )


@dataclass(frozen=True)
class DatasetManifest:
    n_antennas: int
    branching: int
    params: ThzParams
    radius_m: float
    d_min_m: float
    train_count: int
    test_count: int
    rng_seed: int
    norm: NormConstants
    split: str
    sample_count: int
    oracle_labels: bool = False
    format_version: int = FORMAT_VERSION

    def to_json(self) -> str:
        doc = asdict(self)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "DatasetManifest":
        doc = json.loads(text)
        doc["params"] = ThzParams(**doc["params"])
        doc["norm"] = NormConstants(**doc["norm"])
        return DatasetManifest(**doc)


@dataclass(frozen=True)
class DatasetConfig:
    n_antennas: int
    branching: int = 2
    params: ThzParams | None = None
    radius_m: float = DEFAULT_RADIUS_M
    d_min_m: float = DEFAULT_D_MIN_M
    train_count: int = 10000
    test_count: int = 2000
    oracle_labels: bool = False

    def __post_init__(self) -> None:
        if self.train_count <= 0 or self.test_count <= 0:
            raise ValueError(
                f"sample counts must be positive, got train={self.train_count}, "
                f"test={self.test_count}"
            )
        if not 0 < self.d_min_m < self.radius_m:
            raise ValueError(
                f"need 0 < d_min < radius, got d_min={self.d_min_m}, radius={self.radius_m}"
            )


def normalize_power(p: float, p_floor: float, p_ceil: float) -> float:
    """Bounded logarithmic normalization of a linear power into [0, 1].

    Maps p_floor -> 0 and p_ceil -> 1 on a log10 scale and clips outside.
    """
    if not (0 < p_floor < p_ceil):
        raise ValueError(f"need 0 < p_floor < p_ceil, got {p_floor!r}, {p_ceil!r}")
    if p < 0:
        raise ValueError(f"power must be >= 0, got {p!r}")
    v = (math.log10(max(p, p_floor)) - math.log10(p_floor)) / (
        math.log10(p_ceil) - math.log10(p_floor)
    )
    return min(max(v, 0.0), 1.0)


def sample_seed(master_seed: int, split: str, index: int) -> np.random.SeedSequence:
    """Per-sample seed derived from (master seed, split, sample index)."""
    split_id = {"train": 0, "test": 1}[split]
    return np.random.SeedSequence(entropy=(int(master_seed), split_id, int(index)))


def generate_sample(
    params: ThzParams,
    tx_codebook: HierarchicalCodebook,
    rx_codebook: HierarchicalCodebook,
    radius_m: float,
    d_min_m: float,
    seed,
    oracle_labels: bool = False,
) -> Sample:
    """Draw one Rx placement, replay the tree search, and record the traces.

    Draw order within the seeded stream is fixed (d, aod_u, aoa_u, psi) so
    a given seed always produces a byte-identical sample.
    """
    if not 0 < d_min_m < radius_m:
        raise ValueError(f"need 0 < d_min < radius, got {d_min_m}, {radius_m}")
    rng = np.random.default_rng(seed)
    # d in (d_min, R]: complement of the usual half-open uniform draw
    distance = radius_m - (radius_m - d_min_m) * rng.random()
    aod_u = rng.uniform(-1.0, 1.0)
    aoa_u = rng.uniform(-1.0, 1.0)
    psi = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)

    geometry = LinkGeometry(distance_m=distance, aod_u=aod_u, aoa_u=aoa_u)
    chan = build_channel(
        params, tx_codebook.n_antennas, rx_codebook.n_antennas, geometry, psi
    )
    oracle = ChannelOracle(chan, params)
    result = one_side_tree_search(oracle, tx_codebook, rx_codebook, tx_codebook.branching)

    label_tx, label_rx, label_power = result.tx_index, result.rx_index, result.power
    if oracle_labels:
        exh = exhaustive_search(
            ChannelOracle(chan, params),
            tx_codebook.narrow_layer(),
            rx_codebook.narrow_layer(),
        )
        label_tx, label_rx, label_power = exh.tx_index, exh.rx_index, exh.power

    m = tx_codebook.branching
    return Sample(
        distance_m=float(distance),
        aod_u=float(aod_u),
        aoa_u=float(aoa_u),
        psi_re=float(psi.real),
        psi_im=float(psi.imag),
        p_rx=result.p_rx_trace,
        p_tx=result.p_tx_trace,
        first_layer_powers=result.p_tx_trace[:m] + result.p_rx_trace[:m],
        label_tx_index=label_tx,
        label_rx_index=label_rx,
        label_power=label_power,
    )


def _record_struct(n_antennas: int, branching: int) -> struct.Struct:
    depth = 0
    size = 1
    while size < n_antennas:
        size *= branching
        depth += 1
    trace_len = branching * depth
    return struct.Struct(f"<5d{trace_len}d{trace_len}d{2 * branching}dIId")


def _pack_sample(s: Sample, record: struct.Struct) -> bytes:
    return record.pack(
        s.distance_m,
        s.aod_u,
        s.aoa_u,
        s.psi_re,
        s.psi_im,
        *s.p_rx,
        *s.p_tx,
        *s.first_layer_powers,
        s.label_tx_index,
        s.label_rx_index,
        s.label_power,
    )


def _unpack_sample(raw: bytes, record: struct.Struct, trace_len: int, m: int) -> Sample:
    vals = record.unpack(raw)
    at = 5
    p_rx = vals[at : at + trace_len]
    at += trace_len
    p_tx = vals[at : at + trace_len]
    at += trace_len
    first = vals[at : at + 2 * m]
    at += 2 * m
    return Sample(
        distance_m=vals[0],
        aod_u=vals[1],
        aoa_u=vals[2],
        psi_re=vals[3],
        psi_im=vals[4],
        p_rx=tuple(p_rx),
        p_tx=tuple(p_tx),
        first_layer_powers=tuple(first),
        label_tx_index=vals[at],
        label_rx_index=vals[at + 1],
        label_power=vals[at + 2],
    )


def write_dataset(path, manifest: DatasetManifest, samples: list[Sample]) -> None:
    if manifest.sample_count != len(samples):
        raise DatasetFormatError(
            f"manifest declares {manifest.sample_count} samples, got {len(samples)}"
        )
    manifest_bytes = manifest.to_json().encode("utf-8")
    record = _record_struct(manifest.n_antennas, manifest.branching)
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", manifest.format_version))
            fh.write(struct.pack("<Q", len(manifest_bytes)))
            fh.write(manifest_bytes)
            fh.write(struct.pack("<Q", len(samples)))
            for s in samples:
                fh.write(_pack_sample(s, record))
    except OSError as exc:
        raise DatasetFormatError(f"cannot write dataset file {path}: {exc}") from exc


def read_dataset(path) -> tuple[DatasetManifest, list[Sample]]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DatasetFormatError(f"cannot read dataset file {path}: {exc}") from exc
    if blob[:8] != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {blob[:8]!r}")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {version}")
    (manifest_len,) = struct.unpack_from("<Q", blob, 12)
    manifest_end = 20 + manifest_len
    manifest = DatasetManifest.from_json(blob[20:manifest_end].decode("utf-8"))
    (count,) = struct.unpack_from("<Q", blob, manifest_end)
    record = _record_struct(manifest.n_antennas, manifest.branching)
    offset = manifest_end + 8
    expected = offset + count * record.size
    if len(blob) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes for {count} samples, file has {len(blob)}"
        )
    depth = round(math.log(manifest.n_antennas, manifest.branching))
    trace_len = manifest.branching * depth
    samples = []
    for i in range(count):
        raw = blob[offset + i * record.size : offset + (i + 1) * record.size]
        samples.append(_unpack_sample(raw, record, trace_len, manifest.branching))
    if count != manifest.sample_count:
        raise DatasetFormatError(
            f"{path}: manifest declares {manifest.sample_count} samples, file has {count}"
        )
    return manifest, samples


def _norm_constants(samples: list[Sample]) -> NormConstants:
    """0.1 / 99.9 percentile bounds of the train-split powers, per side."""
    tx_powers = np.concatenate([np.asarray(s.p_tx) for s in samples])
    rx_powers = np.concatenate([np.asarray(s.p_rx) for s in samples])
    floor_tx, ceil_tx = np.percentile(tx_powers, [0.1, 99.9])
    floor_rx, ceil_rx = np.percentile(rx_powers, [0.1, 99.9])
    return NormConstants(
        p_floor_tx=float(floor_tx),
        p_ceil_tx=float(ceil_tx),
        p_floor_rx=float(floor_rx),
        p_ceil_rx=float(ceil_rx),
    )


def generate_dataset(
    config: DatasetConfig,
    seed: int,
    out_dir,
) -> tuple[Path, Path]:
    """Generate the train and test files; returns their paths.

    Per-sample seeds are derived from (seed, split, index), so the two
    splits are disjoint streams. Normalization constants come from the
    train split only and are stored in both manifests.
    """
    params = config.params if config.params is not None else _default_params(config.n_antennas)
    tx_cb = build_hierarchical(config.n_antennas, config.branching)
    rx_cb = build_hierarchical(config.n_antennas, config.branching)

    splits: dict[str, list[Sample]] = {}
    for split, count in (("train", config.train_count), ("test", config.test_count)):
        splits[split] = [
            generate_sample(
                params,
                tx_cb,
                rx_cb,
                config.radius_m,
                config.d_min_m,
                sample_seed(seed, split, i),
                oracle_labels=config.oracle_labels,
            )
            for i in range(count)
        ]

    norm = _norm_constants(splits["train"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for split in ("train", "test"):
        manifest = DatasetManifest(
            n_antennas=config.n_antennas,
            branching=config.branching,
            params=params,
            radius_m=config.radius_m,
            d_min_m=config.d_min_m,
            train_count=config.train_count,
            test_count=config.test_count,
            rng_seed=int(seed),
            norm=norm,
            split=split,
            sample_count=len(splits[split]),
            oracle_labels=config.oracle_labels,
        )
        path = out_dir / f"{split}.thzbt"
        write_dataset(path, manifest, splits[split])
        paths.append(path)
    return paths[0], paths[1]


def _default_params(n_antennas: int) -> ThzParams:
    from .channel import default_params

    return default_params(n_antennas, n_antennas)
