"""Serialized network container: JSON manifest + raw float32 tensor blob.

Layout (little-endian):

    magic     8 bytes  b"THZNN1\\0\\0"
    version   u32
    u64       manifest byte length
    manifest  canonical JSON (sorted keys, compact separators), UTF-8
    blob      raw little-endian float32 tensor data to EOF

The manifest declares the node graph, the per-tensor (offset, shape) table
into the blob, and the blob's SHA-256, which is verified on load. Offsets
are in bytes and must land fully inside the blob.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .graph import (
    BlobIntegrityError,
    ComputationGraph,
    LayerSpec,
    WeightFileError,
    build_graph,
)

MAGIC = b"THZNN1\x00\x00"
FORMAT_VERSION = 1


def save_weights(
    path,
    n_antennas: int,
    branching: int,
    nodes: list[LayerSpec],
    tensors: dict,
    outputs: tuple[str, str, str],
) -> None:
    """Write a weight file; tensors are stored float32 in name order."""
    order = sorted(tensors)
    offset = 0
    table = {}
    chunks = []
    for name in order:
        arr = np.ascontiguousarray(np.asarray(tensors[name]), dtype="<f4")
        raw = arr.tobytes()
        table[name] = {"offset": offset, "shape": list(arr.shape)}
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)

    manifest = {
        "format": "thznn",
        "version": FORMAT_VERSION,
        "n_antennas": int(n_antennas),
        "branching": int(branching),
        "inputs": {"conv_in": [4, n_antennas, n_antennas], "vec_in": [2 * branching]},
        "outputs": list(outputs),
        "nodes": [n.to_json_dict() for n in nodes],
        "tensors": table,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(manifest_bytes)))
        fh.write(manifest_bytes)
        fh.write(blob)


def load_weights(path) -> ComputationGraph:
    """Load and fully validate a weight file into an executable graph.

    Shape and reference problems raise their specific error class at load
    time; a graph that loads will run.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise WeightFileError(f"cannot read weight file {path}: {exc}") from exc
    if data[:8] != MAGIC:
        raise WeightFileError(f"{path}: bad magic {data[:8]!r}")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != FORMAT_VERSION:
        raise WeightFileError(f"{path}: unsupported format version {version}")
    (manifest_len,) = struct.unpack_from("<Q", data, 12)
    manifest_end = 20 + manifest_len
    if manifest_end > len(data):
        raise WeightFileError(f"{path}: manifest length {manifest_len} exceeds file size")
    try:
        manifest = json.loads(data[20:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFileError(f"{path}: manifest is not valid JSON: {exc}") from exc

    blob = data[manifest_end:]
    # bounds first, so a truncated blob is reported against the tensor it cuts
    for name, entry in manifest["tensors"].items():
        shape = tuple(int(s) for s in entry["shape"])
        offset = int(entry["offset"])
        nbytes = int(np.prod(shape)) * 4
        if offset < 0 or offset + nbytes > len(blob):
            raise BlobIntegrityError(
                f"{path}: tensor {name!r} spans [{offset}, {offset + nbytes}) "
                f"outside the {len(blob)}-byte blob"
            )
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest.get("blob_sha256"):
        raise BlobIntegrityError(
            f"{path}: blob checksum mismatch (got {digest}, manifest says "
            f"{manifest.get('blob_sha256')})"
        )

    tensors = {}
    for name, entry in manifest["tensors"].items():
        shape = tuple(int(s) for s in entry["shape"])
        offset = int(entry["offset"])
        flat = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)), offset=offset)
        tensors[name] = flat.reshape(shape).astype(np.float64)

    nodes = [LayerSpec.from_json_dict(doc) for doc in manifest["nodes"]]
    outputs = tuple(manifest["outputs"])
    if len(outputs) != 3:
        raise WeightFileError(f"{path}: expected 3 outputs, manifest lists {outputs}")
    return build_graph(
        n_antennas=int(manifest["n_antennas"]),
        branching=int(manifest["branching"]),
        nodes=nodes,
        tensors=tensors,
        outputs=outputs,
    )
