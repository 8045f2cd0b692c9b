"""Hierarchical antenna-deactivation codebooks and the flat DFT codebook.

Layer k of the hierarchical codebook activates only the first M^k antenna
elements; codeword n (1-based) in layer k is the M^k-element steering
vector at boresight u = -1 + (2n - 1)/M^k, zero-padded to the full array.
The deepest layer K = log_M(N) therefore consists of full-array steering
vectors on the uniform u-grid, which is exactly the DFT codebook.

Written for binary trees in the original construction (M = 2); the M-ary
generalization replaces 2^k with M^k so that M-way tree search has
matching codebooks. Codebooks are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import steering_vector


@dataclass(frozen=True)
class Codeword:
    """One beamforming weight vector, addressed by (layer, 1-based index)."""

    layer: int
    index: int
    coeffs: np.ndarray


@dataclass(frozen=True)
class HierarchicalCodebook:
    n_antennas: int
    branching: int
    depth: int
    layers: tuple[tuple[Codeword, ...], ...]

    def codeword(self, layer: int, index: int) -> Codeword:
        """Look up codeword (layer, index); index is 1-based."""
        if not 0 <= layer <= self.depth:
            raise ValueError(f"layer must lie in [0, {self.depth}], got {layer}")
        row = self.layers[layer]
        if not 1 <= index <= len(row):
            raise ValueError(
                f"index must lie in [1, {len(row)}] at layer {layer}, got {index}"
            )
        return row[index - 1]

    @property
    def root(self) -> Codeword:
        return self.layers[0][0]

    def narrow_layer(self) -> tuple[Codeword, ...]:
        """The deepest layer: N full-array steering vectors."""
        return self.layers[self.depth]


@dataclass(frozen=True)
class DftCodebook:
    n_antennas: int
    codewords: tuple[np.ndarray, ...]


def _tree_depth(n_antennas: int, branching: int) -> int:
    """K such that branching**K == n_antennas, or raise."""
    if branching < 2:
        raise ValueError(f"branching must be >= 2, got {branching}")
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    depth = 0
    size = 1
    while size < n_antennas:
        size *= branching
        depth += 1
    if size != n_antennas:
        raise ValueError(
            f"n_antennas={n_antennas} is not a power of branching={branching}"
        )
    return depth


def boresight_u(branching: int, layer: int, index: int) -> float:
    """Nominal beam center of codeword (layer, index) in u-space."""
    return -1.0 + (2.0 * index - 1.0) / branching**layer


def beam_interval(branching: int, layer: int, index: int) -> tuple[float, float]:
    """Nominal u-coverage interval of codeword (layer, index)."""
    width = 2.0 / branching**layer
    lo = -1.0 + (index - 1) * width
    return lo, lo + width


def build_hierarchical(n_antennas: int, branching: int) -> HierarchicalCodebook:
    """Construct all layers 0..K of the deactivation codebook."""
    depth = _tree_depth(n_antennas, branching)
    layers = []
    for layer in range(depth + 1):
        active = branching**layer
        row = []
        for index in range(1, active + 1):
            coeffs = np.zeros(n_antennas, dtype=np.complex128)
            coeffs[:active] = steering_vector(active, boresight_u(branching, layer, index))
            coeffs.setflags(write=False)
            row.append(Codeword(layer=layer, index=index, coeffs=coeffs))
        layers.append(tuple(row))
    return HierarchicalCodebook(
        n_antennas=n_antennas,
        branching=branching,
        depth=depth,
        layers=tuple(layers),
    )


def children(codebook: HierarchicalCodebook, layer: int, index: int) -> list[int]:
    """Indices at layer+1 of the M children of codeword (layer, index)."""
    if layer >= codebook.depth:
        raise ValueError(
            f"layer {layer} codewords have no children (depth {codebook.depth})"
        )
    codebook.codeword(layer, index)  # bounds check
    m = codebook.branching
    return list(range(m * (index - 1) + 1, m * index + 1))


def beam_gain(codeword: Codeword, u: float) -> float:
    """|a(N, u)^H w|^2: response of the codeword toward direction u."""
    probe = steering_vector(len(codeword.coeffs), u)
    return float(abs(np.conj(probe) @ codeword.coeffs) ** 2)


def build_dft(n_antennas: int) -> DftCodebook:
    """N full-array steering vectors at u_n = -1 + (2n - 1)/N."""
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    words = []
    for index in range(1, n_antennas + 1):
        coeffs = steering_vector(n_antennas, -1.0 + (2.0 * index - 1.0) / n_antennas)
        coeffs.setflags(write=False)
        words.append(coeffs)
    return DftCodebook(n_antennas=n_antennas, codewords=tuple(words))
