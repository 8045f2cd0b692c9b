"""Far-field LoS THz channel model.

Implements the rank-1 line-of-sight channel between two half-wavelength
uniform linear arrays:

    H = sqrt(G * N_R * N_T) * psi * a_R(N_R, u_R) a_T(N_T, u_T)^H * alpha(f_c, d)

where ``a_X`` are unit-norm array response vectors parameterized by the
spatial frequency u = cos(angle) in [-1, 1], ``psi`` is a unit-variance
circularly-symmetric complex Gaussian fading coefficient, and ``alpha``
combines free-space spreading with exponential molecular absorption.

All powers are linear; dB appears only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Operating point shared by the whole workbench (overridable everywhere).
DEFAULT_CARRIER_HZ = 0.14e12
DEFAULT_KAPPA_PER_M = 6e-5
DEFAULT_TX_SNR_DB = 0.0


@dataclass(frozen=True)
class ThzParams:
    """Link-level constants: carrier, absorption, SNR, antenna gains.

    ``gain_tx_db`` / ``gain_rx_db`` are normally derived from the array
    sizes via :func:`antenna_gain_db` (see :func:`default_params`) but can
    be overridden, e.g. to force G = 1.
    """

    carrier_hz: float = DEFAULT_CARRIER_HZ
    kappa_per_m: float = DEFAULT_KAPPA_PER_M
    tx_snr_db: float = DEFAULT_TX_SNR_DB
    gain_tx_db: float = 0.0
    gain_rx_db: float = 0.0
    noise_enabled: bool = False
    noise_power: float = 1.0

    def __post_init__(self) -> None:
        if self.carrier_hz <= 0:
            raise ValueError(f"carrier_hz must be positive, got {self.carrier_hz}")
        if self.kappa_per_m < 0:
            raise ValueError(f"kappa_per_m must be >= 0, got {self.kappa_per_m}")
        if self.noise_enabled and self.noise_power <= 0:
            raise ValueError("noise_power must be positive when noise is enabled")

    @property
    def gamma_linear(self) -> float:
        """Transmit SNR P_t/N_0 as a linear ratio."""
        return 10.0 ** (self.tx_snr_db / 10.0)

    @property
    def gain_product_linear(self) -> float:
        """Combined Tx*Rx antenna gain G = G_t * G_r, linear."""
        return 10.0 ** ((self.gain_tx_db + self.gain_rx_db) / 10.0)


def default_params(n_tx: int, n_rx: int, **overrides) -> ThzParams:
    """ThzParams with per-side gains derived from the array sizes."""
    fields = dict(
        gain_tx_db=antenna_gain_db(n_tx),
        gain_rx_db=antenna_gain_db(n_rx),
    )
    fields.update(overrides)
    return ThzParams(**fields)


@dataclass(frozen=True)
class LinkGeometry:
    """Tx-Rx distance plus departure/arrival spatial frequencies."""

    distance_m: float
    aod_u: float
    aoa_u: float

    def __post_init__(self) -> None:
        if self.distance_m <= 0:
            raise ValueError(f"distance_m must be positive, got {self.distance_m}")
        if abs(self.aod_u) > 1 or abs(self.aoa_u) > 1:
            raise ValueError(
                f"spatial frequencies must lie in [-1, 1], got "
                f"aod_u={self.aod_u}, aoa_u={self.aoa_u}"
            )


@dataclass(frozen=True)
class ChannelRealization:
    """One rank-1 channel draw together with its generating parameters."""

    matrix: np.ndarray  # complex, N_R x N_T
    psi: complex
    alpha: float
    geometry: LinkGeometry

    @property
    def n_rx(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_tx(self) -> int:
        return self.matrix.shape[1]


def steering_vector(n_elements: int, u: float) -> np.ndarray:
    """Unit-norm ULA array response at spatial frequency u = cos(angle).

    Element i (0-based) is (1/sqrt(N)) * exp(j * pi * i * u).
    """
    if n_elements < 1:
        raise ValueError(f"n_elements must be >= 1, got {n_elements}")
    if abs(u) > 1:
        raise ValueError(f"spatial frequency must lie in [-1, 1], got {u}")
    phases = 1j * math.pi * u * np.arange(n_elements)
    return np.exp(phases) / math.sqrt(n_elements)


def path_loss_alpha(params: ThzParams, distance_m: float) -> float:
    """Amplitude path loss: free-space spreading times molecular absorption.

    alpha(f_c, d) = c / (4 * pi * f_c * d) * exp(-kappa(f_c) * d / 2)
    """
    if distance_m <= 0:
        raise ValueError(f"distance_m must be positive, got {distance_m}")
    free_space = SPEED_OF_LIGHT / (4.0 * math.pi * params.carrier_hz * distance_m)
    return free_space * math.exp(-0.5 * params.kappa_per_m * distance_m)


def antenna_gain_db(n_elements: int) -> float:
    """Per-side antenna gain in dB for an N-element array: 4 + 10*log10(sqrt(N))."""
    if n_elements < 1:
        raise ValueError(f"n_elements must be >= 1, got {n_elements}")
    return 4.0 + 10.0 * math.log10(math.sqrt(n_elements))


def build_channel(
    params: ThzParams,
    n_tx: int,
    n_rx: int,
    geometry: LinkGeometry,
    psi: complex,
) -> ChannelRealization:
    """Assemble the rank-1 channel matrix for a given fading coefficient."""
    a_rx = steering_vector(n_rx, geometry.aoa_u)
    a_tx = steering_vector(n_tx, geometry.aod_u)
    alpha = path_loss_alpha(params, geometry.distance_m)
    scale = math.sqrt(params.gain_product_linear * n_rx * n_tx)
    matrix = scale * psi * np.outer(a_rx, np.conj(a_tx)) * alpha
    return ChannelRealization(matrix=matrix, psi=complex(psi), alpha=alpha, geometry=geometry)


def draw_channel(
    params: ThzParams,
    n_tx: int,
    n_rx: int,
    geometry: LinkGeometry,
    rng_seed,
) -> ChannelRealization:
    """Draw psi ~ CN(0, 1) from the seeded stream and build the channel.

    ``rng_seed`` may be anything ``numpy.random.default_rng`` accepts or an
    existing Generator. The same seed always yields a bit-identical matrix.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    psi = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2.0)
    return build_channel(params, n_tx, n_rx, geometry, psi)


def _check_unit_norm(w: np.ndarray, name: str) -> None:
    norm = float(np.linalg.norm(w))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"{name} must be unit-norm (||{name}|| = {norm!r})")


def received_power(
    w_tx: np.ndarray,
    w_rx: np.ndarray,
    channel: ChannelRealization,
    params: ThzParams,
    rng: np.random.Generator | None = None,
) -> float:
    """gamma * |w_rx^H H w_tx|^2 for a unit-norm beamformer/combiner pair.

    In noiseless mode (the dataset default) this is exact. With
    ``params.noise_enabled`` one realization of measurement noise is added
    to the combined scalar signal before squaring; the combiner being
    unit-norm, the effective noise is CN(0, noise_power).
    """
    w_tx = np.asarray(w_tx)
    w_rx = np.asarray(w_rx)
    _check_unit_norm(w_tx, "w_tx")
    _check_unit_norm(w_rx, "w_rx")
    signal = math.sqrt(params.gamma_linear) * (np.conj(w_rx) @ (channel.matrix @ w_tx))
    if params.noise_enabled:
        if rng is None:
            raise ValueError("noise_enabled requires an rng for the noise draw")
        noise = (rng.standard_normal() + 1j * rng.standard_normal()) * math.sqrt(
            params.noise_power / 2.0
        )
        signal = signal + noise
    return float(abs(signal) ** 2)
