"""Correlated MU-MIMO channel generation, AWGN, and grid-SNR calibration.

The model is a tapped delay line: per user and per delay tap, a receive
antenna vector evolves across OFDM symbols as a first-order autoregressive
process and is colored by the user's spatial covariance. The per-RE frequency
response is the DFT of the taps with an exponential power-delay profile, so
the grid shows the time/frequency/spatial correlation a real channel would.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import GridDims

_DUMP_MAGIC = b"MUCH"
_DUMP_VERSION = 1


@dataclass(frozen=True)
class ChannelModelCfg:
    """Synthetic channel parameters.

    rho_rx is the receive-side exponential correlation coefficient, ar_time
    the per-symbol AR(1) coefficient of each tap, tap_decay the exponential
    power-delay-profile ratio between consecutive taps. gains are per-user
    average linear power gains (defaults to 1 for every user). cluster_mix
    correlates consecutive user pairs (0,1), (2,3), ... before spatial
    coloring, to mimic users sharing a scattering cluster.
    """

    n_r: int
    n_u: int
    rho_rx: float = 0.4
    ar_time: float = 0.99
    n_taps: int = 4
    tap_decay: float = 0.5
    gains: tuple[float, ...] = field(default=())
    cluster_mix: float = 0.0

    def __post_init__(self):
        if self.n_r < 1 or self.n_u < 1:
            raise ConfigurationError("n_r and n_u must be >= 1")
        if not 0.0 <= self.rho_rx < 1.0:
            raise ConfigurationError("rho_rx must be in [0, 1)")
        if not 0.0 <= self.ar_time <= 1.0:
            raise ConfigurationError("ar_time must be in [0, 1]")
        if self.n_taps < 1:
            raise ConfigurationError("n_taps must be >= 1")
        if not 0.0 < self.tap_decay <= 1.0:
            raise ConfigurationError("tap_decay must be in (0, 1]")
        if not self.gains:
            object.__setattr__(self, "gains", (1.0,) * self.n_u)
        if len(self.gains) != self.n_u:
            raise ConfigurationError("one gain per user required")
        if any(g <= 0 for g in self.gains):
            raise ConfigurationError("per-user gains must be > 0")
        if not 0.0 <= self.cluster_mix < 1.0:
            raise ConfigurationError("cluster_mix must be in [0, 1)")


@dataclass(frozen=True)
class NoiseCfg:
    """Per-antenna complex noise variance (linear power)."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")


@dataclass
class ChannelRealization:
    """Per-RE composite channel plus the per-user spatial covariances.

    h has shape (n_f, n_t, n_r, n_u); column i of h[m, n] is the channel of
    user i at RE (m, n). r_spatial has shape (n_u, n_r, n_r).
    """

    dims: GridDims
    h: np.ndarray
    r_spatial: np.ndarray

    def __post_init__(self):
        n_u, n_r = self.r_spatial.shape[0], self.r_spatial.shape[1]
        expect = (self.dims.n_f, self.dims.n_t, n_r, n_u)
        if self.h.shape != expect:
            raise ConfigurationError(f"h shape {self.h.shape} inconsistent with {expect}")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channel entries must be finite")
        for i in range(n_u):
            r = self.r_spatial[i]
            if not np.allclose(r, r.conj().T, atol=1e-10):
                raise ValueError(f"spatial covariance of user {i} is not Hermitian")
            if np.linalg.eigvalsh(r).min() < -1e-10:
                raise ValueError(f"spatial covariance of user {i} is not PSD")

    @property
    def n_r(self) -> int:
        return self.r_spatial.shape[1]

    @property
    def n_u(self) -> int:
        return self.r_spatial.shape[0]


def spatial_cov(cfg: ChannelModelCfg, user: int) -> np.ndarray:
    """Exponential receive correlation matrix gain_i * rho^|a-b|, (n_r, n_r)."""
    if not 0 <= user < cfg.n_u:
        raise ConfigurationError(f"user {user} out of range")
    idx = np.arange(cfg.n_r)
    return cfg.gains[user] * cfg.rho_rx ** np.abs(idx[:, None] - idx[None, :]) + 0.0j


def _psd_sqrt(r: np.ndarray) -> np.ndarray:
    """Hermitian principal square root with eigenvalue floor at zero."""
    w, v = np.linalg.eigh(r)
    w = np.maximum(w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def _pdp_weights(n_taps: int, decay: float) -> np.ndarray:
    p = decay ** np.arange(n_taps)
    return p / p.sum()


def gen_channel(cfg: ChannelModelCfg, dims: GridDims, rng: np.random.Generator) -> ChannelRealization:
    """Draw one channel realization over the grid, deterministic per rng state.

    Taps are i.i.d. circular complex Gaussian across users and delays, AR(1)
    across OFDM symbols, spatially colored so E[h h^H] equals spatial_cov for
    every user, and combined into per-subcarrier responses by an n_f-point DFT
    weighted with the normalized exponential power-delay profile.
    """
    n_u, n_r, n_taps = cfg.n_u, cfg.n_r, cfg.n_taps
    shape = (n_u, n_taps, dims.n_t, n_r)
    xi = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    if cfg.cluster_mix > 0.0:
        mix = cfg.cluster_mix
        for i in range(1, n_u, 2):
            xi[i] = np.sqrt(1.0 - mix) * xi[i] + np.sqrt(mix) * xi[i - 1]

    taps = np.empty_like(xi)
    taps[:, :, 0] = xi[:, :, 0]
    if dims.n_t > 1:
        innov = np.sqrt(1.0 - cfg.ar_time**2)
        for n in range(1, dims.n_t):
            taps[:, :, n] = cfg.ar_time * taps[:, :, n - 1] + innov * xi[:, :, n]

    r_spatial = np.stack([spatial_cov(cfg, i) for i in range(n_u)])
    for i in range(n_u):
        taps[i] = taps[i] @ _psd_sqrt(r_spatial[i]).T  # color: (R^{1/2} a)^T = a^T R^{1/2T}

    pdp = _pdp_weights(n_taps, cfg.tap_decay)
    m = np.arange(dims.n_f)
    l = np.arange(n_taps)
    dft = np.exp(-2j * np.pi * np.outer(m, l) / dims.n_f) * np.sqrt(pdp)
    h = np.einsum("fl,ilnr->fnri", dft, taps, optimize=True)
    return ChannelRealization(dims, np.ascontiguousarray(h), r_spatial)


def compute_snr(real: ChannelRealization, sigma2: float) -> float:
    """Grid SNR: total channel Frobenius energy over n_f*n_t*n_r*n_u*sigma2."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    energy = float(np.sum(np.abs(real.h) ** 2))
    denom = real.dims.n_f * real.dims.n_t * real.n_r * real.n_u * sigma2
    return energy / denom


def calibrate_sigma2(real: ChannelRealization, target_snr_db: float) -> float:
    """Noise variance that puts the realization at the target grid SNR."""
    energy = float(np.sum(np.abs(real.h) ** 2))
    if energy == 0.0:
        raise ValueError("cannot calibrate SNR of an identically-zero channel")
    denom = real.dims.n_f * real.dims.n_t * real.n_r * real.n_u
    return energy / (denom * db_to_lin(target_snr_db))


def add_awgn(signal: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise of per-sample variance sigma2."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    if sigma2 == 0.0:
        return signal.copy()
    scale = np.sqrt(sigma2 / 2.0)
    noise = scale * (rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape))
    return signal + noise


def lin_to_db(x: float) -> float:
    return 10.0 * np.log10(x)


def db_to_lin(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dump_realization(real: ChannelRealization, path: str) -> None:
    """Write a realization as a binary fixture.

    Header: magic, version, then n_f, n_t, n_r, n_u as little-endian uint32.
    Body: the h grid then the spatial covariances, row-major float64 with
    re/im interleaved.
    """
    with open(path, "wb") as f:
        f.write(_DUMP_MAGIC)
        f.write(struct.pack("<5I", _DUMP_VERSION, real.dims.n_f, real.dims.n_t, real.n_r, real.n_u))
        for arr in (real.h, real.r_spatial):
            inter = np.empty(arr.shape + (2,), dtype="<f8")
            inter[..., 0] = arr.real
            inter[..., 1] = arr.imag
            f.write(inter.tobytes())


def load_realization(path: str) -> ChannelRealization:
    """Read a realization written by dump_realization."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _DUMP_MAGIC:
            raise ValueError(f"not a channel dump: bad magic {magic!r}")
        version, n_f, n_t, n_r, n_u = struct.unpack("<5I", f.read(20))
        if version != _DUMP_VERSION:
            raise ValueError(f"unsupported channel dump version {version}")

        def read_complex(shape):
            count = int(np.prod(shape)) * 2
            flat = np.frombuffer(f.read(count * 8), dtype="<f8", count=count)
            inter = flat.reshape(shape + (2,))
            return (inter[..., 0] + 1j * inter[..., 1]).astype(np.complex128)

        h = read_complex((n_f, n_t, n_r, n_u))
        r_spatial = read_complex((n_u, n_r, n_r))
    return ChannelRealization(GridDims(n_f, n_t), h, r_spatial)
