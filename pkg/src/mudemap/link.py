"""One-slot link plumbing shared by the trainer and the evaluation harness.

Bundles the grid, pilot pattern, channel model, and constellation, and runs
the transmit side plus the nearest-pilot receiver front end that feeds every
demapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelModelCfg, ChannelRealization, add_awgn, spatial_cov
from .grid import GridDims, PilotPattern, make_pilot_pattern
from .modem import Constellation, assemble_tx_grid, map_bits, qam_constellation
from .rxchain import EqualizedOutput, equalize_grid, estimate_grid, perfect_estimate


@dataclass(frozen=True)
class LinkConfig:
    pattern: PilotPattern
    channel: ChannelModelCfg
    const: Constellation

    @property
    def dims(self) -> GridDims:
        return self.pattern.dims

    @property
    def n_u(self) -> int:
        return self.pattern.n_u

    @property
    def n_r(self) -> int:
        return self.channel.n_r

    @property
    def bits_per_symbol(self) -> int:
        return self.const.bits_per_symbol

    def spatial_covs(self) -> np.ndarray:
        return np.stack([spatial_cov(self.channel, i) for i in range(self.n_u)])


def make_link(
    n_f: int,
    n_t: int,
    n_u: int,
    n_r: int,
    pilot_times: tuple[int, ...] = (2, 11),
    bits_per_symbol: int = 2,
    **channel_kwargs,
) -> LinkConfig:
    dims = GridDims(n_f, n_t)
    pattern = make_pilot_pattern(dims, n_u, pilot_times)
    chan = ChannelModelCfg(n_r=n_r, n_u=n_u, **channel_kwargs)
    return LinkConfig(pattern, chan, qam_constellation(bits_per_symbol))


def draw_bit_grid(link: LinkConfig, rng: np.random.Generator) -> np.ndarray:
    """Equiprobable payload bits, shape (n_u, n_f, n_t, K)."""
    dims = link.dims
    return rng.integers(
        0, 2, size=(link.n_u, dims.n_f, dims.n_t, link.bits_per_symbol), dtype=np.uint8
    )


def transmit(link: LinkConfig, bits: np.ndarray) -> np.ndarray:
    """Bits -> symbols -> pilot overlay; returns the (n_u, n_f, n_t) tx grid."""
    return assemble_tx_grid(map_bits(bits, link.const), link.pattern)


def propagate(
    real: ChannelRealization, tx: np.ndarray, sigma2: float, rng: np.random.Generator
) -> np.ndarray:
    """Apply the per-RE channel and add noise; returns rx grid (n_f, n_t, n_r)."""
    clean = np.einsum("ftru,uft->ftr", real.h, tx)
    return add_awgn(clean, sigma2, rng)


def np_frontend(link: LinkConfig, rx: np.ndarray, sigma2: float) -> EqualizedOutput:
    """Nearest-pilot estimation, whitening, and LMMSE equalization."""
    est = estimate_grid(rx, link.pattern, link.spatial_covs(), sigma2)
    return equalize_grid(rx, est)


def genie_frontend(real: ChannelRealization, rx: np.ndarray, sigma2: float) -> EqualizedOutput:
    """Same chain but with the true channel and zero estimation error."""
    return equalize_grid(rx, perfect_estimate(real, sigma2))
