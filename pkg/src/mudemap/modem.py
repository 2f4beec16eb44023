"""Constellations, bit-to-symbol mapping, and tx grid assembly.

Square Gray-labeled QAM normalized to unit mean energy. The first half of a
symbol's bits selects the in-phase level, the second half the quadrature
level; in each half the leading bit is the sign bit with 0 mapping to the
positive side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import PilotPattern


@dataclass(frozen=True)
class Constellation:
    """2^K unit-mean-energy points; labels[p] is the K-bit label of point p."""

    bits_per_symbol: int
    points: np.ndarray  # (2^K,) complex, indexed by integer label
    labels: np.ndarray  # (2^K, K) uint8, labels[p] spells the bits of p

    @property
    def size(self) -> int:
        return self.points.size

    def bit_sets(self, bit: int, value: int) -> np.ndarray:
        """Points whose label has `value` in position `bit`."""
        return self.points[self.labels[:, bit] == value]


def _gray_pam(n_bits: int) -> np.ndarray:
    """Gray-labeled PAM levels, indexed by integer label, descending from +."""
    n = 1 << n_bits
    levels = np.arange(n - 1, -n, -2, dtype=np.float64)  # +(n-1), ..., -(n-1)
    gray = np.arange(n) ^ (np.arange(n) >> 1)
    out = np.empty(n)
    out[gray] = levels
    return out


def qam_constellation(bits_per_symbol: int) -> Constellation:
    """Gray square QAM for K=2 (QPSK) or K=4 (16-QAM), unit mean energy."""
    if bits_per_symbol not in (2, 4):
        raise ConfigurationError(f"unsupported bits per symbol: {bits_per_symbol}")
    k_axis = bits_per_symbol // 2
    pam = _gray_pam(k_axis)
    m = 1 << bits_per_symbol
    idx = np.arange(m)
    i_label = idx >> k_axis
    q_label = idx & ((1 << k_axis) - 1)
    points = pam[i_label] + 1j * pam[q_label]
    points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    labels = ((idx[:, None] >> np.arange(bits_per_symbol - 1, -1, -1)) & 1).astype(np.uint8)
    return Constellation(bits_per_symbol, points, labels)


def map_bits(bits: np.ndarray, const: Constellation) -> np.ndarray:
    """Map a (..., K) bit array to complex symbols of shape (...)."""
    k = const.bits_per_symbol
    if bits.shape[-1] != k:
        raise ConfigurationError(f"last axis must be {k} bits, got shape {bits.shape}")
    weights = 1 << np.arange(k - 1, -1, -1)
    idx = np.tensordot(bits.astype(np.int64), weights, axes=([-1], [0]))
    return const.points[idx]


def hard_demap(symbols: np.ndarray, const: Constellation) -> np.ndarray:
    """Nearest-point decision; returns bits of shape symbols.shape + (K,)."""
    dist = np.abs(symbols[..., None] - const.points) ** 2
    idx = np.argmin(dist, axis=-1)
    return const.labels[idx]


def assemble_tx_grid(symbols: np.ndarray, pattern: PilotPattern) -> np.ndarray:
    """Overlay pilots on the per-user symbol grid.

    symbols has shape (n_u, n_f, n_t). On user i's pilot REs, user i sends its
    pilot value and every other user is muted, so each pilot RE carries a
    single-user transmission; data REs are passed through unchanged.
    """
    n_u, n_f, n_t = symbols.shape
    if n_u != pattern.n_u or (n_f, n_t) != (pattern.dims.n_f, pattern.dims.n_t):
        raise ConfigurationError(
            f"symbol grid {symbols.shape} does not match pattern "
            f"({pattern.n_u}, {pattern.dims.n_f}, {pattern.dims.n_t})"
        )
    out = symbols.astype(np.complex128, copy=True)
    for i in range(n_u):
        pil = pattern.pilot_array(i)
        out[:, pil[:, 0], pil[:, 1]] = 0.0
        out[i, pil[:, 0], pil[:, 1]] = pattern.pilot_values[i]
    return out
