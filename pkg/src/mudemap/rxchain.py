"""Classical MU-MIMO receiver chain.

Per-pilot LMMSE channel estimation, nearest-pilot extension to data REs,
composite error covariance, noise whitening, LMMSE equalization with per-user
post-equalization error variances, and the Gaussian demapper producing one
LLR per transmitted bit. LLRs are clipped to +/-20.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .grid import PilotPattern, nearest_pilot_map
from .modem import Constellation

LLR_CLIP = 20.0


@dataclass
class ChannelEstimate:
    """Per-RE composite channel estimate with grid-constant noise statistics.

    hhat has shape (n_f, n_t, n_r, n_u). r_err is the composite estimation
    error covariance summed over users; r_eff = r_err + sigma2*I is the
    covariance of the effective noise seen by the equalizer.
    """

    hhat: np.ndarray
    r_err: np.ndarray
    r_eff: np.ndarray


@dataclass
class EqualizedOutput:
    """Equalized symbols and their error variances, user-first layout.

    xhat: (n_u, n_f, n_t) complex; r_x: (n_u, n_f, n_t) real, each entry the
    user's diagonal element of the post-equalization error covariance,
    guaranteed in (0, 1].
    """

    xhat: np.ndarray
    r_x: np.ndarray


def inv_sqrt_psd(r: np.ndarray) -> np.ndarray:
    """Inverse of the Hermitian PSD principal square root, eigenvalue-floored."""
    w, v = np.linalg.eigh(r)
    w = np.maximum(w, 1e-12)
    return (v / np.sqrt(w)) @ v.conj().T


def lmmse_pilot_estimate(
    y: np.ndarray, x_p: complex, r_s: np.ndarray, sigma2: float
) -> np.ndarray:
    """Single-user LMMSE channel estimate at a pilot RE.

    Returns conj(x_p) * r_s (r_s + sigma2 I)^-1 y for a received vector y.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    n_r = r_s.shape[0]
    gain = np.linalg.solve(r_s + sigma2 * np.eye(n_r), y)
    return np.conj(x_p) * (r_s @ gain)


def estimation_error_cov(r_s: np.ndarray, sigma2: float) -> np.ndarray:
    """Single-user pilot estimation error covariance r_s - r_s (r_s+s2 I)^-1 r_s."""
    n_r = r_s.shape[0]
    return r_s - r_s @ np.linalg.solve(r_s + sigma2 * np.eye(n_r), r_s)


def estimate_grid(
    rx: np.ndarray,
    pattern: PilotPattern,
    r_spatial: np.ndarray,
    sigma2: float,
) -> ChannelEstimate:
    """LMMSE estimates at pilot REs, copied to data REs from the nearest pilot.

    rx has shape (n_f, n_t, n_r); r_spatial holds one (n_r, n_r) covariance per
    user. The composite error covariance is the sum of the per-user pilot
    error covariances and is applied grid-wide.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    n_f, n_t, n_r = rx.shape
    n_u = pattern.n_u
    hhat = np.empty((n_f, n_t, n_r, n_u), dtype=np.complex128)
    r_err = np.zeros((n_r, n_r), dtype=np.complex128)
    eye = np.eye(n_r)
    for i in range(n_u):
        r_s = r_spatial[i]
        shrink = r_s @ np.linalg.inv(r_s + sigma2 * eye)
        pilots = pattern.pilot_array(i)
        y_p = rx[pilots[:, 0], pilots[:, 1]]  # (P, n_r)
        est_p = np.conj(pattern.pilot_values[i]) * (y_p @ shrink.T)
        hhat[..., i] = est_p[nearest_pilot_map(pattern, i)]
        r_err += r_s - shrink @ r_s
    r_eff = r_err + sigma2 * eye
    return ChannelEstimate(hhat, r_err, r_eff)


def perfect_estimate(real: ChannelRealization, sigma2: float) -> ChannelEstimate:
    """Genie estimate: the true channel with zero estimation error."""
    n_r = real.n_r
    return ChannelEstimate(real.h.copy(), np.zeros((n_r, n_r)), sigma2 * np.eye(n_r))


def whiten(y: np.ndarray, hhat: np.ndarray, r_eff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply the inverse square root of the effective-noise covariance.

    Accepts a single RE (y: (n_r,), hhat: (n_r, n_u)) or a full grid
    (y: (n_f, n_t, n_r), hhat: (n_f, n_t, n_r, n_u)).
    """
    w = inv_sqrt_psd(r_eff)
    y_w = np.einsum("ab,...b->...a", w, y)
    h_w = np.einsum("ab,...bu->...au", w, hhat)
    return y_w, h_w


def lmmse_equalize(h_w: np.ndarray, y_w: np.ndarray) -> np.ndarray:
    """LMMSE symbol estimates H^H (H H^H + I)^-1 y on whitened inputs.

    Works per RE ((n_r, n_u), (n_r,)) or on grids with leading (n_f, n_t).
    """
    gram = np.einsum("...au,...bu->...ab", h_w, np.conj(h_w))
    gram = gram + np.eye(h_w.shape[-2])
    z = np.linalg.solve(gram, y_w[..., None])[..., 0]
    return np.einsum("...au,...a->...u", np.conj(h_w), z)


def posteq_cov(h_w: np.ndarray) -> np.ndarray:
    """Post-equalization error covariance I - H^H (H H^H + I)^-1 H."""
    gram = np.einsum("...au,...bu->...ab", h_w, np.conj(h_w))
    gram = gram + np.eye(h_w.shape[-2])
    m = np.linalg.solve(gram, h_w)
    return np.eye(h_w.shape[-1]) - np.einsum("...ai,...aj->...ij", np.conj(h_w), m)


def equalize_grid(rx: np.ndarray, est: ChannelEstimate) -> EqualizedOutput:
    """Whiten, equalize, and collect per-user error variances for a grid."""
    y_w, h_w = whiten(rx, est.hhat, est.r_eff)
    xhat = lmmse_equalize(h_w, y_w)  # (n_f, n_t, n_u)
    r_z = posteq_cov(h_w)  # (n_f, n_t, n_u, n_u)
    r_x = np.real(np.diagonal(r_z, axis1=-2, axis2=-1))
    return EqualizedOutput(
        np.ascontiguousarray(np.moveaxis(xhat, -1, 0)),
        np.ascontiguousarray(np.moveaxis(r_x, -1, 0)),
    )


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def gaussian_demap(xhat: np.ndarray, r: np.ndarray, const: Constellation) -> np.ndarray:
    """Per-bit LLRs under a Gaussian error assumption, clipped to +/-20.

    xhat and r may be scalars or broadcastable arrays; the result gains a
    trailing axis of length K. Positive LLR favors bit 0.
    """
    xhat = np.asarray(xhat)
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise ValueError("post-equalization variance must be > 0")
    metric = -np.abs(xhat[..., None] - const.points) ** 2 / r[..., None]  # (..., M)
    k = const.bits_per_symbol
    out = np.empty(xhat.shape + (k,), dtype=np.float64)
    for j in range(k):
        zero = const.labels[:, j] == 0
        out[..., j] = _logsumexp(metric[..., zero], -1) - _logsumexp(metric[..., ~zero], -1)
    return np.clip(out, -LLR_CLIP, LLR_CLIP)


def demap_grid(eq: EqualizedOutput, const: Constellation) -> np.ndarray:
    """LLR grid (n_u, n_f, n_t, K) for an equalized grid."""
    return gaussian_demap(eq.xhat, eq.r_x, const)
