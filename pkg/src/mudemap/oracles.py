"""Brute-force cross-checks of the receiver chain against independent
dense-linear-algebra routes, runnable from the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modem import qam_constellation
from .rxchain import (
    gaussian_demap,
    inv_sqrt_psd,
    lmmse_equalize,
    lmmse_pilot_estimate,
    posteq_cov,
    whiten,
)


@dataclass
class OracleResult:
    name: str
    max_err: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_err < self.tol


def _rand_psd(rng, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T / n + 0.5 * np.eye(n)


def _crandn(rng, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b))) / scale


def linear_algebra_oracles(n_instances: int = 100, seed: int = 0) -> list[OracleResult]:
    """Estimator/whitener/equalizer vs pseudo-inverse-based evaluation."""
    rng = np.random.default_rng(seed)
    errs = {"lmmse_pilot_estimate": 0.0, "whiten": 0.0, "lmmse_equalize": 0.0, "posteq_cov": 0.0}
    for _ in range(n_instances):
        n_r = int(rng.integers(1, 5))
        n_u = int(rng.integers(1, 5))
        r_s = _rand_psd(rng, n_r)
        sigma2 = float(rng.uniform(0.05, 2.0))
        y = _crandn(rng, n_r)
        x_p = np.exp(2j * np.pi * rng.uniform())

        est = lmmse_pilot_estimate(y, x_p, r_s, sigma2)
        ref = np.conj(x_p) * r_s @ np.linalg.pinv(r_s + sigma2 * np.eye(n_r)) @ y
        errs["lmmse_pilot_estimate"] = max(errs["lmmse_pilot_estimate"], _rel(est, ref))

        r_w = _rand_psd(rng, n_r)
        h = _crandn(rng, n_r, n_u)
        y_w, h_w = whiten(y, h, r_w)
        # independent route: diagonalize, invert the sqrt eigenvalue by eigenvalue
        w_eig, v = np.linalg.eigh(r_w)
        w_ref = v @ np.diag(1.0 / np.sqrt(w_eig)) @ v.conj().T
        errs["whiten"] = max(errs["whiten"], _rel(y_w, w_ref @ y), _rel(h_w, w_ref @ h))

        xhat = lmmse_equalize(h_w, y_w)
        gram = h_w @ h_w.conj().T + np.eye(n_r)
        ref_x = h_w.conj().T @ np.linalg.pinv(gram) @ y_w
        errs["lmmse_equalize"] = max(errs["lmmse_equalize"], _rel(xhat, ref_x))

        r_z = posteq_cov(h_w)
        ref_rz = np.eye(n_u) - h_w.conj().T @ np.linalg.pinv(gram) @ h_w
        errs["posteq_cov"] = max(errs["posteq_cov"], _rel(r_z, ref_rz))
    return [OracleResult(k, v, 1e-10) for k, v in errs.items()]


def brute_force_llr(xhat: np.ndarray, r: np.ndarray, const) -> np.ndarray:
    """Literal log of summed exponentials over the constellation, clipped."""
    xhat = np.asarray(xhat)
    r = np.asarray(r, dtype=np.float64)
    k = const.bits_per_symbol
    out = np.empty(xhat.shape + (k,))
    for j in range(k):
        num = const.bit_sets(j, 0)
        den = const.bit_sets(j, 1)
        mn = -np.abs(xhat[..., None] - num) ** 2 / r[..., None]
        md = -np.abs(xhat[..., None] - den) ** 2 / r[..., None]
        shift = np.maximum(mn.max(axis=-1), md.max(axis=-1))
        out[..., j] = np.log(np.exp(mn - shift[..., None]).sum(axis=-1)) - np.log(
            np.exp(md - shift[..., None]).sum(axis=-1)
        )
    return np.clip(out, -20.0, 20.0)


def demapper_oracles(n_points: int = 10000, seed: int = 0) -> list[OracleResult]:
    """Gaussian demapper vs the brute-force sum, plus the QPSK closed form."""
    rng = np.random.default_rng(seed)
    results = []
    for k in (2, 4):
        const = qam_constellation(k)
        xhat = _crandn(rng, n_points) * 1.5
        r = rng.uniform(0.02, 1.0, n_points)
        got = gaussian_demap(xhat, r, const)
        ref = brute_force_llr(xhat, r, const)
        results.append(OracleResult(f"gaussian_demap_qam{2**k}", float(np.max(np.abs(got - ref))), 1e-9))
    const = qam_constellation(2)
    xhat = _crandn(rng, 2000) * 0.5
    r = rng.uniform(0.3, 1.0, 2000)
    got = gaussian_demap(xhat, r, const)
    closed = np.stack(
        [2.0 * np.sqrt(2.0) * xhat.real / r, 2.0 * np.sqrt(2.0) * xhat.imag / r], axis=-1
    )
    keep = np.all(np.abs(closed) < 19.5, axis=-1)
    err = float(np.max(np.abs(got[keep] - closed[keep])))
    results.append(OracleResult("gaussian_demap_qpsk_closed_form", err, 1e-9))
    return results


def whitening_property(n_draws: int = 100000, n_r: int = 4, seed: int = 0) -> OracleResult:
    """Empirical covariance of whitened synthetic noise vs the identity."""
    rng = np.random.default_rng(seed)
    r_w = _rand_psd(rng, n_r)
    chol = np.linalg.cholesky(r_w)
    w = _crandn(rng, n_draws, n_r) @ chol.T
    w_white = w @ inv_sqrt_psd(r_w).T
    emp = w_white.conj().T @ w_white / n_draws
    err = float(np.linalg.norm(emp - np.eye(n_r))) / float(np.linalg.norm(np.eye(n_r)))
    return OracleResult("whitening_empirical_cov", err, 0.05)


def run_oracle_suite(seed: int = 0) -> list[OracleResult]:
    results = linear_algebra_oracles(seed=seed)
    results += demapper_oracles(seed=seed)
    results.append(whitening_property(seed=seed))
    return results
