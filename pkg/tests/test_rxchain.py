"""Receiver chain: LMMSE estimation, whitening, equalization, demapping."""

import numpy as np
import pytest

from mudemap.channel import ChannelModelCfg, gen_channel, spatial_cov
from mudemap.grid import GridDims, make_pilot_pattern
from mudemap.modem import hard_demap, qam_constellation
from mudemap.rxchain import (
    equalize_grid,
    estimate_grid,
    estimation_error_cov,
    gaussian_demap,
    inv_sqrt_psd,
    lmmse_equalize,
    lmmse_pilot_estimate,
    perfect_estimate,
    posteq_cov,
    whiten,
)


def _rng(seed=0):
    return np.random.default_rng(seed)


def _rand_psd(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a @ a.conj().T / n + 0.25 * np.eye(n)


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


class TestPilotEstimate:
    def test_scalar_case(self):
        got = lmmse_pilot_estimate(np.array([2.0 + 0j]), 1.0, np.array([[1.0 + 0j]]), 1.0)
        assert np.allclose(got, [1.0])

    def test_vanishing_noise_inverts_pilot(self):
        rng = _rng(1)
        y = _crandn(rng, 3)
        x_p = np.exp(1j * 0.7)
        got = lmmse_pilot_estimate(y, x_p, np.eye(3, dtype=complex), 1e-14)
        assert np.allclose(got, np.conj(x_p) * y, atol=1e-10)

    def test_matches_dense_solve_oracle(self):
        rng = _rng(2)
        for _ in range(50):
            r_s = _rand_psd(rng, 2)
            y = _crandn(rng, 2)
            s2 = float(rng.uniform(0.1, 2.0))
            x_p = np.exp(2j * np.pi * rng.uniform())
            got = lmmse_pilot_estimate(y, x_p, r_s, s2)
            ref, *_ = np.linalg.lstsq(r_s + s2 * np.eye(2), y, rcond=None)
            ref = np.conj(x_p) * r_s @ ref
            assert np.max(np.abs(got - ref)) < 1e-12

    def test_invalid_sigma2(self):
        with pytest.raises(ValueError):
            lmmse_pilot_estimate(np.zeros(2, complex), 1.0, np.eye(2, dtype=complex), 0.0)


class TestEstimateGrid:
    def test_block_fading_near_noiseless_recovers_channel(self):
        cfg = ChannelModelCfg(n_r=3, n_u=2, ar_time=1.0, n_taps=1, rho_rx=0.3)
        dims = GridDims(8, 14)
        pattern = make_pilot_pattern(dims, 2, (2, 11))
        real = gen_channel(cfg, dims, _rng(3))
        tx = np.zeros((2, 8, 14), dtype=complex)
        from mudemap.modem import assemble_tx_grid

        tx = assemble_tx_grid(tx, pattern)
        rx = np.einsum("ftru,uft->ftr", real.h, tx)  # noiseless pilots
        r_s = np.stack([spatial_cov(cfg, i) for i in range(2)])
        est = estimate_grid(rx, pattern, r_s, 1e-12)
        assert np.max(np.abs(est.hhat - real.h)) < 1e-4

    def test_scalar_error_covariance_sums_over_users(self):
        pattern = make_pilot_pattern(GridDims(4, 14), 4, (2,))
        r_s = np.ones((4, 1, 1), dtype=complex)
        rx = _crandn(_rng(4), 4, 14, 1)
        est = estimate_grid(rx, pattern, r_s, 1.0)
        assert np.allclose(estimation_error_cov(r_s[0], 1.0), 0.5)
        assert np.allclose(est.r_err, 2.0)
        assert np.allclose(est.r_eff, 3.0)

    def test_data_res_copy_some_pilot_estimate(self):
        cfg = ChannelModelCfg(n_r=2, n_u=2)
        dims = GridDims(6, 10)
        pattern = make_pilot_pattern(dims, 2, (2, 7))
        rng = _rng(5)
        rx = _crandn(rng, 6, 10, 2)
        r_s = np.stack([spatial_cov(cfg, i) for i in range(2)])
        est = estimate_grid(rx, pattern, r_s, 0.5)
        for user in range(2):
            pil = pattern.pilot_array(user)
            pilot_estimates = est.hhat[pil[:, 0], pil[:, 1], :, user]
            for m in range(6):
                for n in range(10):
                    h = est.hhat[m, n, :, user]
                    assert np.any(np.all(np.isclose(pilot_estimates, h, atol=1e-14), axis=1))

    def test_effective_noise_is_error_plus_sigma2(self):
        cfg = ChannelModelCfg(n_r=3, n_u=2, rho_rx=0.6)
        pattern = make_pilot_pattern(GridDims(6, 10), 2, (2,))
        rx = _crandn(_rng(6), 6, 10, 3)
        r_s = np.stack([spatial_cov(cfg, i) for i in range(2)])
        est = estimate_grid(rx, pattern, r_s, 0.3)
        assert np.allclose(est.r_eff, est.r_err + 0.3 * np.eye(3))
        assert np.linalg.eigvalsh(est.r_err).min() > -1e-12


class TestWhiten:
    def test_perfect_estimation_scales_by_sigma(self):
        rng = _rng(7)
        y = _crandn(rng, 3)
        h = _crandn(rng, 3, 2)
        sigma2 = 0.25
        y_w, h_w = whiten(y, h, sigma2 * np.eye(3))
        assert np.allclose(y_w, y / 0.5)
        assert np.allclose(h_w, h / 0.5)

    def test_identity_covariance_is_identity_transform(self):
        rng = _rng(8)
        y = _crandn(rng, 4)
        h = _crandn(rng, 4, 2)
        y_w, h_w = whiten(y, h, np.eye(4))
        assert np.allclose(y_w, y) and np.allclose(h_w, h)

    def test_empirical_whitened_covariance(self):
        rng = _rng(9)
        r_w = _rand_psd(rng, 3)
        chol = np.linalg.cholesky(r_w)
        w = _crandn(rng, 20000, 3) @ chol.T
        w_white = np.einsum("ab,nb->na", inv_sqrt_psd(r_w), w)
        emp = w_white.T @ w_white.conj() / w.shape[0]
        rel = np.linalg.norm(emp - np.eye(3)) / np.linalg.norm(np.eye(3))
        assert rel < 0.05


class TestEqualize:
    def test_scalar_mmse_shrinkage(self):
        h = np.array([[np.sqrt(3.0) + 0j]])
        y = np.array([np.sqrt(3.0) + 0j])
        assert np.allclose(lmmse_equalize(h, y), [0.75])

    def test_zero_channel_gives_prior_mean(self):
        y = _crandn(_rng(10), 3)
        assert np.allclose(lmmse_equalize(np.zeros((3, 2), complex), y), 0.0)

    def test_push_through_identity(self):
        rng = _rng(11)
        for _ in range(25):
            n_r, n_u = rng.integers(1, 5), rng.integers(1, 5)
            h = _crandn(rng, n_r, n_u)
            y = _crandn(rng, n_r)
            a = lmmse_equalize(h, y)
            b = np.linalg.solve(h.conj().T @ h + np.eye(n_u), h.conj().T @ y)
            assert np.max(np.abs(a - b)) < 1e-10


class TestPosteqCov:
    def test_scalar_value(self):
        h = np.array([[np.sqrt(3.0) + 0j]])
        assert np.allclose(posteq_cov(h), [[0.25]])

    def test_zero_channel_gives_prior_energy(self):
        assert np.allclose(posteq_cov(np.zeros((3, 2), complex)), np.eye(2))

    def test_eigenvalues_in_unit_interval(self):
        rng = _rng(12)
        for _ in range(30):
            h = _crandn(rng, 4, 3) * rng.uniform(0.1, 3.0)
            ev = np.linalg.eigvalsh(posteq_cov(h))
            assert ev.min() > 0.0 and ev.max() <= 1.0 + 1e-12

    def test_error_covariance_monte_carlo(self):
        # for fixed whitened channel, cov(x - xhat) over noise converges to
        # the predicted post-equalization covariance
        rng = _rng(13)
        h = _crandn(rng, 4, 2)
        r_z = posteq_cov(h)
        const = qam_constellation(2)
        n = 100000
        bits = rng.integers(0, 2, size=(n, 2, 2), dtype=np.uint8)
        from mudemap.modem import map_bits

        x = map_bits(bits, const)  # (n, 2) unit-energy symbols
        noise = _crandn(rng, n, 4)
        y = x @ h.T + noise
        xhat = lmmse_equalize(h[None].repeat(n, axis=0), y)
        e = x - xhat
        emp = e.T @ e.conj() / n
        rel = np.linalg.norm(emp - r_z) / np.linalg.norm(r_z)
        assert rel < 0.05


class TestGaussianDemap:
    def test_origin_gives_zero_llrs(self):
        const = qam_constellation(2)
        assert np.allclose(gaussian_demap(0.0 + 0.0j, 0.5, const), 0.0)

    def test_qpsk_closed_form_values(self):
        const = qam_constellation(2)
        got = gaussian_demap(0.7 + 0.1j, 0.5, const)
        assert np.allclose(got, [3.959797974644666, 0.565685424949238], atol=1e-12)

    def test_16qam_matches_brute_force(self):
        const = qam_constellation(4)
        rng = _rng(14)
        xhat = _crandn(rng, 500) * 1.5
        r = rng.uniform(0.05, 1.0, 500)
        got = gaussian_demap(xhat, r, const)
        # literal sum over the constellation, stabilized independently
        ref = np.empty_like(got)
        for j in range(4):
            num = const.bit_sets(j, 0)
            den = const.bit_sets(j, 1)
            a = -np.abs(xhat[:, None] - num) ** 2 / r[:, None]
            b = -np.abs(xhat[:, None] - den) ** 2 / r[:, None]
            m = np.maximum(a.max(1), b.max(1))
            ref[:, j] = np.log(np.exp(a - m[:, None]).sum(1)) - np.log(
                np.exp(b - m[:, None]).sum(1)
            )
        ref = np.clip(ref, -20, 20)
        assert np.max(np.abs(got - ref)) < 1e-9

    def test_llrs_clipped(self):
        const = qam_constellation(2)
        got = gaussian_demap(3.0 + 3.0j, 0.01, const)
        assert np.all(got == 20.0)

    def test_sign_agrees_with_nearest_symbol_qpsk(self):
        const = qam_constellation(2)
        grid = np.linspace(-1.5, 1.5, 41)
        xhat = (grid[:, None] + 1j * grid[None, :]).ravel()
        for r in (0.1, 0.5, 1.0):
            llr = gaussian_demap(xhat, np.full(xhat.shape, r), const)
            hard_bits = hard_demap(xhat, const)
            sig = np.abs(llr) > 1e-9
            assert np.array_equal((llr < 0)[sig], (hard_bits == 1)[sig])

    def test_invalid_variance(self):
        const = qam_constellation(2)
        with pytest.raises(ValueError):
            gaussian_demap(0.1 + 0j, 0.0, const)


class TestGridConsistency:
    def test_grid_ops_match_per_re_loop(self):
        cfg = ChannelModelCfg(n_r=3, n_u=2)
        dims = GridDims(5, 6)
        pattern = make_pilot_pattern(dims, 2, (1, 4))
        rng = _rng(15)
        real = gen_channel(cfg, dims, rng)
        rx = _crandn(rng, 5, 6, 3)
        r_s = np.stack([spatial_cov(cfg, i) for i in range(2)])
        est = estimate_grid(rx, pattern, r_s, 0.4)
        eq = equalize_grid(rx, est)
        for m in range(5):
            for n in range(6):
                y_w, h_w = whiten(rx[m, n], est.hhat[m, n], est.r_eff)
                xh = lmmse_equalize(h_w, y_w)
                rz = posteq_cov(h_w)
                assert np.allclose(eq.xhat[:, m, n], xh, atol=1e-12)
                assert np.allclose(eq.r_x[:, m, n], np.real(np.diag(rz)), atol=1e-12)

    def test_perfect_estimate_matches_truth(self):
        cfg = ChannelModelCfg(n_r=2, n_u=2)
        real = gen_channel(cfg, GridDims(4, 4), _rng(16))
        est = perfect_estimate(real, 0.3)
        assert np.array_equal(est.hhat, real.h)
        assert np.allclose(est.r_err, 0.0)
        assert np.allclose(est.r_eff, 0.3 * np.eye(2))
