"""LDPC construction, encoding, and sum-product decoding."""

import numpy as np
import pytest

from mudemap.codec import (
    check_update_pairwise,
    check_update_tanh,
    decode_codeword,
    ldpc_decode,
    ldpc_encode,
    make_regular_ldpc,
    export_parity,
    syndrome,
)
from mudemap.errors import ConfigurationError


@pytest.fixture(scope="module")
def code96():
    return make_regular_ldpc(96, seed=7)


class TestConstruction:
    def test_regular_degrees_n96(self, code96):
        h = code96.h_pc
        assert h.shape == (48, 96)
        assert np.all(h.sum(axis=0) == 3)
        assert np.all(h.sum(axis=1) == 6)

    def test_rate_matches_rank(self, code96):
        # GF(2) rank via the construction's own pivot count is cross-checked
        # against an independent elimination
        h = code96.h_pc.astype(np.uint8).copy()
        rank = 0
        for col in range(h.shape[1]):
            rows = np.nonzero(h[rank:, col])[0]
            if rows.size == 0:
                continue
            pivot = rank + rows[0]
            h[[rank, pivot]] = h[[pivot, rank]]
            mask = h[:, col].astype(bool)
            mask[rank] = False
            h[mask] ^= h[rank]
            rank += 1
            if rank == h.shape[0]:
                break
        assert abs(code96.rate - (96 - rank) / 96) < 1e-9
        if rank == 48:
            assert code96.rate == 0.5

    def test_no_length_four_cycles(self, code96):
        overlap = code96.h_pc.astype(int) @ code96.h_pc.T.astype(int)
        np.fill_diagonal(overlap, 0)
        assert overlap.max() <= 1

    def test_all_zero_word_satisfies_checks(self, code96):
        assert not syndrome(code96, np.zeros(96, dtype=np.uint8)).any()

    def test_deterministic_per_seed(self):
        a = make_regular_ldpc(96, seed=3).h_pc
        b = make_regular_ldpc(96, seed=3).h_pc
        c = make_regular_ldpc(96, seed=4).h_pc
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_odd_length_rejected(self):
        with pytest.raises(ConfigurationError):
            make_regular_ldpc(97)


class TestEncode:
    def test_zero_info_zero_codeword(self, code96):
        cw = ldpc_encode(code96, np.zeros(code96.k, dtype=np.uint8))
        assert not cw.any()

    def test_random_codewords_satisfy_syndrome(self, code96):
        rng = np.random.default_rng(0)
        info = rng.integers(0, 2, size=(50, code96.k), dtype=np.uint8)
        cw = ldpc_encode(code96, info)
        assert not syndrome(code96, cw).any()

    def test_systematic(self, code96):
        rng = np.random.default_rng(1)
        info = rng.integers(0, 2, size=code96.k, dtype=np.uint8)
        cw = ldpc_encode(code96, info)
        assert np.array_equal(cw[code96.info_cols], info)

    def test_linearity(self, code96):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 2, size=code96.k, dtype=np.uint8)
        b = rng.integers(0, 2, size=code96.k, dtype=np.uint8)
        assert np.array_equal(ldpc_encode(code96, a ^ b), ldpc_encode(code96, a) ^ ldpc_encode(code96, b))

    def test_wrong_length(self, code96):
        with pytest.raises(ConfigurationError):
            ldpc_encode(code96, np.zeros(10, dtype=np.uint8))


def _llrs_for(cw, magnitude=20.0):
    return magnitude * (1.0 - 2.0 * cw.astype(np.float64))


class TestDecode:
    def test_noiseless_single_iteration(self, code96):
        rng = np.random.default_rng(3)
        info = rng.integers(0, 2, size=code96.k, dtype=np.uint8)
        cw = ldpc_encode(code96, info)
        got, conv = ldpc_decode(code96, _llrs_for(cw), max_iters=1)
        assert conv
        assert np.array_equal(got, info)

    def test_single_flip_corrected_every_position(self, code96):
        rng = np.random.default_rng(4)
        info = rng.integers(0, 2, size=code96.k, dtype=np.uint8)
        cw = ldpc_encode(code96, info)
        llrs = np.tile(_llrs_for(cw), (96, 1))
        llrs[np.arange(96), np.arange(96)] *= -1.0
        got, conv = ldpc_decode(code96, llrs)
        assert conv.all()
        assert np.all(got == info)

    def test_all_zero_llrs_do_not_converge(self, code96):
        got, conv = ldpc_decode(code96, np.zeros(96), max_iters=10)
        assert not conv

    def test_converged_implies_zero_syndrome(self, code96):
        rng = np.random.default_rng(5)
        llrs = rng.normal(0.0, 2.0, size=(500, 96))
        full, conv = decode_codeword(code96, llrs, max_iters=30)
        if conv.any():
            assert not syndrome(code96, full[conv]).any()

    def test_check_rules_agree(self):
        rng = np.random.default_rng(6)
        msgs = rng.normal(0.0, 4.0, size=(200, 48, 6))
        a = check_update_tanh(msgs)
        b = check_update_pairwise(msgs)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_batch_shapes(self, code96):
        rng = np.random.default_rng(7)
        info = rng.integers(0, 2, size=(3, 5, code96.k), dtype=np.uint8)
        llrs = _llrs_for(ldpc_encode(code96, info))
        got, conv = ldpc_decode(code96, llrs)
        assert got.shape == (3, 5, code96.k)
        assert conv.shape == (3, 5)
        assert conv.all() and np.array_equal(got, info)


def test_export_parity_coordinate_list(code96, tmp_path):
    path = tmp_path / "h.txt"
    export_parity(code96, str(path))
    pairs = [tuple(map(int, line.split())) for line in path.read_text().splitlines()]
    rebuilt = np.zeros_like(code96.h_pc)
    for r, c in pairs:
        rebuilt[r, c] = 1
    assert np.array_equal(rebuilt, code96.h_pc)


def test_small_code_still_usable():
    code = make_regular_ldpc(16, seed=0)
    info = np.array([1, 0, 1, 0, 1, 1, 0, 0][: code.k], dtype=np.uint8)
    cw = ldpc_encode(code, info)
    assert not syndrome(code, cw).any()
