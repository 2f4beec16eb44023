"""Constellations, bit mapping, and tx grid assembly."""

import numpy as np
import pytest

from mudemap.errors import ConfigurationError
from mudemap.grid import GridDims, make_pilot_pattern
from mudemap.modem import assemble_tx_grid, hard_demap, map_bits, qam_constellation


class TestConstellation:
    def test_qpsk_equal_energy_points(self):
        const = qam_constellation(2)
        assert const.size == 4
        assert np.allclose(np.abs(const.points), 1.0, atol=1e-12)

    def test_16qam_unit_mean_energy(self):
        const = qam_constellation(4)
        assert const.size == 16
        assert abs(np.mean(np.abs(const.points) ** 2) - 1.0) < 1e-12

    def test_labels_bijective(self):
        for k in (2, 4):
            labels = qam_constellation(k).labels
            as_ints = {int("".join(map(str, row)), 2) for row in labels}
            assert as_ints == set(range(2**k))

    def test_gray_lattice_neighbors_differ_in_one_bit(self):
        const = qam_constellation(4)
        # rebuild the lattice positions from the point coordinates
        levels = np.unique(np.round(const.points.real, 9))
        pos = {
            p: (np.searchsorted(levels, round(c.real, 9)), np.searchsorted(levels, round(c.imag, 9)))
            for p, c in enumerate(const.points)
        }
        by_pos = {v: k for k, v in pos.items()}
        for (i, q), p in by_pos.items():
            for di, dq in ((1, 0), (0, 1)):
                nb = by_pos.get((i + di, q + dq))
                if nb is not None:
                    diff = np.sum(const.labels[p] != const.labels[nb])
                    assert diff == 1

    def test_qpsk_sign_convention(self):
        # bit 0 selects the real-axis sign, bit 1 the imaginary, 0 -> positive
        const = qam_constellation(2)
        sym = map_bits(np.array([0, 0], dtype=np.uint8), const)
        assert sym.real > 0 and sym.imag > 0
        sym = map_bits(np.array([1, 0], dtype=np.uint8), const)
        assert sym.real < 0 and sym.imag > 0

    def test_unsupported_order(self):
        with pytest.raises(ConfigurationError):
            qam_constellation(3)


class TestMapBits:
    def test_all_zero_bits_map_to_label_zero_point(self):
        const = qam_constellation(2)
        bits = np.zeros((3, 4, 5, 2), dtype=np.uint8)
        syms = map_bits(bits, const)
        assert np.all(syms == const.points[0])

    def test_round_trip_exhaustive(self):
        for k in (2, 4):
            const = qam_constellation(k)
            bits = const.labels.copy()
            syms = map_bits(bits, const)
            assert np.array_equal(hard_demap(syms, const), bits)

    def test_pointwise_permutation_property(self):
        const = qam_constellation(4)
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, size=(2, 6, 3, 4), dtype=np.uint8)
        syms = map_bits(bits, const)
        perm = rng.permutation(6)
        assert np.array_equal(map_bits(bits[:, perm], const), syms[:, perm])

    def test_mean_energy_over_random_bits(self):
        const = qam_constellation(4)
        rng = np.random.default_rng(1)
        bits = rng.integers(0, 2, size=(250000, 4), dtype=np.uint8)
        syms = map_bits(bits, const)
        assert abs(np.mean(np.abs(syms) ** 2) - 1.0) < 0.01

    def test_shape_mismatch(self):
        const = qam_constellation(2)
        with pytest.raises(ConfigurationError):
            map_bits(np.zeros((3, 4), dtype=np.uint8), const)


class TestAssembleTxGrid:
    def test_pilot_re_single_user_transmission(self):
        pattern = make_pilot_pattern(GridDims(8, 14), 4, (2, 11))
        const = qam_constellation(2)
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, size=(4, 8, 14, 2), dtype=np.uint8)
        grid = assemble_tx_grid(map_bits(bits, const), pattern)
        # user 0's pilot at (0, 2): everyone else muted there
        col = grid[:, 0, 2]
        assert col[0] == pattern.pilot_values[0]
        assert np.all(col[1:] == 0.0)

    def test_data_symbol_count(self):
        pattern = make_pilot_pattern(GridDims(8, 14), 4, (2, 11))
        const = qam_constellation(2)
        bits = np.ones((4, 8, 14, 2), dtype=np.uint8)
        grid = assemble_tx_grid(map_bits(bits, const), pattern)
        n_pilot_res = int(pattern.pilot_mask().sum())
        assert n_pilot_res == 16
        data_sym = map_bits(np.ones(2, dtype=np.uint8), const)
        per_user_data = [(grid[i] == data_sym).sum() for i in range(4)]
        assert per_user_data == [8 * 14 - n_pilot_res] * 4

    def test_data_res_untouched(self):
        pattern = make_pilot_pattern(GridDims(8, 14), 2, (2,))
        const = qam_constellation(2)
        rng = np.random.default_rng(3)
        syms = map_bits(rng.integers(0, 2, size=(2, 8, 14, 2), dtype=np.uint8), const)
        grid = assemble_tx_grid(syms, pattern)
        dm = pattern.data_mask()
        assert np.array_equal(grid[:, dm], syms[:, dm])

    def test_shape_mismatch(self):
        pattern = make_pilot_pattern(GridDims(8, 14), 2, (2,))
        with pytest.raises(ConfigurationError):
            assemble_tx_grid(np.zeros((3, 8, 14), dtype=complex), pattern)

    def test_empty_pilot_set_is_unconstructible(self):
        # the error path guarding assembly: a pattern with no pilots cannot exist
        from mudemap.grid import PilotPattern

        with pytest.raises(ConfigurationError):
            PilotPattern(GridDims(4, 4), 1, (frozenset(),))
