"""Pilot pattern construction and nearest-pilot lookup."""

import numpy as np
import pytest

from mudemap.errors import ConfigurationError
from mudemap.grid import (
    GridDims,
    PilotPattern,
    REIndex,
    make_pilot_pattern,
    nearest_pilot,
    nearest_pilot_map,
)


def _pattern_from_sets(dims, sets):
    return PilotPattern(dims, len(sets), tuple(frozenset(REIndex(m, n) for m, n in s) for s in sets))


class TestMakePilotPattern:
    def test_comb_user0_coordinates(self):
        pat = make_pilot_pattern(GridDims(8, 14), 4, (2, 11))
        expect = {REIndex(0, 2), REIndex(4, 2), REIndex(0, 11), REIndex(4, 11)}
        assert pat.assignments[0] == expect

    def test_one_pilot_per_user_covers_symbol(self):
        pat = make_pilot_pattern(GridDims(4, 14), 4, (2,))
        assert all(len(s) == 1 for s in pat.assignments)
        union = set().union(*pat.assignments)
        assert union == {REIndex(m, 2) for m in range(4)}

    def test_single_user_owns_whole_symbol(self):
        pat = make_pilot_pattern(GridDims(6, 14), 1, (0,))
        assert pat.assignments[0] == {REIndex(m, 0) for m in range(6)}

    def test_disjointness_small_dims(self):
        for n_f in (4, 5, 8):
            for n_u in (1, 2, 4):
                pat = make_pilot_pattern(GridDims(n_f, 14), n_u, (2, 11))
                for i in range(n_u):
                    for j in range(i + 1, n_u):
                        assert not (pat.assignments[i] & pat.assignments[j])

    def test_every_user_has_a_pilot(self):
        pat = make_pilot_pattern(GridDims(24, 14), 4, (2, 11))
        assert all(len(s) >= 1 for s in pat.assignments)

    def test_infeasible_when_fewer_subcarriers_than_users(self):
        with pytest.raises(ConfigurationError):
            make_pilot_pattern(GridDims(3, 14), 4, (2,))

    def test_pilot_symbol_out_of_range(self):
        with pytest.raises(ConfigurationError):
            make_pilot_pattern(GridDims(8, 14), 2, (14,))

    def test_unit_magnitude_pilot_values(self):
        pat = make_pilot_pattern(GridDims(8, 14), 2, (2,))
        assert all(abs(abs(v) - 1.0) < 1e-12 for v in pat.pilot_values)
        with pytest.raises(ConfigurationError):
            make_pilot_pattern(GridDims(8, 14), 2, (2,), pilot_values=(0.5, 1.0))


class TestPilotPatternInvariants:
    def test_empty_pilot_set_rejected(self):
        with pytest.raises(ConfigurationError):
            _pattern_from_sets(GridDims(4, 4), [set(), {(0, 0)}])

    def test_overlapping_sets_rejected(self):
        with pytest.raises(ConfigurationError):
            _pattern_from_sets(GridDims(4, 4), [{(0, 0)}, {(0, 0)}])

    def test_pilot_outside_grid_rejected(self):
        with pytest.raises(ConfigurationError):
            _pattern_from_sets(GridDims(4, 4), [{(4, 0)}])

    def test_masks_are_complementary(self):
        pat = make_pilot_pattern(GridDims(8, 14), 4, (2, 11))
        assert np.array_equal(pat.pilot_mask(), ~pat.data_mask())
        assert pat.pilot_mask().sum() == 2 * 8


class TestNearestPilot:
    def test_single_candidate(self):
        pat = _pattern_from_sets(GridDims(8, 14), [{(0, 2)}])
        assert nearest_pilot(pat, 0, REIndex(5, 9)) == REIndex(0, 2)

    def test_distance_four_beats_five(self):
        pat = _pattern_from_sets(GridDims(8, 14), [{(0, 2), (0, 11)}])
        # distances from (0, 6): 4 to the early pilot, 5 to the late one
        assert nearest_pilot(pat, 0, REIndex(0, 6)) == REIndex(0, 2)
        # and from (0, 7): 5 and 4
        assert nearest_pilot(pat, 0, REIndex(0, 7)) == REIndex(0, 11)

    def test_tie_breaks_to_earlier_symbol_then_lower_subcarrier(self):
        pat = _pattern_from_sets(GridDims(8, 14), [{(0, 2), (0, 4)}])
        assert nearest_pilot(pat, 0, REIndex(0, 3)) == REIndex(0, 2)
        pat = _pattern_from_sets(GridDims(8, 14), [{(1, 3), (3, 3)}])
        assert nearest_pilot(pat, 0, REIndex(2, 3)) == REIndex(1, 3)

    def test_pilot_re_maps_to_itself(self):
        pat = make_pilot_pattern(GridDims(8, 14), 4, (2, 11))
        for user in range(4):
            for p in pat.assignments[user]:
                assert nearest_pilot(pat, user, p) == p

    def test_brute_force_minimality(self):
        pat = make_pilot_pattern(GridDims(7, 9), 3, (1, 6))
        for user in range(3):
            pilots = pat.assignments[user]
            for m in range(7):
                for n in range(9):
                    best = nearest_pilot(pat, user, REIndex(m, n))
                    assert best in pilots
                    d_best = abs(best.m - m) + abs(best.n - n)
                    for p in pilots:
                        assert abs(p.m - m) + abs(p.n - n) >= d_best

    def test_vectorized_map_matches_scalar(self):
        pat = make_pilot_pattern(GridDims(7, 9), 3, (1, 6))
        for user in range(3):
            pilots = pat.pilot_array(user)
            nmap = nearest_pilot_map(pat, user)
            for m in range(7):
                for n in range(9):
                    got = pilots[nmap[m, n]]
                    want = nearest_pilot(pat, user, REIndex(m, n))
                    assert (got[0], got[1]) == (want.m, want.n)

    def test_user_out_of_range(self):
        pat = make_pilot_pattern(GridDims(8, 14), 2, (2,))
        with pytest.raises(ConfigurationError):
            nearest_pilot(pat, 2, REIndex(0, 0))


def test_grid_dims_validation():
    with pytest.raises(ConfigurationError):
        GridDims(0, 14)
    with pytest.raises(ConfigurationError):
        GridDims(8, 0)
