"""OFDM resource-grid geometry, per-user pilot patterns, and nearest-pilot lookup.

A resource grid is the n_f x n_t array of resource elements (REs) of one
transmission slot. Pilots of different users never share an RE; every data RE
borrows the channel estimate of its nearest pilot RE.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class GridDims:
    """Grid geometry: n_f subcarriers by n_t OFDM symbols."""

    n_f: int
    n_t: int

    def __post_init__(self):
        if self.n_f < 1 or self.n_t < 1:
            raise ConfigurationError(f"grid dims must be >= 1, got ({self.n_f}, {self.n_t})")

    @property
    def n_re(self) -> int:
        return self.n_f * self.n_t


@dataclass(frozen=True, order=True)
class REIndex:
    """One resource element: subcarrier m, OFDM symbol n (both 0-based)."""

    m: int
    n: int


@dataclass(frozen=True)
class PilotPattern:
    """Per-user pilot RE assignments plus the unit-magnitude pilot symbols.

    Assignments of distinct users are pairwise disjoint and every user owns at
    least one pilot RE. `pilot_values[i]` is the symbol user i transmits on
    each of its pilot REs.
    """

    dims: GridDims
    n_u: int
    assignments: tuple[frozenset[REIndex], ...]
    pilot_values: tuple[complex, ...] = field(default=())

    def __post_init__(self):
        if self.n_u < 1:
            raise ConfigurationError("need at least one user")
        if len(self.assignments) != self.n_u:
            raise ConfigurationError("one pilot set per user required")
        if not self.pilot_values:
            object.__setattr__(self, "pilot_values", (1.0 + 0.0j,) * self.n_u)
        if len(self.pilot_values) != self.n_u:
            raise ConfigurationError("one pilot value per user required")
        for i, pilots in enumerate(self.assignments):
            if not pilots:
                raise ConfigurationError(f"user {i} has an empty pilot set")
            for re in pilots:
                if not (0 <= re.m < self.dims.n_f and 0 <= re.n < self.dims.n_t):
                    raise ConfigurationError(f"pilot {re} outside grid {self.dims}")
        for i in range(self.n_u):
            for j in range(i + 1, self.n_u):
                clash = self.assignments[i] & self.assignments[j]
                if clash:
                    raise ConfigurationError(f"users {i} and {j} share pilot REs {sorted(clash)}")
        for i, v in enumerate(self.pilot_values):
            if abs(abs(v) - 1.0) > 1e-12:
                raise ConfigurationError(f"pilot value of user {i} must have unit magnitude")

    def pilot_mask(self) -> np.ndarray:
        """Boolean (n_f, n_t) mask, True where any user transmits a pilot."""
        mask = np.zeros((self.dims.n_f, self.dims.n_t), dtype=bool)
        for pilots in self.assignments:
            for re in pilots:
                mask[re.m, re.n] = True
        return mask

    def data_mask(self) -> np.ndarray:
        """Boolean (n_f, n_t) mask of data-carrying REs (no user's pilot)."""
        return ~self.pilot_mask()

    def pilot_array(self, user: int) -> np.ndarray:
        """Pilot REs of one user as an int array of (m, n) rows, sorted."""
        pilots = sorted(self.assignments[user], key=lambda re: (re.n, re.m))
        return np.array([[re.m, re.n] for re in pilots], dtype=np.int64)


def make_pilot_pattern(
    dims: GridDims,
    n_u: int,
    pilot_symbol_times: tuple[int, ...] = (2, 11),
    pilot_values: tuple[complex, ...] = (),
) -> PilotPattern:
    """Build a frequency-comb pilot pattern.

    On each listed OFDM symbol, user i occupies the subcarriers m with
    m mod n_u == i, so user pilot sets are disjoint by construction and every
    pilot symbol is fully occupied.
    """
    if n_u < 1:
        raise ConfigurationError("need at least one user")
    if dims.n_f < n_u:
        raise ConfigurationError(
            f"comb pattern infeasible: n_f={dims.n_f} < n_u={n_u} leaves users without pilots"
        )
    if not pilot_symbol_times:
        raise ConfigurationError("need at least one pilot symbol")
    for t in pilot_symbol_times:
        if not 0 <= t < dims.n_t:
            raise ConfigurationError(f"pilot symbol {t} outside [0, {dims.n_t})")
    assignments = []
    for i in range(n_u):
        pilots = frozenset(
            REIndex(m, t) for t in pilot_symbol_times for m in range(i, dims.n_f, n_u)
        )
        assignments.append(pilots)
    return PilotPattern(dims, n_u, tuple(assignments), tuple(pilot_values))


def nearest_pilot(pattern: PilotPattern, user: int, re: REIndex) -> REIndex:
    """Nearest pilot RE of `user` in Manhattan distance on (m, n) deltas.

    Ties go to the pilot with the smaller symbol index n, then the smaller
    subcarrier index m. A pilot RE of that user maps to itself.
    """
    if not 0 <= user < pattern.n_u:
        raise ConfigurationError(f"user {user} out of range")
    if not (0 <= re.m < pattern.dims.n_f and 0 <= re.n < pattern.dims.n_t):
        raise ConfigurationError(f"query {re} outside grid {pattern.dims}")
    best = None
    best_key = None
    for p in pattern.assignments[user]:
        key = (abs(p.m - re.m) + abs(p.n - re.n), p.n, p.m)
        if best_key is None or key < best_key:
            best, best_key = p, key
    return best


def nearest_pilot_map(pattern: PilotPattern, user: int) -> np.ndarray:
    """Index of the nearest pilot for every RE of the grid, vectorized.

    Returns an int array of shape (n_f, n_t) whose entries index the rows of
    `pattern.pilot_array(user)`. Uses the same metric and tie-break as
    `nearest_pilot`.
    """
    dims = pattern.dims
    pilots = pattern.pilot_array(user)  # (P, 2), sorted by (n, m)
    mm, nn = np.meshgrid(np.arange(dims.n_f), np.arange(dims.n_t), indexing="ij")
    # (n_f, n_t, P) Manhattan distances
    dist = np.abs(mm[..., None] - pilots[:, 0]) + np.abs(nn[..., None] - pilots[:, 1])
    # lexicographic (dist, pilot n, pilot m) encoded into one integer key
    key = (dist * dims.n_t + pilots[:, 1]) * dims.n_f + pilots[:, 0]
    return np.argmin(key, axis=-1)
