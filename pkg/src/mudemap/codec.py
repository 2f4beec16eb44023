"""Rate-1/2 (3,6)-regular LDPC code: PEG construction, systematic encoding,
and a sum-product decoder.

LLR convention throughout: positive favors bit 0. Input LLRs are saturated at
+/-20 before decoding for numerical stability of the tanh rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

LLR_CLIP = 20.0
VAR_DEGREE = 3
CHECK_DEGREE = 6


@dataclass
class ParityCheckCode:
    """Parity-check matrix with derived systematic encoder tables.

    h_pc is dense binary (m, n). info_cols/parity_cols partition the code
    bits; parity_map (rank, k) gives the parity bits as a GF(2) product with
    the information bits.
    """

    h_pc: np.ndarray
    info_cols: np.ndarray
    parity_cols: np.ndarray
    parity_map: np.ndarray
    rate: float

    @property
    def n(self) -> int:
        return self.h_pc.shape[1]

    @property
    def k(self) -> int:
        return self.info_cols.size

    @property
    def m(self) -> int:
        return self.h_pc.shape[0]


def _gf2_rref(h: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2); returns (rref, pivot columns)."""
    r = h.copy().astype(np.uint8)
    m, n = r.shape
    pivots = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        hits = np.nonzero(r[row:, col])[0]
        if hits.size == 0:
            continue
        pivot = row + hits[0]
        if pivot != row:
            r[[row, pivot]] = r[[pivot, row]]
        others = np.nonzero(r[:, col])[0]
        others = others[others != row]
        r[others] ^= r[row]
        pivots.append(col)
        row += 1
    return r, pivots


def _peg_graph(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Progressive-edge-growth placement of a (3,6)-regular bipartite graph."""
    check_deg = np.zeros(m, dtype=np.int64)
    var_to_checks: list[list[int]] = [[] for _ in range(n)]
    check_to_vars: list[list[int]] = [[] for _ in range(m)]

    for v in range(n):
        for _ in range(VAR_DEGREE):
            if not var_to_checks[v]:
                candidates = np.arange(m)
            else:
                # BFS from v over the current graph; prefer checks outside the
                # reachable ball (largest girth), else the most distant layer.
                reached = set(var_to_checks[v])
                while True:
                    prev = set(reached)
                    next_vars = set()
                    for c in reached:
                        next_vars.update(check_to_vars[c])
                    for w in next_vars:
                        reached.update(var_to_checks[w])
                    if reached == prev or len(reached) == m:
                        break
                outside = np.array(sorted(set(range(m)) - reached), dtype=np.int64)
                if outside.size:
                    candidates = outside
                else:
                    layer = np.array(sorted(reached - prev), dtype=np.int64)
                    candidates = layer if layer.size else np.arange(m)
            open_c = candidates[check_deg[candidates] < CHECK_DEGREE]
            if open_c.size == 0:
                open_c = np.nonzero(check_deg < CHECK_DEGREE)[0]
            best = open_c[check_deg[open_c] == check_deg[open_c].min()]
            c = int(best[rng.integers(best.size)])
            var_to_checks[v].append(c)
            check_to_vars[c].append(v)
            check_deg[c] += 1

    h = np.zeros((m, n), dtype=np.uint8)
    for v, checks in enumerate(var_to_checks):
        h[checks, v] = 1
    return h


def _count_short_cycles(h: np.ndarray) -> int:
    """Number of check pairs sharing 2+ variables (each such pair: a 4-cycle)."""
    overlap = (h.astype(np.int64) @ h.T.astype(np.int64))
    np.fill_diagonal(overlap, 0)
    return int(np.count_nonzero(overlap >= 2) // 2)


def make_regular_ldpc(n: int, seed: int = 0) -> ParityCheckCode:
    """(3,6)-regular rate-1/2 code via progressive edge growth.

    Deterministic per seed. For n >= 96 the construction is retried until the
    graph is 4-cycle free (girth >= 6); a handful of attempts suffices.
    """
    if n < 2 or n % 2:
        raise ConfigurationError(f"block length must be even and >= 2, got {n}")
    m = n // 2
    if n * VAR_DEGREE != m * CHECK_DEGREE:
        raise ConfigurationError("degree constraints infeasible")

    for attempt in range(64):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, attempt])))
        h = _peg_graph(n, m, rng)
        if h.sum(axis=0).min() != VAR_DEGREE or not np.all(h.sum(axis=1) == CHECK_DEGREE):
            continue
        if n >= 96 and _count_short_cycles(h) > 0:
            continue
        break
    else:
        raise ConfigurationError(f"could not construct a girth-6 (3,6) code for n={n}")

    rref, pivots = _gf2_rref(h)
    rank = len(pivots)
    parity_cols = np.array(pivots, dtype=np.int64)
    info_cols = np.setdiff1d(np.arange(n), parity_cols)
    parity_map = rref[:rank][:, info_cols]
    rate = (n - rank) / n
    return ParityCheckCode(h, info_cols, parity_cols, parity_map, rate)


def ldpc_encode(code: ParityCheckCode, info_bits: np.ndarray) -> np.ndarray:
    """Systematic encoding: info bits land verbatim on the info positions."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape[-1] != code.k:
        raise ConfigurationError(f"expected {code.k} info bits, got {info_bits.shape[-1]}")
    out = np.zeros(info_bits.shape[:-1] + (code.n,), dtype=np.uint8)
    out[..., code.info_cols] = info_bits
    out[..., code.parity_cols] = (info_bits @ code.parity_map.T) % 2
    return out


def syndrome(code: ParityCheckCode, bits: np.ndarray) -> np.ndarray:
    """H c^T mod 2, shape (..., m)."""
    return (np.asarray(bits, dtype=np.int64) @ code.h_pc.T) % 2


class _DecoderTables:
    """Edge layout for the flooding decoder of a regular code."""

    def __init__(self, code: ParityCheckCode):
        nbrs = [np.nonzero(row)[0] for row in code.h_pc]
        if any(len(x) != CHECK_DEGREE for x in nbrs):
            raise ConfigurationError("decoder requires a check-regular code")
        self.edge_var = np.stack(nbrs)  # (m, CHECK_DEGREE) variable index per edge


def _boxplus_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact check-node combination: min-sum with the dual correction term."""
    out = np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
    return out + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


def check_update_tanh(msgs: np.ndarray) -> np.ndarray:
    """Extrinsic check messages via the tanh product rule; msgs (..., deg)."""
    t = np.tanh(np.clip(msgs, -LLR_CLIP, LLR_CLIP) / 2.0)
    deg = msgs.shape[-1]
    fwd = np.ones_like(t)
    bwd = np.ones_like(t)
    for i in range(1, deg):
        fwd[..., i] = fwd[..., i - 1] * t[..., i - 1]
        bwd[..., deg - 1 - i] = bwd[..., deg - i] * t[..., deg - i]
    prod = np.clip(fwd * bwd, -1.0 + 1e-15, 1.0 - 1e-15)
    return 2.0 * np.arctanh(prod)


def check_update_pairwise(msgs: np.ndarray) -> np.ndarray:
    """Extrinsic check messages via sequential exact pairwise combination."""
    msgs = np.clip(msgs, -LLR_CLIP, LLR_CLIP)
    deg = msgs.shape[-1]
    big = np.full(msgs.shape[:-1], 1e30)
    fwd = [big]
    for i in range(deg - 1):
        fwd.append(_boxplus_pairwise(fwd[-1], msgs[..., i]))
    bwd = [big]
    for i in range(deg - 1, 0, -1):
        bwd.append(_boxplus_pairwise(bwd[-1], msgs[..., i]))
    bwd = bwd[::-1]
    return np.stack([_boxplus_pairwise(fwd[i], bwd[i]) for i in range(deg)], axis=-1)


def ldpc_decode(
    code: ParityCheckCode, llrs: np.ndarray, max_iters: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Flooding sum-product decoding with early exit on a zero syndrome.

    llrs has shape (..., n); returns (info bits (..., k), converged (...,)).
    Non-convergence after max_iters is reported via the flag, not an error.
    """
    full, done = decode_codeword(code, llrs, max_iters)
    return full[..., code.info_cols], done


def decode_codeword(
    code: ParityCheckCode, llrs: np.ndarray, max_iters: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Same decoder, returning the full n-bit hard decision per block."""
    tables = _DecoderTables(code)
    ev = tables.edge_var
    llrs = np.clip(np.asarray(llrs, dtype=np.float64), -LLR_CLIP, LLR_CLIP)
    batch_shape = llrs.shape[:-1]
    flat = llrs.reshape(-1, code.n)
    nb = flat.shape[0]

    msg_vc = flat[:, ev]  # (nb, m, deg) variable-to-check
    hard_out = (flat < 0).astype(np.uint8)
    done = np.zeros(nb, dtype=bool)
    batch_idx = np.arange(nb)[:, None, None]

    for _ in range(max_iters):
        msg_cv = check_update_tanh(msg_vc)
        # posterior per variable: channel LLR + sum of incoming check messages
        post = flat.copy()
        np.add.at(post, (batch_idx, ev[None]), msg_cv)
        hard = (post < 0).astype(np.uint8)
        # convergence needs a zero syndrome AND an unambiguous decision; an
        # exactly-zero posterior carries no information about its bit
        synd_ok = ~np.any(np.bitwise_xor.reduce(hard[:, ev], axis=-1), axis=-1)
        synd_ok &= np.abs(post).min(axis=-1) > 0.0
        hard_out[~done] = hard[~done]
        done |= synd_ok
        if done.all():
            break
        # extrinsic variable-to-check messages for the next round
        msg_vc = post[:, ev] - msg_cv

    return hard_out.reshape(batch_shape + (code.n,)), done.reshape(batch_shape)


def export_parity(code: ParityCheckCode, path: str) -> None:
    """Write the parity-check matrix as 'row col' coordinate pairs."""
    rows, cols = np.nonzero(code.h_pc)
    with open(path, "w") as f:
        for r, c in zip(rows, cols):
            f.write(f"{r} {c}\n")
