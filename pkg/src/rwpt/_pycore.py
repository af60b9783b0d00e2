"""Pure numpy implementation of the walk core, bit-identical to the compiled one.

All paths still running are advanced together, one step per iteration.
"""
from __future__ import annotations

import numpy as np

M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = 0x9E3779B9
W1 = 0xBB67AE85
MASK32 = np.uint64(0xFFFFFFFF)
SHIFT32 = np.uint64(32)
SHIFT11 = np.uint64(11)
TWO_M53 = 2.0 ** -53


def philox_block(c0, c1, c2, c3, k0: int, k1: int):
    """Vectorised Philox4x32-10 on uint64 arrays holding 32-bit words."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    for _ in range(10):
        p0 = M0 * c0
        p1 = M1 * c2
        hi0, lo0 = p0 >> SHIFT32, p0 & MASK32
        hi1, lo1 = p1 >> SHIFT32, p1 & MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ np.uint64(k0), lo1, hi0 ^ c3 ^ np.uint64(k1), lo0
        k0 = (k0 + W0) & 0xFFFFFFFF
        k1 = (k1 + W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def philox4x32(counter, key):
    out = philox_block(*[np.array([c], dtype=np.uint64) for c in counter], int(key[0]), int(key[1]))
    return tuple(int(o[0]) for o in out)


def _uniforms(t: int, path_ids: np.ndarray, key0: int, key1: int, stream: int) -> np.ndarray:
    blk = t >> 1
    n = len(path_ids)
    w = philox_block(np.full(n, blk & 0xFFFFFFFF, dtype=np.uint64),
                     np.full(n, blk >> 32, dtype=np.uint64),
                     path_ids.astype(np.uint64) & MASK32,
                     np.full(n, stream, dtype=np.uint64), key0, key1)
    hi, lo = (w[0], w[1]) if (t & 1) == 0 else (w[2], w[3])
    u64 = (hi << SHIFT32) | lo
    return (u64 >> SHIFT11).astype(np.float64) * TWO_M53


def _stop_index(px, py, cidx, ccx, ccy, rin2, rout2, neg, ck) -> np.ndarray:
    out = np.full(len(px), -1, dtype=np.int64)
    for c in range(len(cidx) - 1, -1, -1):
        dx = px - ccx[c]
        dy = py - ccy[c]
        K = int(ck[c])
        if K > 0:
            h = K // 2
            dx = np.mod(dx + h, K) - h
            dy = np.mod(dy + h, K) - h
        d2 = (dx * dx + dy * dy).astype(np.float64)
        inside = (d2 >= rin2[c]) & (d2 < rout2[c])
        fire = inside != bool(neg[c])
        out[fire] = cidx[c]
    return out


def run_paths(off_x, off_y, cdf, key0, key1, stream, start_x, start_y, path_ids,
              cidx, ccx, ccy, rin2, rout2, neg, ck, cap,
              out_stop, out_x, out_y, out_steps):
    n = len(path_ids)
    path_ids = np.asarray(path_ids, dtype=np.int64)
    px = np.full(n, start_x, dtype=np.int64)
    py = np.full(n, start_y, dtype=np.int64)
    stop = _stop_index(px, py, cidx, ccx, ccy, rin2, rout2, neg, ck)
    steps = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(stop < 0)
    t = 0
    while len(active) and t < cap:
        u = _uniforms(t, path_ids[active], key0, key1, stream)
        j = np.searchsorted(cdf, u, side="right")
        j = np.minimum(j, len(cdf) - 1)
        px[active] += off_x[j]
        py[active] += off_y[j]
        t += 1
        steps[active] = t
        s = _stop_index(px[active], py[active], cidx, ccx, ccy, rin2, rout2, neg, ck)
        stop[active] = s
        active = active[s < 0]
    out_stop[:] = stop
    out_x[:] = px
    out_y[:] = py
    out_steps[:] = np.where(stop >= 0, steps, -1)


def draw_steps(cdf, key0, key1, stream, path_id, n_draws, out_idx):
    n_blocks = (n_draws + 1) // 2
    blk = np.arange(n_blocks, dtype=np.uint64)
    w = philox_block(blk & MASK32, blk >> SHIFT32,
                     np.full(n_blocks, path_id & 0xFFFFFFFF, dtype=np.uint64),
                     np.full(n_blocks, stream, dtype=np.uint64), key0, key1)
    first = (w[0] << SHIFT32) | w[1]
    second = (w[2] << SHIFT32) | w[3]
    u64 = np.empty(2 * n_blocks, dtype=np.uint64)
    u64[0::2] = first
    u64[1::2] = second
    u = (u64[:n_draws] >> SHIFT11).astype(np.float64) * TWO_M53
    out_idx[:] = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
