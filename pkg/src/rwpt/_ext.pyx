# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled walk loop: Philox4x32-10 counter RNG plus stop-condition checks."""
from libc.stdint cimport int64_t, uint32_t, uint64_t

cdef uint32_t M0 = 0xD2511F53u
cdef uint32_t M1 = 0xCD9E8D57u
cdef uint32_t W0 = 0x9E3779B9u
cdef uint32_t W1 = 0xBB67AE85u


cdef inline void philox(uint32_t* ctr, uint32_t k0, uint32_t k1, uint32_t* out) noexcept nogil:
    cdef uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3]
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        p0 = <uint64_t>M0 * c0
        p1 = <uint64_t>M1 * c2
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + W0
        k1 = k1 + W1
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


def philox4x32(counter, key):
    """Reference entry point: one Philox4x32-10 block."""
    cdef uint32_t ctr[4]
    cdef uint32_t out[4]
    for i in range(4):
        ctr[i] = <uint32_t>counter[i]
    philox(ctr, <uint32_t>key[0], <uint32_t>key[1], out)
    return (out[0], out[1], out[2], out[3])


cdef inline int64_t floor_mod(int64_t a, int64_t K) noexcept nogil:
    cdef int64_t r = a % K
    if r < 0:
        r += K
    return r


cdef inline int stop_index(int64_t px, int64_t py,
                           const int64_t[::1] cidx, const int64_t[::1] ccx, const int64_t[::1] ccy,
                           const double[::1] rin2, const double[::1] rout2,
                           const int64_t[::1] neg, const int64_t[::1] ck) noexcept nogil:
    cdef Py_ssize_t c
    cdef int64_t dx, dy, K, h
    cdef double d2
    cdef bint inside
    for c in range(cidx.shape[0]):
        dx = px - ccx[c]
        dy = py - ccy[c]
        K = ck[c]
        if K > 0:
            h = K // 2
            dx = floor_mod(dx + h, K) - h
            dy = floor_mod(dy + h, K) - h
        d2 = <double>(dx * dx + dy * dy)
        inside = d2 >= rin2[c] and d2 < rout2[c]
        if inside != (neg[c] != 0):
            return <int>cidx[c]
    return -1


def run_paths(const int64_t[::1] off_x, const int64_t[::1] off_y, const double[::1] cdf,
              uint32_t key0, uint32_t key1, uint32_t stream,
              int64_t start_x, int64_t start_y, const int64_t[::1] path_ids,
              const int64_t[::1] cidx, const int64_t[::1] ccx, const int64_t[::1] ccy,
              const double[::1] rin2, const double[::1] rout2,
              const int64_t[::1] neg, const int64_t[::1] ck,
              int64_t cap,
              int64_t[::1] out_stop, int64_t[::1] out_x, int64_t[::1] out_y,
              int64_t[::1] out_steps):
    """Run one walk per path id until a stop condition fires or ``cap`` steps.

    ``out_steps`` is -1 for capped paths.  Releases the GIL.
    """
    cdef Py_ssize_t n = path_ids.shape[0]
    cdef Py_ssize_t S = cdf.shape[0]
    cdef Py_ssize_t i, lo, hi, mid
    cdef int64_t t, px, py
    cdef int s
    cdef uint32_t ctr[4]
    cdef uint32_t out[4]
    cdef uint64_t u64, blk
    cdef double u
    with nogil:
        for i in range(n):
            px = start_x
            py = start_y
            s = stop_index(px, py, cidx, ccx, ccy, rin2, rout2, neg, ck)
            t = 0
            while s < 0 and t < cap:
                if (t & 1) == 0:
                    blk = <uint64_t>(t >> 1)
                    ctr[0] = <uint32_t>blk
                    ctr[1] = <uint32_t>(blk >> 32)
                    ctr[2] = <uint32_t>path_ids[i]
                    ctr[3] = stream
                    philox(ctr, key0, key1, out)
                    u64 = (<uint64_t>out[0] << 32) | out[1]
                else:
                    u64 = (<uint64_t>out[2] << 32) | out[3]
                u = <double>(u64 >> 11) * 1.1102230246251565e-16
                lo = 0
                hi = S - 1
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if cdf[mid] > u:
                        hi = mid
                    else:
                        lo = mid + 1
                px += off_x[lo]
                py += off_y[lo]
                t += 1
                s = stop_index(px, py, cidx, ccx, ccy, rin2, rout2, neg, ck)
            out_stop[i] = s
            out_x[i] = px
            out_y[i] = py
            out_steps[i] = t if s >= 0 else -1


def draw_steps(const double[::1] cdf, uint32_t key0, uint32_t key1, uint32_t stream,
               int64_t path_id, int64_t n_draws, int64_t[::1] out_idx):
    """Step indices of the first ``n_draws`` steps of one path."""
    cdef int64_t t
    cdef Py_ssize_t S = cdf.shape[0], lo, hi, mid
    cdef uint32_t ctr[4]
    cdef uint32_t out[4]
    cdef uint64_t u64, blk
    cdef double u
    with nogil:
        for t in range(n_draws):
            if (t & 1) == 0:
                blk = <uint64_t>(t >> 1)
                ctr[0] = <uint32_t>blk
                ctr[1] = <uint32_t>(blk >> 32)
                ctr[2] = <uint32_t>path_id
                ctr[3] = stream
                philox(ctr, key0, key1, out)
                u64 = (<uint64_t>out[0] << 32) | out[1]
            else:
                u64 = (<uint64_t>out[2] << 32) | out[3]
            u = <double>(u64 >> 11) * 1.1102230246251565e-16
            lo = 0
            hi = S - 1
            while lo < hi:
                mid = (lo + hi) >> 1
                if cdf[mid] > u:
                    hi = mid
                else:
                    lo = mid + 1
            out_idx[t] = lo
