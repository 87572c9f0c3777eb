"""Numba kernels: counter-based uniforms and label-setting shortest paths.

Everything here is deterministic and allocation-light; the Python-level
modules own all validation and bookkeeping.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Philox4x32-10 round constants (the published generator).
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_SH11 = np.uint64(11)
_INV53 = 2.0 ** -53


@njit(cache=True, nogil=True)
def philox4x32_10(c0, c1, c2, c3, k0, k1):
    """One 10-round Philox4x32 block; all args and results are uint64
    holding 32-bit lanes."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = ((p1 >> _SH32) ^ c1 ^ k0) & _MASK32
        n1 = p1 & _MASK32
        n2 = ((p0 >> _SH32) ^ c3 ^ k1) & _MASK32
        n3 = p0 & _MASK32
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


# Triangular-lattice neighbor steps on the [x+n, y+n] grid, in the
# fixed E, W, N, S, then-diagonals order.
_DROW = (1, -1, 0, 0, 1, -1)
_DCOL = (0, 0, 1, -1, -1, 1)


@njit(cache=True, nogil=True)
def bfs01_grid(closed, src_mask):
    """Multi-source two-level-queue shortest path for 0/1 site costs.

    Entering site w costs 1 when closed[w] else 0; sources start at 0,
    their own status never counts.  Returns (steps, srcid) grids:
    steps[v] is the minimal closed-site count over paths from any
    source, srcid[v] the flat index of the source whose relaxation
    settled v (first strict improver; deterministic).
    """
    side = closed.shape[0]
    n_tot = side * side
    inf = np.int32(1 << 30)
    dist = np.full(n_tot, inf, np.int32)
    srcid = np.full(n_tot, np.int32(-1), np.int32)
    cap = 8 * n_tot + 8
    dq = np.empty(cap, np.int32)
    head = 0
    tail = 0
    qlen = 0
    fc = closed.reshape(n_tot)
    fs = src_mask.reshape(n_tot)
    for v in range(n_tot):
        if fs[v]:
            dist[v] = 0
            srcid[v] = np.int32(v)
            dq[tail] = np.int32(v)
            tail = (tail + 1) % cap
            qlen += 1
    while qlen > 0:
        v = dq[head]
        head = (head + 1) % cap
        qlen -= 1
        dv = dist[v]
        row = v // side
        col = v % side
        for k in range(6):
            r = row + _DROW[k]
            c = col + _DCOL[k]
            if r < 0 or r >= side or c < 0 or c >= side:
                continue
            w = r * side + c
            cost = np.int32(1) if fc[w] else np.int32(0)
            nd = dv + cost
            if nd < dist[w]:
                dist[w] = nd
                srcid[w] = srcid[v]
                if qlen + 1 >= cap:
                    raise RuntimeError("queue overflow")
                if cost == 0:
                    head = (head - 1) % cap
                    dq[head] = np.int32(w)
                else:
                    dq[tail] = np.int32(w)
                    tail = (tail + 1) % cap
                qlen += 1
    return dist.reshape(side, side), srcid.reshape(side, side)


@njit(cache=True, nogil=True)
def dijkstra_grid(cost, src_mask):
    """Multi-source label-setting with dist(w) = min(dist(v) + cost[w]).

    Binary heap with lazy deletion; ties settle in a fixed order, so
    the (dist, srcid) output is deterministic.
    """
    side = cost.shape[0]
    n_tot = side * side
    dist = np.full(n_tot, np.inf, np.float64)
    srcid = np.full(n_tot, np.int32(-1), np.int32)
    done = np.zeros(n_tot, np.uint8)
    cap = 8 * n_tot + 8
    hk = np.empty(cap, np.float64)
    hv = np.empty(cap, np.int32)
    hn = 0
    fc = cost.reshape(n_tot)
    fs = src_mask.reshape(n_tot)
    for v in range(n_tot):
        if fs[v]:
            dist[v] = 0.0
            srcid[v] = np.int32(v)
            # push (0, v); keys equal so sift-up keeps insertion order
            i = hn
            hk[i] = 0.0
            hv[i] = np.int32(v)
            hn += 1
            while i > 0:
                p = (i - 1) // 2
                if hk[p] <= hk[i]:
                    break
                hk[p], hk[i] = hk[i], hk[p]
                hv[p], hv[i] = hv[i], hv[p]
                i = p
    while hn > 0:
        v = hv[0]
        hn -= 1
        hk[0] = hk[hn]
        hv[0] = hv[hn]
        i = 0
        while True:
            l = 2 * i + 1
            r = l + 1
            m = i
            if l < hn and hk[l] < hk[m]:
                m = l
            if r < hn and hk[r] < hk[m]:
                m = r
            if m == i:
                break
            hk[m], hk[i] = hk[i], hk[m]
            hv[m], hv[i] = hv[i], hv[m]
            i = m
        if done[v]:
            continue
        done[v] = 1
        dv = dist[v]
        row = v // side
        col = v % side
        for k in range(6):
            rr = row + _DROW[k]
            cc = col + _DCOL[k]
            if rr < 0 or rr >= side or cc < 0 or cc >= side:
                continue
            w = rr * side + cc
            if done[w]:
                continue
            nd = dv + fc[w]
            if nd < dist[w]:
                dist[w] = nd
                srcid[w] = srcid[v]
                if hn + 1 >= cap:
                    raise RuntimeError("heap overflow")
                i = hn
                hk[i] = nd
                hv[i] = np.int32(w)
                hn += 1
                while i > 0:
                    p = (i - 1) // 2
                    if hk[p] <= hk[i]:
                        break
                    hk[p], hk[i] = hk[i], hk[p]
                    hv[p], hv[i] = hv[i], hv[p]
                    i = p
    return dist.reshape(side, side), srcid.reshape(side, side)


@njit(cache=True, nogil=True)
def tight_hops_grid(cost, dist, src_mask):
    """Hop counts of a breadth-first tree over exactly-tight edges.

    An edge v -> w is tight when dist[w] == dist[v] + cost[w] with no
    tolerance; every reached site has one by construction (the edge
    that last set its label).  hops strictly decrease along the tree
    toward a source, which makes geodesic backtracking loop-free.
    """
    side = cost.shape[0]
    n_tot = side * side
    hops = np.full(n_tot, np.int32(-1), np.int32)
    queue = np.empty(n_tot, np.int32)
    head = 0
    tail = 0
    fc = cost.reshape(n_tot)
    fd = dist.reshape(n_tot)
    fs = src_mask.reshape(n_tot)
    for v in range(n_tot):
        if fs[v]:
            hops[v] = 0
            queue[tail] = np.int32(v)
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        row = v // side
        col = v % side
        for k in range(6):
            r = row + _DROW[k]
            c = col + _DCOL[k]
            if r < 0 or r >= side or c < 0 or c >= side:
                continue
            w = r * side + c
            if hops[w] == -1 and fd[w] == fd[v] + fc[w]:
                hops[w] = hops[v] + 1
                queue[tail] = np.int32(w)
                tail += 1
    return hops.reshape(side, side)


@njit(cache=True, nogil=True)
def philox_uniform_grid(seed, stream, n):
    """Per-site uniforms on B(n), indexed [x+n, y+n].

    Counter is (x, y, stream_lo, stream_hi) with coordinates reduced to
    32-bit two's complement; key is (seed_lo, seed_hi).  The uniform is
    built from the first two output lanes as a 53-bit mantissa offset by
    half an ulp, so it lies in (0,1) and is <= 1/2 for exactly half of
    all counter values.
    """
    side = 2 * n + 1
    out = np.empty((side, side), dtype=np.float64)
    k0 = seed & _MASK32
    k1 = (seed >> _SH32) & _MASK32
    s0 = stream & _MASK32
    s1 = (stream >> _SH32) & _MASK32
    for i in range(side):
        c0 = np.uint64(i - n) & _MASK32
        for j in range(side):
            c1 = np.uint64(j - n) & _MASK32
            r0, r1, r2, r3 = philox4x32_10(c0, c1, s0, s1, k0, k1)
            v = (r1 << _SH32) | r0
            out[i, j] = (np.float64(v >> _SH11) + 0.5) * _INV53
    return out
