"""First-passage times and geodesics between vertex sets.

A path's passage time is the sum of its site weights with the first
vertex excluded, so times are direction-dependent.  All solves are
confined to the sampled box; for point-to-ring times that is exact
(the prefix of any escaping path up to its first ring hit stays
inside), and circuit studies sample fields with a margin so the
relevant geodesics are interior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import bfs01_grid, dijkstra_grid, tight_hops_grid
from .lattice import NEIGHBOR_STEPS, Box, flood_mask, mask_of_sites
from .weights import WeightField

KINDS = ("general", "bernoulli")


@dataclass(frozen=True)
class PassageResult:
    """Outcome of one first-passage solve.

    ``time`` is the minimal passage time; ``source_hit`` an optimal
    starting site and ``target_hit`` an optimal ending site.  When a
    geodesic was requested it runs from source_hit to target_hit and
    its recomputed weight (first vertex excluded, summed left to
    right) equals ``time`` exactly.  For the bernoulli kind ``steps``
    carries the closed-site count, with time = infimum * steps.
    """

    time: float
    source_hit: tuple
    target_hit: tuple
    geodesic: tuple | None = None
    steps: int | None = None


def _as_mask(box: Box, sites) -> np.ndarray:
    if isinstance(sites, np.ndarray) and sites.dtype == np.bool_:
        if sites.shape != (box.side, box.side):
            raise ValueError("mask shape does not match the field box")
        return sites
    return mask_of_sites(box, sites)


def _cost_grid(field: WeightField, kind: str) -> np.ndarray:
    if kind == "bernoulli":
        return (~field.open_mask).astype(np.float64)
    return field.t


def _scale(field: WeightField, kind: str) -> float:
    return field.spec.infimum if kind == "bernoulli" else 1.0


def solve_distances(field: WeightField, kind: str, sources) -> np.ndarray:
    """Distance grid of the multi-source relaxation dist(w) = min(dist(v) + t_w).

    For the bernoulli kind the grid holds integer-valued closed-site
    counts (multiply by the infimum for times); for the general kind it
    holds times directly.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    src = _as_mask(field.box, sources)
    if not src.any():
        raise ValueError("source set is empty")
    if kind == "bernoulli":
        steps, _ = bfs01_grid(~field.open_mask, src)
        return steps.astype(np.float64)
    dist, _ = dijkstra_grid(field.t, src)
    return dist


def _backtrack(field: WeightField, kind: str, dist, src_mask, target):
    cost = _cost_grid(field, kind)
    hops = tight_hops_grid(cost, dist, src_mask)
    n = field.n
    side = field.side
    path = [target]
    cur = target
    while not src_mask[cur[0] + n, cur[1] + n]:
        ci, cj = cur[0] + n, cur[1] + n
        nxt = None
        for dx, dy in NEIGHBOR_STEPS:
            vi, vj = ci + dx, cj + dy
            if not (0 <= vi < side and 0 <= vj < side):
                continue
            if (hops[vi, vj] == hops[ci, cj] - 1
                    and dist[vi, vj] + cost[ci, cj] == dist[ci, cj]):
                nxt = (vi - n, vj - n)
                break
        if nxt is None:
            raise RuntimeError("geodesic backtrack found no tight step")
        path.append(nxt)
        cur = nxt
    path.reverse()
    return tuple(path)


def first_passage(field: WeightField, kind: str, A, B,
                  want_geodesic: bool = False) -> PassageResult:
    """Minimal passage time from vertex set A to vertex set B.

    Parameters
    ----------
    field : WeightField
    kind : {'general', 'bernoulli'}
        Which coupled weight family to use: the general weights
        F^{-1}(omega), or the two-valued infimum weights.
    A, B : iterables of sites or boolean masks over the field box
        Nonempty source and target sets.
    want_geodesic : bool, optional
        Also reconstruct one optimal self-avoiding path.

    Returns
    -------
    PassageResult
        With time 0 and a single-site geodesic when A and B intersect.

    Raises
    ------
    ValueError
        On an empty or out-of-box A or B, or an unknown kind.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    box = field.box
    amask = _as_mask(box, A)
    bmask = _as_mask(box, B)
    if not amask.any():
        raise ValueError("source set is empty")
    if not bmask.any():
        raise ValueError("target set is empty")

    both = amask & bmask
    if both.any():
        i, j = np.unravel_index(int(both.argmax()), both.shape)
        v = (int(i) - box.n, int(j) - box.n)
        steps = 0 if kind == "bernoulli" else None
        return PassageResult(0.0, v, v, (v,) if want_geodesic else None, steps)

    if kind == "bernoulli":
        raw, srcid = bfs01_grid(~field.open_mask, amask)
        dist = raw.astype(np.float64)
    else:
        dist, srcid = dijkstra_grid(field.t, amask)
        raw = dist

    masked = np.where(bmask, dist, np.inf)
    flat = int(masked.argmin())
    ti, tj = np.unravel_index(flat, masked.shape)
    target = (int(ti) - box.n, int(tj) - box.n)
    steps = int(raw[ti, tj]) if kind == "bernoulli" else None
    time = _scale(field, kind) * float(dist[ti, tj])

    geodesic = None
    if want_geodesic:
        geodesic = _backtrack(field, kind, dist, amask, target)
        source = geodesic[0]
    else:
        si = int(srcid[ti, tj])
        source = (si // box.side - box.n, si % box.side - box.n)
    return PassageResult(time, source, target, geodesic, steps)


def point_to_box(field: WeightField, kind: str, n: int,
                 want_geodesic: bool = False) -> PassageResult:
    """Passage time from the origin to the ring of radius n.

    The origin's own weight never counts (first-vertex exclusion).
    """
    if n > field.n:
        raise ValueError(f"ring radius {n} exceeds field radius {field.n}")
    box = field.box
    origin = np.zeros((box.side, box.side), dtype=bool)
    origin[box.n, box.n] = True
    return first_passage(field, kind, origin, box.ring_mask(n), want_geodesic)


def ring_times(field: WeightField, kind: str) -> np.ndarray:
    """Passage times from the origin to every ring of the field's box.

    One solve covers all radii: entry r holds the minimum of the
    distance grid over the ring of radius r, which equals the
    point-to-ring passage time because the prefix of any path up to
    its first ring-r hit stays inside B(r).  For the bernoulli kind
    the entries are integer-valued closed-site counts.
    """
    box = field.box
    origin = np.zeros((box.side, box.side), dtype=bool)
    origin[box.n, box.n] = True
    dist = solve_distances(field, kind, origin)
    out = np.full(field.n + 1, np.inf)
    np.minimum.at(out, box.chebyshev.ravel(), dist.ravel())
    return out


def interior_mask(box: Box, circuit_sites) -> np.ndarray:
    """Strict interior of an origin-surrounding circuit: the connected
    component of the origin in the box minus the circuit."""
    cmask = _as_mask(box, circuit_sites)
    if cmask[box.n, box.n]:
        raise ValueError("circuit passes through the origin")
    seed = np.zeros((box.side, box.side), dtype=bool)
    seed[box.n, box.n] = True
    comp = flood_mask(box.full_mask(), ~cmask, seed)
    if (comp & box.ring_mask(box.n)).any():
        raise ValueError("set does not surround the origin")
    return comp


def circuit_to_circuit(field: WeightField, kind: str, inner, outer,
                       want_geodesic: bool = False) -> PassageResult:
    """Passage time from an inner circuit to a strictly enclosing one.

    ``inner`` and ``outer`` may be circuit objects (anything with a
    ``sites`` attribute) or plain vertex sets.  The inner circuit must
    lie strictly inside the outer one.
    """
    inner_sites = getattr(inner, "sites", inner)
    outer_sites = getattr(outer, "sites", outer)
    box = field.box
    imask = _as_mask(box, inner_sites)
    omask = _as_mask(box, outer_sites)
    if not imask.any() or not omask.any():
        raise ValueError("circuits must be nonempty")
    hole = interior_mask(box, omask)
    if (imask & ~hole).any():
        raise ValueError("inner circuit is not strictly inside the outer one")
    return first_passage(field, kind, imask, omask, want_geodesic)


def recompute_time(field: WeightField, kind: str, path) -> float:
    """Weight of a path under the fixed evaluation order.

    First vertex excluded; general kind sums left to right, bernoulli
    kind counts closed sites and multiplies by the infimum once.
    """
    if kind == "bernoulli":
        count = sum(1 for v in path[1:] if not field.is_open(v))
        return field.spec.infimum * count
    total = 0.0
    for v in path[1:]:
        total += field.t_at(v)
    return total


def path_is_valid(path) -> bool:
    """Self-avoiding and stepping only between lattice neighbors."""
    if len(set(path)) != len(path):
        return False
    for u, v in zip(path, path[1:]):
        if (v[0] - u[0], v[1] - u[1]) not in NEIGHBOR_STEPS:
            return False
    return True


def brute_force_time(field: WeightField, kind: str, A, B) -> float:
    """Exhaustive minimum over self-avoiding paths from A to B.

    Exponential-time reference oracle for small boxes; prunes branches
    whose partial weight already reaches the best known total.
    """
    box = field.box
    amask = _as_mask(box, A)
    bmask = _as_mask(box, B)
    cost = _cost_grid(field, kind) * _scale(field, kind)
    n = box.n
    starts = [(int(i) - n, int(j) - n) for i, j in zip(*np.nonzero(amask))]
    best = np.inf
    for start in starts:
        if bmask[start[0] + n, start[1] + n]:
            return 0.0
    visited = np.zeros((box.side, box.side), dtype=bool)

    def dfs(v, partial):
        nonlocal best
        if partial >= best:
            return
        if bmask[v[0] + n, v[1] + n]:
            best = partial
            return
        for dx, dy in NEIGHBOR_STEPS:
            w = (v[0] + dx, v[1] + dy)
            i, j = w[0] + n, w[1] + n
            if 0 <= i < box.side and 0 <= j < box.side and not visited[i, j]:
                visited[i, j] = True
                dfs(w, partial + cost[i, j])
                visited[i, j] = False

    for start in starts:
        visited[:] = False
        visited[start[0] + n, start[1] + n] = True
        dfs(start, 0.0)
    return float(best)
