"""Triangular-lattice geometry embedded in the integer plane.

Sites are integer pairs (x, y).  Adjacency is the 6-neighbor triangular
rule: the four axis steps plus (+1, -1) and (-1, +1).  Boxes B(n) are
sup-norm balls.  Dense boolean masks over B(n) are indexed [x+n, y+n]
with flat row-major index (x+n)*(2n+1) + (y+n); every helper in the
package uses this layout so parallel workers produce identical arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

Site = tuple[int, int]

# Fixed enumeration order: E, W, N, S, then the two short diagonals.
# Geodesic reconstruction and boundary walks break ties by this order;
# do not reorder.
NEIGHBOR_STEPS: tuple[Site, ...] = (
    (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1),
)

# The same six steps in counterclockwise rotational order starting
# east, for the circuit-tracing walk.
STEPS_CCW: tuple[Site, ...] = (
    (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1),
)

_STEP_INDEX_CCW = {s: i for i, s in enumerate(STEPS_CCW)}

# 3x3 structuring element of the triangular adjacency on the [x+n, y+n]
# grid: the 8-neighborhood minus the (+1,+1) and (-1,-1) corners.
TRI_STRUCTURE = np.array(
    [[0, 1, 1],
     [1, 1, 1],
     [1, 1, 0]], dtype=bool)


def neighbors(v: Site) -> list[Site]:
    """Return the 6 neighbors of ``v`` in the fixed enumeration order."""
    x, y = v
    return [(x + dx, y + dy) for dx, dy in NEIGHBOR_STEPS]


def step_index_ccw(u: Site, v: Site) -> int:
    """Index in STEPS_CCW of the step from ``u`` to its neighbor ``v``."""
    d = (v[0] - u[0], v[1] - u[1])
    try:
        return _STEP_INDEX_CCW[d]
    except KeyError:
        raise ValueError(f"{u} and {v} are not adjacent") from None


@dataclass(frozen=True)
class Box:
    """Sup-norm ball B(n) = {(x, y): max(|x|, |y|) <= n}."""

    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"box radius must be nonnegative, got {self.n}")

    @property
    def side(self) -> int:
        return 2 * self.n + 1

    def contains(self, v: Site) -> bool:
        return max(abs(v[0]), abs(v[1])) <= self.n

    def on_boundary(self, v: Site) -> bool:
        return max(abs(v[0]), abs(v[1])) == self.n

    def index(self, v: Site) -> int:
        """Flat row-major index of ``v``: (x+n)*side + (y+n)."""
        return (v[0] + self.n) * self.side + (v[1] + self.n)

    @cached_property
    def chebyshev(self) -> np.ndarray:
        """(side, side) array of sup-norm distances to the origin."""
        r = np.abs(np.arange(-self.n, self.n + 1))
        return np.maximum(r[:, None], r[None, :])

    def ring_mask(self, r: int) -> np.ndarray:
        return self.chebyshev == r

    def disk_mask(self, r: int) -> np.ndarray:
        return self.chebyshev <= r

    def full_mask(self) -> np.ndarray:
        return np.ones((self.side, self.side), dtype=bool)


@dataclass(frozen=True)
class Annulus:
    """Dyadic annulus: B(2^(k+1)) minus B(2^k)."""

    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"annulus level must be nonnegative, got {self.k}")

    @property
    def inner(self) -> int:
        return 2 ** self.k

    @property
    def outer(self) -> int:
        return 2 ** (self.k + 1)

    def contains(self, v: Site) -> bool:
        r = max(abs(v[0]), abs(v[1]))
        return self.inner < r <= self.outer

    def mask_in(self, box: Box) -> np.ndarray:
        if box.n < self.outer:
            raise ValueError(f"box radius {box.n} < annulus outer {self.outer}")
        c = box.chebyshev
        return (c > self.inner) & (c <= self.outer)


@dataclass(frozen=True)
class Region:
    """Explicit finite vertex set stored as a bitmask over a bounding box."""

    box: Box
    mask: np.ndarray

    def __post_init__(self):
        shape = (self.box.side, self.box.side)
        if self.mask.shape != shape or self.mask.dtype != np.bool_:
            raise ValueError(f"region mask must be bool with shape {shape}")

    def contains(self, v: Site) -> bool:
        return self.box.contains(v) and bool(
            self.mask[v[0] + self.box.n, v[1] + self.box.n])

    @classmethod
    def full(cls, box: Box) -> "Region":
        return cls(box, box.full_mask())

    @classmethod
    def from_sites(cls, box: Box, sites) -> "Region":
        return cls(box, mask_of_sites(box, sites))


def mask_of_sites(box: Box, sites) -> np.ndarray:
    """Bitmask over ``box`` of the given sites; raises if any lies outside."""
    m = np.zeros((box.side, box.side), dtype=bool)
    for x, y in sites:
        if max(abs(x), abs(y)) > box.n:
            raise ValueError(f"site ({x}, {y}) outside B({box.n})")
        m[x + box.n, y + box.n] = True
    return m


def sites_of_mask(box: Box, mask: np.ndarray) -> list[Site]:
    """Sites of a bitmask over ``box``, in row-major order."""
    xs, ys = np.nonzero(mask)
    n = box.n
    return [(int(x) - n, int(y) - n) for x, y in zip(xs, ys)]


def boundary_sites(box: Box) -> list[Site]:
    """Sites of the ring where the sup-norm equals the box radius.

    Row-major order; 8n sites for n >= 1 and just the origin for n = 0.
    """
    return sites_of_mask(box, box.ring_mask(box.n))


def flood_mask(region_mask: np.ndarray, passable_mask: np.ndarray,
               seed_mask: np.ndarray, seeds_free: bool = False) -> np.ndarray:
    """Mask-level flood fill; all three masks share one box layout.

    A site belongs to the result when it is passable, inside the region,
    and reachable from some seed through passable region sites.  The
    first step out of a seed never requires the seed itself to be
    passable.  With ``seeds_free`` the seeds are additionally included
    in the result regardless of their own passability.
    """
    pa = passable_mask & region_mask
    start = ndimage.binary_dilation(seed_mask, structure=TRI_STRUCTURE) & pa
    if start.any():
        labels, _ = ndimage.label(pa, structure=TRI_STRUCTURE)
        keep = np.unique(labels[start])
        comp = np.isin(labels, keep[keep != 0])
    else:
        comp = np.zeros_like(pa)
    if seeds_free:
        comp = comp | (seed_mask & region_mask)
    return comp


def flood_fill(region: Region, passable, seeds, seeds_free: bool = False):
    """Connected expansion from seed sites through passable sites.

    Parameters
    ----------
    region : Region
        Finite vertex set to flood within.
    passable : callable or ndarray
        Predicate on sites, or a boolean mask aligned with ``region.box``.
    seeds : iterable of sites
        Starting sites; every seed must lie inside the region.
    seeds_free : bool, optional
        When True, seeds belong to the result even if not passable
        themselves.  Either way the flood may step off an impassable
        seed onto passable neighbors.

    Returns
    -------
    set of sites
        Passable region sites reachable from some seed through passable
        region sites, plus the seeds themselves when ``seeds_free``.
    """
    box = region.box
    if callable(passable):
        pm = np.zeros_like(region.mask)
        xs, ys = np.nonzero(region.mask)
        for x, y in zip(xs, ys):
            pm[x, y] = bool(passable((int(x) - box.n, int(y) - box.n)))
    else:
        pm = np.asarray(passable, dtype=bool)
    seed_mask = mask_of_sites(box, seeds)
    if (seed_mask & ~region.mask).any():
        raise ValueError("seeds must lie inside the region")
    out = flood_mask(region.mask, pm, seed_mask, seeds_free=seeds_free)
    return set(sites_of_mask(box, out))


def surrounds_origin(s, n: int) -> bool:
    """Whether the vertex set ``s`` separates the origin from the box rim.

    Parameters
    ----------
    s : iterable of sites or boolean mask over B(n)
        Candidate separating set; must lie inside B(n) and avoid the
        origin.
    n : int
        Box radius.

    Returns
    -------
    bool
        True iff a flood fill from the origin through B(n) minus ``s``
        fails to reach the ring of radius n.

    Raises
    ------
    ValueError
        If the origin belongs to ``s``.
    """
    box = Box(n)
    if isinstance(s, np.ndarray) and s.dtype == np.bool_:
        smask = s
    else:
        smask = mask_of_sites(box, s)
    if smask[n, n]:
        raise ValueError("origin belongs to the candidate set")
    seed = np.zeros((box.side, box.side), dtype=bool)
    seed[n, n] = True
    reach = flood_mask(box.full_mask(), ~smask, seed)
    return not bool((reach & box.ring_mask(n)).any())


def winding_number(cycle) -> int:
    """Winding number of a closed lattice path around the origin.

    The path is the polygonal embedding of ``cycle`` in the plane with
    the closing edge implied.  Lattice cycles avoiding the origin never
    pass an edge through it, so the angle sum is well defined.
    """
    pts = np.asarray(cycle, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("cycle must be a sequence of (x, y) pairs")
    if (np.all(pts == 0, axis=1)).any():
        raise ValueError("cycle passes through the origin")
    nxt = np.roll(pts, -1, axis=0)
    cross = pts[:, 0] * nxt[:, 1] - pts[:, 1] * nxt[:, 0]
    dot = (pts * nxt).sum(axis=1)
    return int(round(np.arctan2(cross, dot).sum() / (2.0 * np.pi)))
