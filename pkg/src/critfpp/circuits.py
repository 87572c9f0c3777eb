"""Circuit structure of critical fields on the triangular lattice.

Three extraction routines share one boundary-walk engine: the inside-out
peeling of maximal disjoint closed circuits, the outside-in recursion for
the outermost closed sequence, and the innermost open circuit of a dyadic
annulus.  On top of those sit the geometric diagnostics used by the
multi-scale studies: square counts along the hierarchy, proximity
statistics between annulus circuits and their enclosing hierarchy
circuits, and annulus-restricted circuit counts.

All extracted circuits are stored counterclockwise (winding number +1
around the origin) starting from their lexicographically smallest vertex,
so equal circuits serialize to identical records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .lattice import (
    Box,
    STEPS_CCW,
    TRI_STRUCTURE,
    flood_mask,
    mask_of_sites,
    sites_of_mask,
    step_index_ccw,
    surrounds_origin,
    winding_number,
)
from .passage import interior_mask
from .weights import WeightField

Site = tuple[int, int]


class CircuitExtractionError(RuntimeError):
    """An extracted boundary walk failed verification.

    This is always a bug or a corrupted field, never a statistical
    fluctuation, so the message carries the field's seed and stream for
    replay.
    """


class InsufficientFieldError(ValueError):
    """The sampled field is too small for the requested construction."""

    def __init__(self, message: str, k: int | None = None,
                 needed_radius: int | None = None):
        super().__init__(message)
        self.k = k
        self.needed_radius = needed_radius


def _field_tag(field: WeightField) -> str:
    return (f"seed={field.seed} stream={field.stream} n={field.n} "
            f"dist={field.spec.cli_string()}")


def euclidean_diameter(sites) -> float:
    """Largest Euclidean distance between two sites of the set."""
    pts = np.asarray(list(sites), dtype=float)
    if pts.shape[0] < 2:
        return 0.0
    if pts.shape[0] > 400:
        # Hull vertices suffice for the diameter; circuits are never
        # collinear so the hull is well defined.
        from scipy.spatial import ConvexHull

        pts = pts[ConvexHull(pts).vertices]
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).max())


@dataclass(frozen=True)
class Circuit:
    """A self-avoiding lattice cycle of homogeneous status around 0.

    Attributes
    ----------
    sites : tuple of (x, y)
        Cyclic vertex list, counterclockwise, starting at the
        lexicographically smallest vertex; the closing edge is implied.
    status : str
        "open" or "closed"; every vertex has this status.
    diameter : float
        Largest Euclidean distance between two vertices.
    """

    sites: tuple
    status: str
    diameter: float

    def __len__(self) -> int:
        return len(self.sites)

    def sup_range(self) -> tuple[int, int]:
        """Smallest and largest sup-norm over the vertices."""
        arr = np.abs(np.asarray(self.sites, dtype=np.int64))
        sup = arr.max(axis=1)
        return int(sup.min()), int(sup.max())

    def interior(self, box: Box) -> np.ndarray:
        """Strict interior as a mask over ``box``."""
        return interior_mask(box, self.sites)

    def site_set(self) -> frozenset:
        return frozenset(self.sites)

    def to_record(self) -> str:
        pts = ";".join(f"{x},{y}" for x, y in self.sites)
        return f"status={self.status} diameter={self.diameter!r} sites={pts}"

    @classmethod
    def from_record(cls, line: str) -> "Circuit":
        fields = {}
        for part in line.strip().split(" "):
            key, _, val = part.partition("=")
            fields[key] = val
        sites = tuple(
            tuple(int(c) for c in pt.split(","))
            for pt in fields["sites"].split(";")
        )
        return cls(sites=sites, status=fields["status"],
                   diameter=float(fields["diameter"]))


def _make_circuit(field: WeightField, cycle: list, status: str) -> Circuit:
    """Build a Circuit from a resolved walk, enforcing the invariants."""
    if len(cycle) < 3:
        raise CircuitExtractionError(
            f"degenerate cycle of length {len(cycle)} ({_field_tag(field)})")
    if len(set(cycle)) != len(cycle):
        raise CircuitExtractionError(
            f"cycle revisits a vertex ({_field_tag(field)})")
    n = field.n
    for v in cycle:
        if max(abs(v[0]), abs(v[1])) > n:
            raise CircuitExtractionError(
                f"cycle leaves the field box at {v} ({_field_tag(field)})")
        if field.is_open(v) != (status == "open"):
            raise CircuitExtractionError(
                f"site {v} breaks the {status} status ({_field_tag(field)})")
    for a, b in zip(cycle, cycle[1:] + cycle[:1]):
        if (b[0] - a[0], b[1] - a[1]) not in STEPS_CCW:
            raise CircuitExtractionError(
                f"consecutive sites {a}, {b} are not adjacent "
                f"({_field_tag(field)})")
    if winding_number(cycle) != 1:
        raise CircuitExtractionError(
            f"cycle does not wind once counterclockwise ({_field_tag(field)})")
    return Circuit(sites=tuple(cycle), status=status,
                   diameter=euclidean_diameter(cycle))


def verify_circuit(field: WeightField, circuit: Circuit) -> None:
    """Full re-verification of an extracted circuit; raises on failure.

    Covers the cheap cyclic invariants plus the flood-based separation
    check, so it is the authority tests defer to.
    """
    _make_circuit(field, list(circuit.sites), circuit.status)
    if not surrounds_origin(circuit.sites, field.n):
        raise CircuitExtractionError(
            f"circuit fails the separation check ({_field_tag(field)})")


def _boundary_walk(mask: np.ndarray, n: int):
    """Pivot walk around the outer boundary of a connected True-region.

    Returns ``(pivots, outsiders)``: the cyclic sequence of region sites
    touched by the walk and the cyclic sequence of complement sites swept
    past.  Consecutive entries of either list are lattice-adjacent.  The
    walk starts at the region's top-extreme site (largest y, then largest
    x) with the probe due north, which is guaranteed to lie on the outer
    face.
    """
    side = mask.shape[0]

    def inside(x: int, y: int) -> bool:
        i, j = x + n, y + n
        return 0 <= i < side and 0 <= j < side and bool(mask[i, j])

    cols = np.nonzero(mask.any(axis=0))[0]
    if cols.size == 0:
        raise CircuitExtractionError("boundary walk on an empty region")
    jmax = int(cols.max())
    imax = int(np.nonzero(mask[:, jmax])[0].max())
    u0: Site = (imax - n, jmax - n)
    t0: Site = (u0[0], u0[1] + 1)
    u, t = u0, t0
    pivots = [u0]
    outsiders = [t0]
    moved_wall_last = False
    cap = 12 * int(mask.sum()) + 64
    for _ in range(cap):
        d2 = (step_index_ccw(u, t) + 1) % 6
        cand = (u[0] + STEPS_CCW[d2][0], u[1] + STEPS_CCW[d2][1])
        if inside(*cand):
            u = cand
            pivots.append(u)
            moved_wall_last = True
        else:
            t = cand
            outsiders.append(t)
            moved_wall_last = False
        if u == u0 and t == t0:
            break
    else:
        raise CircuitExtractionError("boundary walk failed to close")
    # The final transition re-appended the start of whichever list moved.
    if moved_wall_last:
        pivots.pop()
    else:
        outsiders.pop()
    return pivots, outsiders


def _resolve_cycle(walk: list):
    """Reduce a closed boundary walk to the simple cycle winding around 0.

    Splits at repeated vertices, keeping the sub-loop whose winding
    number is nonzero (spur loops wind zero times).  Returns the cycle as
    a counterclockwise list starting at its lexicographically smallest
    vertex, or None when no sub-loop surrounds the origin.
    """
    cyc = list(walk)
    while True:
        first_at = {}
        dup = None
        for idx, v in enumerate(cyc):
            if v in first_at:
                dup = (first_at[v], idx)
                break
            first_at[v] = idx
        if dup is None:
            break
        i, j = dup
        inner, outer = cyc[i:j], cyc[:i] + cyc[j:]
        wi = winding_number(inner) if len(inner) >= 3 else 0
        wo = winding_number(outer) if len(outer) >= 3 else 0
        if wi != 0 and wo != 0:
            raise CircuitExtractionError(
                "boundary walk split into two loops that both wind")
        if wi != 0:
            cyc = inner
        elif wo != 0:
            cyc = outer
        else:
            return None
    if len(cyc) < 3:
        return None
    w = winding_number(cyc)
    if w == 0:
        return None
    if w < 0:
        cyc.reverse()
    k = cyc.index(min(cyc))
    return cyc[k:] + cyc[:k]


def _origin_seed(box: Box) -> np.ndarray:
    seed = np.zeros((box.side, box.side), dtype=bool)
    seed[box.n, box.n] = True
    return seed


def max_disjoint_closed_circuits(field: WeightField, n: int | None = None):
    """Inside-out peeling of disjoint closed circuits surrounding 0.

    Parameters
    ----------
    field : WeightField
    n : int, optional
        Box radius to peel; defaults to the field radius.

    Returns
    -------
    (count, circuits) : (int, list of Circuit)
        The maximal number of pairwise disjoint closed circuits
        surrounding the origin inside B(n), with an explicit witness
        family ordered innermost first.  The count matches the Bernoulli
        passage time T(0, dB(n)) divided by the weight infimum exactly.
    """
    if n is None:
        n = field.n
    if not 0 <= n <= field.n:
        raise ValueError(f"peeling radius {n} outside the field box")
    box = field.box
    region = box.disk_mask(n)
    ring = box.ring_mask(n)
    blob = flood_mask(region, field.open_mask, _origin_seed(box),
                      seeds_free=True)
    family: list[Circuit] = []
    while not bool((blob & ring).any()):
        _, outsiders = _boundary_walk(blob, box.n)
        cyc = _resolve_cycle(outsiders)
        if cyc is None:
            raise CircuitExtractionError(
                f"peeling produced no enclosing cycle ({_field_tag(field)})")
        circuit = _make_circuit(field, cyc, "closed")
        family.append(circuit)
        cmask = mask_of_sites(box, circuit.sites)
        blob |= flood_mask(region, field.open_mask, cmask, seeds_free=True)
    return len(family), family


@dataclass(frozen=True)
class CircuitHierarchy:
    """Outermost closed sequence of a field, innermost first.

    ``circuits[k]`` is strictly inside ``circuits[k+1]``; no closed
    circuit surrounding 0 exists strictly inside ``circuits[0]`` or
    strictly between consecutive members, and none strictly between the
    last member and the box boundary.
    """

    circuits: tuple
    n: int
    field: WeightField

    def __len__(self) -> int:
        return len(self.circuits)


def outermost_closed_sequence(field: WeightField,
                              n: int | None = None) -> CircuitHierarchy:
    """Outside-in recursion for the outermost closed circuit sequence.

    Each round floods the open clusters attached to the current frame
    (first the open boundary sites of B(n), then the previous circuit),
    takes the origin's component of the remainder, and extracts its outer
    rim, which is necessarily closed.  The recursion stops when the
    origin joins the flooded region or lands on the rim walk.
    """
    if n is None:
        n = field.n
    if not 0 <= n <= field.n:
        raise ValueError(f"hierarchy radius {n} outside the field box")
    box = field.box
    region = box.disk_mask(n)
    origin = (0, 0)
    seeds = box.ring_mask(n) & field.open_mask
    seeds_free = False
    out: list[Circuit] = []
    while True:
        wall = flood_mask(region, field.open_mask, seeds, seeds_free)
        if wall[box.n, box.n]:
            break
        z0 = flood_mask(region, ~wall, _origin_seed(box))
        pivots, _ = _boundary_walk(z0, box.n)
        if origin in pivots:
            break
        cyc = _resolve_cycle(pivots)
        if cyc is None:
            raise CircuitExtractionError(
                f"trapped component yielded no rim cycle ({_field_tag(field)})")
        circuit = _make_circuit(field, cyc, "closed")
        out.append(circuit)
        seeds = mask_of_sites(box, circuit.sites)
        seeds_free = True
    return CircuitHierarchy(circuits=tuple(reversed(out)), n=n, field=field)


def innermost_open_circuit(field: WeightField, r: int):
    """Innermost open circuit surrounding 0 inside the annulus A(r).

    A(r) is the set of sites v with 2^r < ||v||_inf <= 2^(r+1).  Closed
    annulus sites are flooded outward from B(2^r); when that blockade
    reaches the outer ring no open circuit exists and None is returned.
    Otherwise the walk around the blockade is the innermost open circuit.
    """
    if r < 0:
        raise ValueError("annulus index must be nonnegative")
    outer_r = 2 ** (r + 1)
    if outer_r > field.n:
        raise InsufficientFieldError(
            f"annulus level r={r} needs field radius >= {outer_r}, "
            f"have {field.n}", needed_radius=outer_r)
    box = field.box
    cheb = box.chebyshev
    annulus = (cheb > 2 ** r) & (cheb <= outer_r)
    inner_disk = box.disk_mask(2 ** r)
    attached = flood_mask(annulus, ~field.open_mask, inner_disk)
    if bool((attached & box.ring_mask(outer_r)).any()):
        return None
    _, outsiders = _boundary_walk(inner_disk | attached, box.n)
    cyc = _resolve_cycle(outsiders)
    if cyc is None:
        raise CircuitExtractionError(
            f"trapped blockade yielded no open cycle ({_field_tag(field)})")
    circuit = _make_circuit(field, cyc, "open")
    lo, hi = circuit.sup_range()
    if lo <= 2 ** r or hi > outer_r:
        raise CircuitExtractionError(
            f"innermost circuit leaves the annulus ({_field_tag(field)})")
    return circuit


@dataclass(frozen=True)
class AnnulusChain:
    """First open circuits over the dyadic annuli, one per level k.

    ``m_values[k]`` is the smallest r >= k whose annulus A(r) contains an
    open circuit surrounding 0, and ``circuits[k]`` is the innermost such
    circuit.  Levels with equal m share the identical circuit object.
    The inner boundary for k = 0 is the origin itself; callers treat the
    sentinel level -1 accordingly.
    """

    k_max: int
    m_values: tuple
    circuits: tuple

    def m(self, k: int) -> int:
        return self.m_values[k]

    def circuit(self, k: int) -> Circuit:
        return self.circuits[k]


def annulus_chain(field: WeightField, k_max: int) -> AnnulusChain:
    """Resolve m(k) and the first open circuits for k = 0 .. k_max.

    Scans r upward from max(k, m(k-1)), reusing per-annulus results, and
    raises InsufficientFieldError naming k when the field is exhausted
    before an open circuit is found.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    memo: dict[int, Circuit | None] = {}
    ms: list[int] = []
    circuits: list[Circuit] = []
    r = 0
    for k in range(k_max + 1):
        r = max(r, k)
        while True:
            if 2 ** (r + 1) > field.n:
                raise InsufficientFieldError(
                    f"field radius {field.n} exhausted while resolving m({k}):"
                    f" annulus level r={r} needs radius >= {2 ** (r + 1)}",
                    k=k, needed_radius=2 ** (r + 1))
            if r not in memo:
                memo[r] = innermost_open_circuit(field, r)
            if memo[r] is not None:
                break
            r += 1
        ms.append(r)
        circuits.append(memo[r])
    return AnnulusChain(k_max=k_max, m_values=tuple(ms),
                        circuits=tuple(circuits))


def _square_range(z: float, u: float):
    # r with r*u <= z <= (r+3)*u, i.e. z/u - 3 <= r <= z/u.
    return range(math.ceil(z / u - 3.0), math.floor(z / u) + 1)


def _squares_of_sites(sites, u: float) -> set:
    sq = set()
    for x, y in sites:
        rs = _square_range(float(x), u)
        ss = _square_range(float(y), u)
        for rr in rs:
            for s in ss:
                sq.add((rr, s))
    return sq


def _square_meets_box(rs: tuple, u: float, limit: int) -> bool:
    # The square [r*u, (r+3)*u] x [s*u, (s+3)*u] holds a site of B(limit)
    # iff both coordinate intervals contain an integer within [-limit, limit].
    for r in rs:
        lo = max(r * u, -float(limit))
        hi = min((r + 3) * u, float(limit))
        if math.ceil(lo) > math.floor(hi):
            return False
    return True


def square_counts(field: WeightField, hierarchy: CircuitHierarchy,
                  j: int, c: float):
    """Count grid squares pinned by successive hierarchy circuits.

    The squares are [r*u, (r+3)*u] x [s*u, (s+3)*u] with u = 2^(c(j+1))
    over integer (r, s).  A square counts toward N when it holds a site
    of B(2^(j+1)) and sites of two successive circuits C_k, C_(k+1) with
    diam(C_k) >= 2^j; toward N3 when it holds sites of three successive
    circuits with diam(C_k) >= 2^(j - (ln j)^2).

    Returns
    -------
    (N, N3) : (int, int)
    """
    if not 0.0 < c < 1.0:
        raise ValueError("square exponent c must lie in (0, 1)")
    if j < 1:
        raise ValueError("scale index j must be >= 1")
    circs = hierarchy.circuits
    if len(circs) < 2:
        return 0, 0
    u = 2.0 ** (c * (j + 1))
    limit = 2 ** (j + 1)
    squares = [_squares_of_sites(ci.sites, u) for ci in circs]
    pair_gate = 2.0 ** j
    triple_gate = 2.0 ** (j - math.log(j) ** 2)
    pairs: set = set()
    triples: set = set()
    for k in range(len(circs) - 1):
        if circs[k].diameter >= pair_gate:
            pairs |= squares[k] & squares[k + 1]
        if k + 2 < len(circs) and circs[k].diameter >= triple_gate:
            triples |= squares[k] & squares[k + 1] & squares[k + 2]
    n_pairs = sum(1 for sq in pairs if _square_meets_box(sq, u, limit))
    n_triples = sum(1 for sq in triples if _square_meets_box(sq, u, limit))
    return n_pairs, n_triples


def min_distance(sites_a, sites_b) -> float:
    """Smallest Euclidean distance between two site sets."""
    a = np.asarray(list(sites_a), dtype=float)
    b = np.asarray(list(sites_b), dtype=float)
    best = np.inf
    # Chunk the cross-distance matrix so large circuits stay cheap.
    step = max(1, int(2 ** 22 // max(1, b.shape[0])))
    for lo in range(0, a.shape[0], step):
        diff = a[lo:lo + step, None, :] - b[None, :, :]
        d = (diff * diff).sum(axis=2).min()
        best = min(best, float(d))
    return math.sqrt(best)


def enclosing_circuit(field: WeightField, hierarchy: CircuitHierarchy,
                      inner: Circuit, k: int | None = None):
    """First hierarchy circuit whose strict interior contains ``inner``."""
    box = field.box
    imask = mask_of_sites(box, inner.sites)
    for cand in hierarchy.circuits:
        if not bool((imask & ~cand.interior(box)).any()):
            return cand
    tag = "" if k is None else f" for level k={k}"
    raise InsufficientFieldError(
        f"no hierarchy circuit encloses the annulus circuit{tag} "
        f"({_field_tag(field)})", k=k)


def proximity_statistic(field: WeightField, chain: AnnulusChain,
                        hierarchy: CircuitHierarchy, k: int,
                        c1_prime: float):
    """Distance from O_k to its enclosing hierarchy circuit.

    Returns ``(d_min, threshold, occurs)`` where threshold is
    2 * diam(C~_k)^c1_prime and ``occurs`` flags d_min below threshold,
    the proximity event driving the lower-bound argument.
    """
    ok = chain.circuit(k)
    tilde = enclosing_circuit(field, hierarchy, ok, k=k)
    d_min = min_distance(ok.sites, tilde.sites)
    threshold = 2.0 * tilde.diameter ** c1_prime
    return d_min, threshold, bool(d_min < threshold)


def annulus_circuit_count(field: WeightField, m: int, margin: int = 2) -> int:
    """Peeling-family count of closed circuits meeting a dyadic annulus.

    Peels B(2^(m+1+margin)) and counts the circuits with a site of
    sup-norm in (2^m, 2^(m+1)].  The result is a certified lower bound
    for the maximal number of disjoint closed circuits surrounding 0
    that intersect the annulus, and the bound can be strict: the greedy
    family maximizes the total count, and its innermost members may duck
    an annulus that some other disjoint circuit crosses.  Exact values
    come from the brute-force oracle on tiny boxes only.
    """
    if m < 0 or margin < 0:
        raise ValueError("annulus index and margin must be nonnegative")
    n = 2 ** (m + 1 + margin)
    if n > field.n:
        raise InsufficientFieldError(
            f"annulus count at m={m} with margin {margin} needs field "
            f"radius >= {n}, have {field.n}", needed_radius=n)
    _, family = max_disjoint_closed_circuits(field, n)
    lo, hi = 2 ** m, 2 ** (m + 1)
    count = 0
    for circuit in family:
        smin, smax = circuit.sup_range()
        # Sup-norm moves by at most 1 per cycle step, so the vertex
        # sup-norms cover every integer in [smin, smax].
        if smin <= hi and smax > lo:
            count += 1
    return count


# ---------------------------------------------------------------------------
# Oracle-grade checks used by the test suite and the verification runner.


def hierarchy_between_oracle(field: WeightField,
                             hierarchy: CircuitHierarchy) -> None:
    """Polynomial oracle for the outermost-sequence optimality.

    Checks that no closed cluster strictly inside the first circuit, nor
    strictly between consecutive circuits, nor strictly between the last
    circuit and the box boundary, separates the origin from the ring.
    Raises AssertionError with context on violation.
    """
    box = field.box
    n = hierarchy.n
    closed = ~field.open_mask
    regions = []
    circs = hierarchy.circuits
    if circs:
        regions.append(("inside first", circs[0].interior(box)))
        for a, b in zip(circs, circs[1:]):
            between = b.interior(box) & ~a.interior(box) \
                & ~mask_of_sites(box, a.sites)
            regions.append(("between", between))
        last = circs[-1]
        outerside = box.disk_mask(n) & ~last.interior(box) \
            & ~mask_of_sites(box, last.sites)
        regions.append(("outside last", outerside))
    else:
        regions.append(("whole box", box.disk_mask(n)))
    for label, region in regions:
        cmask = closed & region
        labels, count = ndimage.label(cmask, structure=TRI_STRUCTURE)
        for idx in range(1, count + 1):
            cluster = labels == idx
            if cluster[box.n, box.n]:
                continue
            if surrounds_origin(cluster, box.n):
                raise AssertionError(
                    f"closed cluster in the '{label}' region separates the "
                    f"origin ({_field_tag(field)})")


def innermost_oracle(field: WeightField, r: int,
                     circuit: Circuit | None) -> None:
    """Check innermost_open_circuit output against first principles.

    When a circuit is returned: it must verify, live in A(r), and leave
    no open circuit surrounding 0 strictly inside it within A(r).  When
    None is returned: no open circuit surrounding 0 may exist in A(r) at
    all, certified by exhibiting a closed blockade path.
    """
    box = field.box
    cheb = box.chebyshev
    annulus = (cheb > 2 ** r) & (cheb <= 2 ** (r + 1))
    open_in_annulus = field.open_mask & annulus

    def any_open_circuit(mask: np.ndarray) -> bool:
        labels, count = ndimage.label(mask, structure=TRI_STRUCTURE)
        for idx in range(1, count + 1):
            if surrounds_origin(labels == idx, box.n):
                return True
        return False

    if circuit is None:
        if any_open_circuit(open_in_annulus):
            raise AssertionError(
                f"annulus A({r}) holds an open circuit but None was "
                f"returned ({_field_tag(field)})")
        return
    verify_circuit(field, circuit)
    lo, hi = circuit.sup_range()
    if lo <= 2 ** r or hi > 2 ** (r + 1):
        raise AssertionError(
            f"returned circuit leaves A({r}) ({_field_tag(field)})")
    inside = circuit.interior(box) & open_in_annulus
    if any_open_circuit(inside):
        raise AssertionError(
            f"an open circuit lies strictly inside the returned one in "
            f"A({r}) ({_field_tag(field)})")


def enumerate_closed_circuits(field: WeightField, n: int,
                              state_cap: int = 400_000):
    """All site sets of simple closed circuits surrounding 0 in B(n).

    Exponential-time enumeration used only as an oracle on tiny boxes.
    Returns None when the state cap is exceeded.
    """
    box = field.box
    sites = [v for v in sites_of_mask(box, box.disk_mask(n))
             if not field.is_open(v) and v != (0, 0)]
    site_set = set(sites)
    found: set = set()
    states = 0

    def against(v):
        return [(v[0] + dx, v[1] + dy) for dx, dy in STEPS_CCW]

    for root in sites:
        stack = [(root, [root], {root})]
        while stack:
            states += 1
            if states > state_cap:
                return None
            v, path, on_path = stack.pop()
            for w in against(v):
                if w == root and len(path) >= 3:
                    found.add(frozenset(path))
                    continue
                if w in on_path or w not in site_set or w < root:
                    continue
                stack.append((w, path + [w], on_path | {w}))
    keep = []
    for cand in found:
        if surrounds_origin(cand, box.n):
            keep.append(cand)
    return keep


def exact_annulus_circuit_count(field: WeightField, m: int,
                                margin: int = 2,
                                state_cap: int = 400_000):
    """Brute-force maximum of disjoint closed circuits meeting the annulus.

    Enumerates every closed circuit surrounding 0 in B(2^(m+1+margin)),
    keeps those with a site of sup-norm in (2^m, 2^(m+1)], and takes the
    longest chain of pairwise disjoint ones (disjoint circuits around 0
    are automatically nested).  Returns None when enumeration overflows
    the state cap.
    """
    n = 2 ** (m + 1 + margin)
    circuits = enumerate_closed_circuits(field, n, state_cap)
    if circuits is None:
        return None
    lo, hi = 2 ** m, 2 ** (m + 1)

    def touches(cand: frozenset) -> bool:
        return any(lo < max(abs(x), abs(y)) <= hi for x, y in cand)

    cands = [c for c in circuits if touches(c)]
    if not cands:
        return 0
    box = field.box
    areas = []
    for cand in cands:
        mask = mask_of_sites(box, cand)
        areas.append(int(interior_mask(box, mask).sum()))
    order = np.argsort(areas, kind="stable")
    cands = [cands[i] for i in order]
    best = [1] * len(cands)
    for i in range(len(cands)):
        for j in range(i):
            if not (cands[i] & cands[j]):
                best[i] = max(best[i], best[j] + 1)
    return max(best)
