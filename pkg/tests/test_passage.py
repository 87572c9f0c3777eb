import numpy as np
import pytest

from critfpp._kernels import bfs01_grid, dijkstra_grid
from critfpp.lattice import Box, boundary_sites
from critfpp.passage import (
    PassageResult,
    brute_force_time,
    circuit_to_circuit,
    first_passage,
    interior_mask,
    path_is_valid,
    point_to_box,
    recompute_time,
    ring_times,
    solve_distances,
)
from critfpp.weights import DistributionSpec, WeightField, sample_field

rng = np.random.default_rng(20240819)

BERN = DistributionSpec("bernoulli", (1.0,))
UNI = DistributionSpec("zero_atom_plus_uniform", (1.0, 2.0))
EXP = DistributionSpec("zero_atom_plus_shifted_exponential", (1.0, 1.0))
PAR = DistributionSpec("zero_atom_plus_pareto", (1.0, 0.5))
DISC = DistributionSpec("discrete", atoms=(0.0, 0.5, 1.0),
                        masses=(0.5, 0.25, 0.25))


def _field(spec, n, omega):
    return WeightField(spec, n, 0, 0, np.asarray(omega, dtype=float))


def _random_field(spec, n):
    return _field(spec, n, rng.random((2 * n + 1, 2 * n + 1)))


def test_all_open_gives_zero():
    f = _field(BERN, 3, np.full((7, 7), 0.25))
    for kind in ("general", "bernoulli"):
        res = point_to_box(f, kind, 3)
        assert res.time == 0.0


def test_all_closed_bernoulli_equals_radius():
    f = _field(BERN, 5, np.full((11, 11), 0.75))
    res = point_to_box(f, "bernoulli", 5)
    assert res.time == 5.0 and res.steps == 5


def test_intersecting_sets():
    f = _random_field(BERN, 2)
    res = first_passage(f, "general", [(0, 0), (1, 1)], [(1, 1), (2, 2)],
                        want_geodesic=True)
    assert res.time == 0.0
    assert res.source_hit == res.target_hit == (1, 1)
    assert res.geodesic == ((1, 1),)


def test_point_to_box_radius_zero():
    f = _random_field(UNI, 2)
    assert point_to_box(f, "general", 0).time == 0.0


def test_validation_errors():
    f = _random_field(BERN, 2)
    with pytest.raises(ValueError):
        first_passage(f, "general", [], [(0, 0)])
    with pytest.raises(ValueError):
        first_passage(f, "general", [(0, 0)], [])
    with pytest.raises(ValueError):
        first_passage(f, "general", [(5, 5)], [(0, 0)])
    with pytest.raises(ValueError):
        first_passage(f, "nosuch", [(0, 0)], [(1, 1)])
    with pytest.raises(ValueError):
        point_to_box(f, "general", 7)


def test_enumeration_oracle_on_tiny_box():
    # Exhaustive self-avoiding path enumeration on B(1), both kinds.
    ring = boundary_sites(Box(1))
    for i in range(60):
        spec = (BERN, UNI, DISC)[i % 3]
        f = _random_field(spec, 1)
        for kind in ("general", "bernoulli"):
            want = brute_force_time(f, kind, [(0, 0)], ring)
            got = first_passage(f, kind, [(0, 0)], ring).time
            assert got == pytest.approx(want, abs=1e-12)


def test_enumeration_oracle_nested_rings():
    inner = boundary_sites(Box(1))
    outer = boundary_sites(Box(3))
    for i in range(30):
        spec = (BERN, UNI, EXP)[i % 3]
        f = _random_field(spec, 3)
        for kind in ("general", "bernoulli"):
            want = brute_force_time(f, kind, inner, outer)
            got = circuit_to_circuit(f, kind, inner, outer).time
            assert got == pytest.approx(want, abs=1e-12)


def test_circuit_to_circuit_validation():
    f = _random_field(BERN, 3)
    ring1 = boundary_sites(Box(1))
    ring3 = boundary_sites(Box(3))
    with pytest.raises(ValueError):
        circuit_to_circuit(f, "general", ring1, ring1)
    with pytest.raises(ValueError):
        circuit_to_circuit(f, "general", ring3, ring1)


def test_circuit_to_circuit_open_rim():
    # Open outer rim: the single entering vertex costs nothing.
    om = rng.random((9, 9))
    box = Box(4)
    om[box.chebyshev == 3] = 0.9  # closed ring between
    om[box.chebyshev == 4] = 0.2  # open target rim
    f = _field(BERN, 4, om)
    res = circuit_to_circuit(f, "bernoulli", boundary_sites(Box(3)),
                             boundary_sites(Box(4)))
    assert res.time == 0.0


def test_interior_mask_validation():
    box = Box(3)
    with pytest.raises(ValueError):
        interior_mask(box, [(0, 0)])
    broken = [v for v in boundary_sites(Box(1)) if v != (1, 0)]
    with pytest.raises(ValueError):
        interior_mask(box, broken)
    m = interior_mask(box, boundary_sites(Box(2)))
    assert m.sum() == 9  # B(1)


def test_monotone_in_radius():
    for spec in (BERN, UNI):
        f = sample_field(spec, 24, 404)
        for kind in ("general", "bernoulli"):
            times = ring_times(f, kind)
            assert times[0] == 0.0
            assert np.all(np.diff(times) >= 0)
            r5 = point_to_box(f, kind, 5).time
            r20 = point_to_box(f, kind, 20).time
            assert r5 <= r20


def test_ring_times_match_point_to_box():
    f = sample_field(UNI, 16, 777)
    for kind in ("general", "bernoulli"):
        times = ring_times(f, kind)
        scale = f.spec.infimum if kind == "bernoulli" else 1.0
        for n in (1, 2, 7, 16):
            assert scale * times[n] == point_to_box(f, kind, n).time


def test_coupling_domination_of_times():
    # Families with dyadic infimum so both sides evaluate exactly.
    specs = [BERN, UNI, EXP, PAR, DISC]
    checked = 0
    for i in range(250):
        f = _random_field(specs[i % 5], 4)
        targets = [boundary_sites(Box(4)), boundary_sites(Box(2)),
                   [(3, -2)], [(0, 4), (-4, 0)]]
        for tgt in targets:
            tb = first_passage(f, "bernoulli", [(0, 0)], tgt).time
            tg = first_passage(f, "general", [(0, 0)], tgt).time
            assert tb <= tg
            checked += 1
    assert checked >= 1000


def test_two_level_queue_matches_heap():
    # The 0/1 two-level queue and the heap solver must agree exactly.
    count = 0
    for i in range(1000):
        n = 4 if i % 10 else 16
        f = _random_field(BERN, n)
        src = np.zeros((f.side, f.side), dtype=bool)
        src[f.n, f.n] = True
        steps, _ = bfs01_grid(~f.open_mask, src)
        dist, _ = dijkstra_grid((~f.open_mask).astype(np.float64), src)
        assert np.array_equal(steps.astype(np.float64), dist)
        count += 1
    assert count >= 1000


def test_geodesic_reconstruction_exact():
    for i in range(40):
        spec = (BERN, UNI, EXP, PAR, DISC)[i % 5]
        f = _random_field(spec, 5)
        ring = boundary_sites(Box(5))
        for kind in ("general", "bernoulli"):
            res = first_passage(f, kind, [(0, 0)], ring, want_geodesic=True)
            g = res.geodesic
            assert path_is_valid(g)
            assert g[0] == res.source_hit == (0, 0)
            assert g[-1] == res.target_hit
            assert max(abs(c) for c in g[-1]) == 5
            assert recompute_time(f, kind, g) == res.time
            if kind == "bernoulli":
                assert res.time == f.spec.infimum * res.steps


def test_geodesic_between_sets():
    for i in range(20):
        f = _random_field(UNI, 4)
        A = boundary_sites(Box(1))
        B = boundary_sites(Box(4))
        res = first_passage(f, "general", A, B, want_geodesic=True)
        g = res.geodesic
        assert path_is_valid(g)
        assert g[0] in set(A) and g[-1] in set(B)
        assert recompute_time(f, "general", g) == res.time


def test_path_concatenation_bound():
    for i in range(30):
        spec = (UNI, EXP)[i % 2]
        f = _random_field(spec, 4)
        ring2 = boundary_sites(Box(2))
        ring4 = boundary_sites(Box(4))
        r1 = first_passage(f, "general", [(0, 0)], ring2, want_geodesic=True)
        r2 = first_passage(f, "general", [r1.target_hit], ring4,
                           want_geodesic=True)
        total = (recompute_time(f, "general", r1.geodesic)
                 + recompute_time(f, "general", r2.geodesic))
        direct = first_passage(f, "general", [(0, 0)], ring4).time
        assert direct <= total + 1e-12


def test_solve_distances_relaxation_property():
    # dist(w) <= dist(v) + t_w for every edge, equality somewhere.
    f = _random_field(UNI, 4)
    src = np.zeros((9, 9), dtype=bool)
    src[4, 4] = True
    dist = solve_distances(f, "general", src)
    t = f.t
    for i in range(9):
        for j in range(9):
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)):
                a, b = i + di, j + dj
                if 0 <= a < 9 and 0 <= b < 9:
                    assert dist[a, b] <= dist[i, j] + t[a, b] + 1e-12
