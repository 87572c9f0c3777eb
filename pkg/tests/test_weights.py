import numpy as np
import pytest

from critfpp.weights import (
    DistributionSpec,
    FieldTooLargeError,
    LowWeightParams,
    PRNG_ID,
    ThresholdUnsatisfiableError,
    WeightField,
    classify_low_weight,
    infimum_I,
    inverse_cdf,
    low_weight_threshold,
    sample_field,
)

rng = np.random.default_rng(20240818)

BERN = DistributionSpec("bernoulli", (1.0,))
UNI = DistributionSpec("zero_atom_plus_uniform", (2.0, 4.0))
EXP = DistributionSpec("zero_atom_plus_shifted_exponential", (0.0, 1.0))
EXP_SHIFTED = DistributionSpec("zero_atom_plus_shifted_exponential", (1.0, 2.0))
PAR = DistributionSpec("zero_atom_plus_pareto", (1.0, 0.5))
DISC = DistributionSpec("discrete", atoms=(0.0, 0.5, 1.0),
                        masses=(0.5, 0.25, 0.25))

ALL = [BERN, UNI, EXP, EXP_SHIFTED, PAR, DISC]


# -- reference generator ------------------------------------------------

def _philox_ref(ctr, key):
    """Scalar 10-round Philox4x32 on plain Python ints."""
    m0, m1 = 0xD2511F53, 0xCD9E8D57
    w0, w1 = 0x9E3779B9, 0xBB67AE85
    c = list(ctr)
    k = list(key)
    for _ in range(10):
        p0 = m0 * c[0]
        p1 = m1 * c[2]
        c = [((p1 >> 32) ^ c[1] ^ k[0]) & 0xFFFFFFFF,
             p1 & 0xFFFFFFFF,
             ((p0 >> 32) ^ c[3] ^ k[1]) & 0xFFFFFFFF,
             p0 & 0xFFFFFFFF]
        k = [(k[0] + w0) & 0xFFFFFFFF, (k[1] + w1) & 0xFFFFFFFF]
    return c


def _uniform_ref(seed, stream, x, y):
    ctr = (x & 0xFFFFFFFF, y & 0xFFFFFFFF,
           stream & 0xFFFFFFFF, (stream >> 32) & 0xFFFFFFFF)
    key = (seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF)
    c = _philox_ref(ctr, key)
    v = (c[1] << 32) | c[0]
    return ((v >> 11) + 0.5) * 2.0 ** -53


def test_generator_known_answer_vectors():
    # Published test vectors for the 10-round 4x32 generator.
    assert _philox_ref((0, 0, 0, 0), (0, 0)) == [
        0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]
    assert _philox_ref(
        (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
        (0xA4093822, 0x299F31D0)) == [
        0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]
    assert _philox_ref((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2) == [
        0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]


def test_field_matches_scalar_reference():
    for seed, stream in [(0, 0), (7, 0), (2 ** 63 + 11, 5), (12345, 2 ** 40)]:
        f = sample_field(BERN, 6, seed, stream=stream)
        for x in (-6, -1, 0, 3, 6):
            for y in (-6, 0, 2, 6):
                assert f.omega[x + 6, y + 6] == _uniform_ref(seed, stream, x, y)


def test_prng_id():
    assert PRNG_ID == "philox4x32-10"


# -- inverse cdf --------------------------------------------------------

def test_inverse_cdf_examples():
    assert inverse_cdf(BERN, 0.3) == 0.0
    assert inverse_cdf(BERN, 0.7) == 1.0
    assert inverse_cdf(UNI, 0.75) == 3.0


def test_inverse_cdf_domain_errors():
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            inverse_cdf(BERN, bad)


def test_inverse_cdf_nondecreasing():
    u = np.sort(rng.random(2000) * 0.998 + 0.001)
    for spec in ALL:
        vals = spec.inverse(u)
        assert np.all(np.diff(vals) >= 0)


def test_generalized_inverse_galois_property():
    # F(x) >= u iff x >= F^{-1}(u), the defining property of the
    # generalized inverse.
    for spec in ALL:
        for _ in range(300):
            u = float(rng.random() * 0.998 + 0.001)
            x = float(rng.random() * 6.0)
            assert (spec.cdf(x) >= u) == (x >= inverse_cdf(spec, u))


def test_infimum_examples():
    assert infimum_I(BERN) == 1.0
    assert infimum_I(UNI) == 2.0
    assert infimum_I(EXP) == 0.0
    assert infimum_I(DISC) == 0.5
    assert infimum_I(PAR) == 1.0


def test_infimum_consistency():
    for spec in ALL:
        inf = infimum_I(spec)
        for eps in (1e-9, 1e-3, 0.1, 1.0):
            assert spec.cdf(inf + eps) > 0.5
        for x in np.linspace(0, inf, 7)[1:-1]:
            assert spec.cdf(float(x)) <= 0.5


def test_criticality_of_cdf():
    for spec in ALL:
        assert spec.cdf(-1e-9) == 0.0
        assert abs(spec.cdf(0.0) - 0.5) < 1e-12
    assert DISC.cdf(0.0) == 0.5  # exact for the discrete family


def test_spec_validation_errors():
    with pytest.raises(ValueError):
        DistributionSpec("bernoulli", (0.0,))
    with pytest.raises(ValueError):
        DistributionSpec("zero_atom_plus_uniform", (4.0, 2.0))
    with pytest.raises(ValueError):
        DistributionSpec("nosuch", (1.0,))
    with pytest.raises(ValueError):
        DistributionSpec("discrete", atoms=(0.0, 1.0), masses=(0.4, 0.6))
    with pytest.raises(ValueError):
        DistributionSpec("discrete", atoms=(0.0, 1.0), masses=(0.5, 0.4))


def test_min6_sq_finite_flag():
    assert not DistributionSpec("zero_atom_plus_pareto",
                                (1.0, 0.3)).min6_sq_finite
    assert DistributionSpec("zero_atom_plus_pareto",
                            (1.0, 0.5)).min6_sq_finite
    for spec in (BERN, UNI, EXP, DISC):
        assert spec.min6_sq_finite


# -- fields -------------------------------------------------------------

def test_field_deterministic_and_tiny():
    f1 = sample_field(UNI, 0, 99)
    f2 = sample_field(UNI, 0, 99)
    assert f1.omega.shape == (1, 1)
    assert np.array_equal(f1.omega, f2.omega)


def test_open_fraction_near_half():
    f = sample_field(BERN, 64, 7)
    n_sites = 129 ** 2
    sigma = 1.0 / (2.0 * np.sqrt(n_sites))
    assert abs(f.open_mask.mean() - 0.5) < 4 * sigma


def test_subbox_identity():
    small = sample_field(UNI, 8, 123)
    big = sample_field(UNI, 20, 123)
    assert np.array_equal(small.omega, big.omega[12:29, 12:29])


def test_field_byte_limit():
    with pytest.raises(FieldTooLargeError) as err:
        sample_field(BERN, 100, 1, byte_limit=1000)
    assert str(201 * 201 * 8) in str(err.value)


def test_status_weight_equivalence():
    for spec in ALL:
        f = sample_field(spec, 20, 31)
        assert np.array_equal(f.open_mask, f.t == 0.0)
        if spec.infimum > 0:
            assert np.array_equal(f.open_mask, f.t_bern == 0.0)
        else:
            # Degenerate coupling: with a zero infimum the coupled
            # weight vanishes identically.
            assert np.all(f.t_bern == 0.0)


def test_coupling_domination():
    for spec in ALL:
        f = sample_field(spec, 30, 5)
        assert np.all(f.t_bern <= f.t)


def test_tie_at_half_is_open():
    f = WeightField(BERN, 0, 0, 0, np.array([[0.5]]))
    assert f.is_open((0, 0)) and f.t_at((0, 0)) == 0.0
    g = WeightField(BERN, 0, 0, 0, np.array([[0.5000001]]))
    assert not g.is_open((0, 0))


def test_empirical_cdf_close_to_f():
    # Kolmogorov distance probed on a dense quantile grid plus the atom
    # locations; one million draws per family.
    for spec in ALL:
        f = sample_field(spec, 500, 2024)
        t = np.sort(f.t, axis=None)
        m = t.size
        assert m > 10 ** 6
        probes = [inverse_cdf(spec, u)
                  for u in np.linspace(0.001, 0.999, 397)]
        probes += [0.0, spec.infimum, spec.infimum + 1e-9]
        d = 0.0
        for x in probes:
            emp = np.searchsorted(t, x, side="right") / m
            d = max(d, abs(emp - spec.cdf(x)))
        assert d < 0.005, f"{spec.family}: KS distance {d}"


# -- low-weight thresholds ---------------------------------------------

def test_threshold_atom_cases_are_zero():
    for spec in (BERN, DISC):
        params = low_weight_threshold(spec, 0.7, j_max=6)
        assert params.atom_case
        assert params.a_table == (0.0,) * 6


def test_threshold_uniform_worked_example():
    params = low_weight_threshold(UNI, 0.5, j_max=4)
    a4 = params.a_for(4)
    # Smallest a with a/4 >= 2^-2 is 1.0, up to grid resolution.
    assert 1.0 <= a4 <= 1.02
    mass = UNI.cdf(2.0 + a4) - 0.5
    assert mass >= 2.0 ** (-0.5 * 4 / 2 - 1)


def test_threshold_monotone_and_verified():
    for spec in (UNI, EXP, EXP_SHIFTED, PAR):
        for c2 in (0.2, 0.5, 0.9):
            params = low_weight_threshold(spec, c2, j_max=10)
            table = params.a_table
            assert all(table[i] >= table[i + 1] for i in range(9))
            base = spec.cdf(spec.infimum)
            for j in range(1, 11):
                mass = spec.cdf(spec.infimum + params.a_for(j)) - base
                assert mass >= 2.0 ** (-c2 * j / 2.0 - 1.0)


class _FlatTail:
    """Atomless stub with no mass near its infimum."""

    has_atom_at_infimum = False
    positive_support_width = 1.0
    infimum = 0.0

    @staticmethod
    def cdf(x):
        return 0.5


def test_threshold_unsatisfiable_names_level():
    with pytest.raises(ThresholdUnsatisfiableError) as err:
        low_weight_threshold(_FlatTail(), 0.5, j_max=3)
    assert "j=1" in str(err.value)


def test_threshold_c2_domain():
    with pytest.raises(ValueError):
        low_weight_threshold(UNI, 0.0)
    with pytest.raises(ValueError):
        low_weight_threshold(UNI, 1.0)


def test_classify_low_weight_bernoulli():
    params = low_weight_threshold(BERN, 0.5, j_max=3)
    closed = WeightField(BERN, 0, 0, 0, np.array([[0.9]]))
    opened = WeightField(BERN, 0, 0, 0, np.array([[0.1]]))
    assert classify_low_weight(closed, (0, 0), 2, params)
    assert not classify_low_weight(opened, (0, 0), 2, params)


def test_classify_low_weight_window():
    params = LowWeightParams(0.5, (1.0, 1.0, 1.0, 1.0), False, 2.0)
    inside = WeightField(UNI, 0, 0, 0, np.array([[0.625]]))   # t = 2.5
    outside = WeightField(UNI, 0, 0, 0, np.array([[0.875]]))  # t = 3.5
    assert inside.t_at((0, 0)) == 2.5
    assert classify_low_weight(inside, (0, 0), 4, params)
    assert not classify_low_weight(outside, (0, 0), 4, params)


# -- serialization ------------------------------------------------------

def test_config_roundtrip():
    for spec in ALL:
        again = DistributionSpec.from_config(spec.to_config())
        assert again == spec


def test_cli_roundtrip():
    for spec in ALL:
        again = DistributionSpec.from_cli(spec.cli_string())
        assert again == spec
    assert DistributionSpec.from_cli("bernoulli:1") == BERN
    assert DistributionSpec.from_cli("zero_atom_plus_uniform:2,4") == UNI
    with pytest.raises(ValueError):
        DistributionSpec.from_cli("gaussian:0,1")
