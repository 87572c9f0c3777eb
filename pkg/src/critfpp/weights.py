"""Critical weight distributions and seeded weight fields.

Every built-in family puts mass exactly 1/2 at zero, the critical
density for site percolation on the triangular lattice.  Fields draw
one uniform per site from a counter-based generator keyed by
(seed, stream, site coordinates), so regeneration is bit-identical and
any sub-box of a larger field matches the same sub-box sampled
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from ._kernels import philox_uniform_grid
from .lattice import Box

# Identifier of the per-site uniform generator, recorded in output
# files so archived runs can be regenerated.
PRNG_ID = "philox4x32-10"

DEFAULT_FIELD_BYTE_LIMIT = 2 ** 31

GRID_POINTS = 2048
GRID_SPAN = 40  # the search grid spans this many powers of two

_FAMILY_PARAMS = {
    "bernoulli": ("I",),
    "zero_atom_plus_uniform": ("a", "b"),
    "zero_atom_plus_shifted_exponential": ("a", "lam"),
    "zero_atom_plus_pareto": ("a", "alpha"),
    "discrete": (),
}


class FieldTooLargeError(MemoryError):
    """Requested field exceeds the allocation budget."""


class ThresholdUnsatisfiableError(ValueError):
    """No grid point carries enough mass for the requested level."""


@dataclass(frozen=True)
class DistributionSpec:
    """A critical weight distribution: F(0-) = 0 and F(0) = 1/2 exactly.

    Parameters
    ----------
    family : str
        One of 'bernoulli', 'zero_atom_plus_uniform',
        'zero_atom_plus_shifted_exponential', 'zero_atom_plus_pareto',
        'discrete'.
    params : tuple of float
        Family parameters in the order given by ``_FAMILY_PARAMS``:
        bernoulli carries the positive jump location; the zero-atom
        families carry the offset of their continuous part plus one
        shape parameter.
    atoms, masses : tuple of float
        Discrete family only: atom locations (0 must be one of them,
        with mass exactly 1/2) and their probabilities.
    """

    family: str
    params: tuple = ()
    atoms: tuple = ()
    masses: tuple = ()

    def __post_init__(self):
        if self.family not in _FAMILY_PARAMS:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "params",
                           tuple(float(p) for p in self.params))
        if self.family == "discrete":
            self._init_discrete()
            return
        names = _FAMILY_PARAMS[self.family]
        if len(self.params) != len(names):
            raise ValueError(
                f"{self.family} takes parameters {names}, got {self.params}")
        p = dict(zip(names, self.params))
        if self.family == "bernoulli" and p["I"] <= 0:
            raise ValueError("bernoulli jump must be positive")
        if self.family == "zero_atom_plus_uniform":
            if not 0 <= p["a"] < p["b"]:
                raise ValueError("uniform part needs 0 <= a < b")
        if self.family == "zero_atom_plus_shifted_exponential":
            if p["a"] < 0 or p["lam"] <= 0:
                raise ValueError("exponential part needs a >= 0, lam > 0")
        if self.family == "zero_atom_plus_pareto":
            if p["a"] <= 0 or p["alpha"] <= 0:
                raise ValueError("pareto part needs a > 0, alpha > 0")

    def _init_discrete(self):
        if len(self.atoms) == 0 or len(self.atoms) != len(self.masses):
            raise ValueError("discrete family needs matching atoms and masses")
        pairs = sorted(zip((float(a) for a in self.atoms),
                           (float(m) for m in self.masses)))
        atoms = tuple(a for a, _ in pairs)
        masses = tuple(m for _, m in pairs)
        if len(set(atoms)) != len(atoms) or atoms[0] < 0:
            raise ValueError("atoms must be distinct and nonnegative")
        if any(m <= 0 for m in masses):
            raise ValueError("masses must be positive")
        # Criticality is checked in exact rational arithmetic; floats
        # are exact rationals, so dyadic masses pass exactly.
        total = sum(Fraction(m) for m in masses)
        if total != 1:
            raise ValueError(f"masses sum to {float(total)}, need exactly 1")
        if atoms[0] != 0.0 or Fraction(masses[0]) != Fraction(1, 2):
            raise ValueError("discrete family needs mass exactly 1/2 at 0")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    def param(self, name: str) -> float:
        return dict(zip(_FAMILY_PARAMS[self.family], self.params))[name]

    @property
    def infimum(self) -> float:
        """inf{x > 0: F(x) > 1/2}, the bottom of the positive support."""
        if self.family == "bernoulli":
            return self.params[0]
        if self.family == "discrete":
            return self.atoms[1]
        return self.params[0]

    @property
    def has_atom_at_infimum(self) -> bool:
        """True when the distribution charges its positive infimum."""
        return self.family in ("bernoulli", "discrete")

    @property
    def min6_sq_finite(self) -> bool:
        """Whether the square of the minimum of 6 iid draws is integrable.

        Only the heavy-tail family can fail this: the minimum of 6 iid
        draws inherits tail exponent 6*alpha, so the second moment is
        finite iff alpha > 1/3.
        """
        if self.family == "zero_atom_plus_pareto":
            return self.param("alpha") > 1.0 / 3.0
        return True

    @property
    def positive_support_width(self) -> float:
        """Width of the search window above the infimum.

        Bounded families use the exact support width; unbounded ones use
        the window holding all but 2^-31 of the total mass.
        """
        if self.family == "zero_atom_plus_uniform":
            return self.param("b") - self.param("a")
        if self.family == "zero_atom_plus_shifted_exponential":
            return 30.0 * math.log(2.0) / self.param("lam")
        if self.family == "zero_atom_plus_pareto":
            return self.param("a") * (2.0 ** (30.0 / self.param("alpha")) - 1.0)
        raise ValueError(f"{self.family} is an atom family; no search window")

    @cached_property
    def _cum(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.masses))

    def cdf(self, x: float) -> float:
        """F(x) = P(t <= x)."""
        if x < 0:
            return 0.0
        if self.family == "bernoulli":
            return 0.5 if x < self.params[0] else 1.0
        if self.family == "discrete":
            i = np.searchsorted(np.asarray(self.atoms), x, side="right")
            return float(self._cum[i - 1]) if i else 0.0
        a = self.params[0]
        if x < a:
            return 0.5
        if self.family == "zero_atom_plus_uniform":
            b = self.params[1]
            return 1.0 if x >= b else 0.5 + (x - a) / (2.0 * (b - a))
        if self.family == "zero_atom_plus_shifted_exponential":
            return 1.0 - 0.5 * math.exp(-self.params[1] * (x - a))
        return 1.0 - 0.5 * (a / x) ** self.params[1]

    def inverse(self, u):
        """Vectorized generalized inverse; assumes u in (0,1)."""
        u = np.asarray(u, dtype=np.float64)
        if self.family == "bernoulli":
            return np.where(u <= 0.5, 0.0, self.params[0])
        if self.family == "discrete":
            idx = np.searchsorted(self._cum, u, side="left")
            return np.asarray(self.atoms)[idx]
        a = self.params[0]
        if self.family == "zero_atom_plus_uniform":
            b = self.params[1]
            pos = a + (u - 0.5) * 2.0 * (b - a)
        elif self.family == "zero_atom_plus_shifted_exponential":
            pos = a - np.log(2.0 * (1.0 - u)) / self.params[1]
        else:
            pos = a * (2.0 * (1.0 - u)) ** (-1.0 / self.params[1])
        return np.where(u <= 0.5, 0.0, pos)

    # -- serialization ------------------------------------------------

    def to_config(self) -> str:
        """Structured-text block: one 'name = value' line per field."""
        lines = [f"family = {self.family}"]
        for name, value in zip(_FAMILY_PARAMS[self.family], self.params):
            lines.append(f"{name} = {value!r}")
        if self.family == "discrete":
            lines.append("atoms = " + ", ".join(repr(a) for a in self.atoms))
            lines.append("masses = " + ", ".join(repr(m) for m in self.masses))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config(cls, text: str) -> "DistributionSpec":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        family = fields.pop("family", None)
        if family is None:
            raise ValueError("config block lacks a family line")
        if family == "discrete":
            atoms = tuple(float(v) for v in fields["atoms"].split(","))
            masses = tuple(float(v) for v in fields["masses"].split(","))
            return cls("discrete", atoms=atoms, masses=masses)
        names = _FAMILY_PARAMS.get(family)
        if names is None:
            raise ValueError(f"unknown family {family!r}")
        return cls(family, tuple(float(fields[n]) for n in names))

    def cli_string(self) -> str:
        """Compact one-token form, e.g. 'bernoulli:1.0'."""
        if self.family == "discrete":
            body = ",".join(f"{a!r}={m!r}"
                            for a, m in zip(self.atoms, self.masses))
        else:
            body = ",".join(repr(p) for p in self.params)
        return f"{self.family}:{body}"

    @classmethod
    def from_cli(cls, text: str) -> "DistributionSpec":
        family, _, body = text.partition(":")
        family = family.strip()
        if family not in _FAMILY_PARAMS:
            raise ValueError(f"unknown family {family!r}")
        if family == "discrete":
            atoms, masses = [], []
            for piece in body.split(","):
                a, _, m = piece.partition("=")
                atoms.append(float(a))
                masses.append(float(m))
            return cls("discrete", atoms=tuple(atoms), masses=tuple(masses))
        params = tuple(float(p) for p in body.split(",")) if body else ()
        return cls(family, params)


def inverse_cdf(spec: DistributionSpec, u) -> float:
    """Generalized inverse F^{-1}(u) = inf{y: F(y) >= u}.

    Parameters
    ----------
    spec : DistributionSpec
    u : float
        Must lie strictly between 0 and 1.

    Returns
    -------
    float
        The weight; 0 whenever u <= 1/2.
    """
    uf = float(u)
    if not 0.0 < uf < 1.0:
        raise ValueError(f"u must lie in (0,1), got {u}")
    return float(spec.inverse(uf))


def infimum_I(spec: DistributionSpec) -> float:
    """The infimum of the positive support: inf{x > 0: F(x) > 1/2}."""
    return spec.infimum


@dataclass(frozen=True)
class WeightField:
    """One sampled weight configuration on B(n).

    ``omega`` holds the per-site uniforms indexed [x+n, y+n]; the
    general weights, the two-point coupled weights, and the open/closed
    statuses derive from it lazily.  A site is open iff omega <= 1/2
    (ties open), iff its general weight is 0; when the infimum is
    positive this also matches the coupled weight being 0 (for a zero
    infimum the coupled field vanishes identically).
    """

    spec: DistributionSpec
    n: int
    seed: int
    stream: int
    omega: np.ndarray = field(repr=False)

    @property
    def box(self) -> Box:
        return Box(self.n)

    @property
    def side(self) -> int:
        return 2 * self.n + 1

    @cached_property
    def open_mask(self) -> np.ndarray:
        return self.omega <= 0.5

    @cached_property
    def t(self) -> np.ndarray:
        """General weights F^{-1}(omega)."""
        return self.spec.inverse(self.omega)

    @cached_property
    def t_bern(self) -> np.ndarray:
        """Coupled two-point weights: the infimum on closed sites, else 0."""
        return np.where(self.open_mask, 0.0, self.spec.infimum)

    def omega_at(self, v) -> float:
        return float(self.omega[v[0] + self.n, v[1] + self.n])

    def t_at(self, v) -> float:
        return float(self.t[v[0] + self.n, v[1] + self.n])

    def is_open(self, v) -> bool:
        return bool(self.open_mask[v[0] + self.n, v[1] + self.n])


def sample_field(spec: DistributionSpec, n: int, seed: int, stream: int = 0,
                 byte_limit: int = DEFAULT_FIELD_BYTE_LIMIT) -> WeightField:
    """Sample the weight field on B(n) for one (seed, stream) pair.

    Each site's uniform is a pure function of (seed, stream, x, y), so
    the result is reproducible bit for bit and independent of iteration
    order, worker count, and box radius.

    Parameters
    ----------
    spec : DistributionSpec
    n : int
        Box radius.
    seed : int
        64-bit key; reduced mod 2^64.
    stream : int, optional
        64-bit stream id for independent fields under one seed.
    byte_limit : int, optional
        Allocation budget for the uniform grid.

    Raises
    ------
    FieldTooLargeError
        If the uniform grid alone would exceed ``byte_limit`` bytes.
    """
    if n < 0:
        raise ValueError(f"radius must be nonnegative, got {n}")
    side = 2 * n + 1
    need = side * side * 8
    if need > byte_limit:
        raise FieldTooLargeError(
            f"field of radius {n} needs {need} bytes of uniforms, "
            f"over the {byte_limit}-byte budget")
    mask = (1 << 64) - 1
    omega = philox_uniform_grid(np.uint64(seed & mask),
                                np.uint64(stream & mask), np.int64(n))
    return WeightField(spec, n, int(seed & mask), int(stream & mask), omega)


@dataclass(frozen=True)
class LowWeightParams:
    """Per-level thresholds bounding weights just above the infimum.

    ``a_table[j-1]`` is the threshold for level j; in the atom case the
    table is identically zero and membership means hitting the infimum
    exactly.
    """

    c2: float
    a_table: tuple
    atom_case: bool
    infimum: float

    def a_for(self, j: int) -> float:
        if not 1 <= j <= len(self.a_table):
            raise ValueError(
                f"level {j} outside table range 1..{len(self.a_table)}")
        return self.a_table[j - 1]


def low_weight_threshold(spec: DistributionSpec, c2: float,
                         j_max: int = 12) -> LowWeightParams:
    """Build the level-j threshold table for weights near the infimum.

    For atom families the table is identically zero.  Otherwise each
    entry is the smallest point of a geometric search grid whose mass
    P(I < t <= I + a) reaches 2^(-c2*j/2 - 1), post-processed to be
    nonincreasing and re-verified entry by entry.  The table starts at
    j = 1: no circuit surrounding the origin has diameter below 2, so
    level 0 never constrains one.

    Raises
    ------
    ThresholdUnsatisfiableError
        If no grid point carries the required mass for some level
        (the error names the offending level).
    """
    if not 0.0 < c2 < 1.0:
        raise ValueError(f"c2 must lie in (0,1), got {c2}")
    if j_max < 1:
        raise ValueError(f"j_max must be at least 1, got {j_max}")
    if spec.has_atom_at_infimum:
        return LowWeightParams(c2, (0.0,) * j_max, True, spec.infimum)
    width = spec.positive_support_width
    expo = -GRID_SPAN * (1.0 - np.arange(GRID_POINTS) / (GRID_POINTS - 1))
    grid = width * 2.0 ** expo
    base = spec.cdf(spec.infimum)
    mass = np.array([spec.cdf(spec.infimum + a) for a in grid]) - base
    table = []
    for j in range(1, j_max + 1):
        need = 2.0 ** (-c2 * j / 2.0 - 1.0)
        ok = np.nonzero(mass >= need)[0]
        if ok.size == 0:
            raise ThresholdUnsatisfiableError(
                f"no grid point reaches mass 2^(-{c2}*{j}/2 - 1) "
                f"for level j={j}")
        table.append(float(grid[ok[0]]))
    # The mass requirement relaxes with j, so the minimal choices are
    # already nonincreasing; the running maximum makes that structural.
    for i in range(j_max - 2, -1, -1):
        table[i] = max(table[i], table[i + 1])
    for j, a in enumerate(table, start=1):
        if spec.cdf(spec.infimum + a) - base < 2.0 ** (-c2 * j / 2.0 - 1.0):
            raise ThresholdUnsatisfiableError(
                f"verification failed for level j={j}")
    return LowWeightParams(c2, tuple(table), False, spec.infimum)


def classify_low_weight(field: WeightField, v, j: int,
                        params: LowWeightParams) -> bool:
    """Whether the weight at ``v`` sits within the level-j window.

    Atom case: the weight equals the infimum exactly.  Otherwise: the
    weight lies in (I, I + a_j].
    """
    tv = field.t_at(v)
    if params.atom_case:
        return tv == params.infimum
    return params.infimum < tv <= params.infimum + params.a_for(j)
