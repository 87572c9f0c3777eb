"""Statistical studies over the coupled weight fields.

Ladder regressions for the mean and variance of box passage times,
coupling-gap decay, characteristic quantile sums, the variance
decomposition of the time across the dyadic circuit chain, its
single-field shortcut check, and arm-probability ladders.

Determinism contract: every study is a pure function of its inputs and
seed.  Per-sample values are kept in sample-index order and reduced with
a fixed-shape pairwise tree, so aggregates come out bit-identical no
matter which worker schedule produced the records.  Sample functions at
module level take only picklable arguments and are the parallel unit;
aggregation always runs serially over index-ordered records.
"""

import math
from dataclasses import dataclass

import numpy as np

from .circuits import InsufficientFieldError, annulus_chain
from .arms import ArmEventSpec, arm_exponent, has_disjoint_arms
from .passage import first_passage, ring_times, solve_distances
from .weights import DistributionSpec, sample_field

# Streams for nested resampling never collide with outer streams: outer
# samples use the low range, inner fields and independent single-field
# passes use disjoint high ranges.
INNER_STREAM_BASE = 1 << 40
SINGLE_FIELD_STREAM_BASE = 1 << 41

# Regressions drop this many of the smallest ladder scales by default:
# additive O(1) transients dominate the small scales of slope*log n fits.
# A config knob; the window actually used is always part of the fit.
DEFAULT_DROP_SCALES = 2

ARM_SAMPLING_SPEC = DistributionSpec.from_cli("bernoulli:1.0")


def unit_time_slope() -> float:
    """Asymptotic slope of E T(0, dB(n)) / log n per unit infimum."""
    return 1.0 / (2.0 * math.sqrt(3.0) * math.pi)


def unit_variance_slope() -> float:
    """Asymptotic slope of Var T(0, dB(n)) / log n per squared infimum."""
    return 2.0 / (3.0 * math.sqrt(3.0) * math.pi) - 1.0 / (2.0 * math.pi ** 2)


def target_time_slope(spec: DistributionSpec) -> float:
    return spec.infimum * unit_time_slope()


def target_variance_slope(spec: DistributionSpec) -> float:
    return spec.infimum ** 2 * unit_variance_slope()


def tree_sum(values) -> float:
    """Sum with a fixed pairwise reduction tree.

    The tree shape depends only on the length, so the result is a
    deterministic function of the value sequence.
    """
    arr = [float(v) for v in values]
    if not arr:
        return 0.0
    while len(arr) > 1:
        arr = [arr[i] + arr[i + 1] if i + 1 < len(arr) else arr[i]
               for i in range(0, len(arr), 2)]
    return arr[0]


def mean_se(values) -> tuple:
    """Sample mean and its standard error (0 for fewer than 2 values)."""
    m = len(values)
    if m == 0:
        raise ValueError("no values to average")
    mean = tree_sum(values) / m
    if m == 1:
        return mean, 0.0
    var = tree_sum([(v - mean) ** 2 for v in values]) / (m - 1)
    return mean, math.sqrt(max(var, 0.0) / m)


def variance_se(values) -> tuple:
    """Unbiased sample variance and its moment-based standard error."""
    m = len(values)
    if m < 2:
        raise ValueError("variance needs at least 2 values")
    mean = tree_sum(values) / m
    centered_sq = [(v - mean) ** 2 for v in values]
    var = tree_sum(centered_sq) / (m - 1)
    m4 = tree_sum([c * c for c in centered_sq]) / m
    se_sq = (m4 - var * var * (m - 3) / (m - 1)) / m
    return var, math.sqrt(max(se_sq, 0.0))


@dataclass(frozen=True)
class RegressionFit:
    """Least-squares line with the scale window that produced it."""

    slope: float
    intercept: float
    slope_se: float
    window: tuple
    dropped: int

    def predict(self, x: float) -> float:
        return self.intercept + self.slope * x


def fit_line(xs, ys, ses=None) -> RegressionFit:
    """OLS fit; slope SE propagates per-point SEs when given, else uses
    residuals (0 with fewer than 3 points)."""
    n = len(xs)
    if n < 2 or n != len(ys):
        raise ValueError("need at least two matched points")
    xbar = tree_sum(xs) / n
    sxx = tree_sum([(x - xbar) ** 2 for x in xs])
    if sxx == 0:
        raise ValueError("degenerate abscissas")
    coeffs = [(x - xbar) / sxx for x in xs]
    slope = tree_sum([c * y for c, y in zip(coeffs, ys)])
    intercept = tree_sum(ys) / n - slope * xbar
    if ses is not None:
        var_slope = tree_sum([(c * s) ** 2 for c, s in zip(coeffs, ses)])
    elif n > 2:
        resid = [y - (intercept + slope * x) for x, y in zip(xs, ys)]
        var_slope = tree_sum([r * r for r in resid]) / ((n - 2) * sxx)
    else:
        var_slope = 0.0
    return RegressionFit(slope=slope, intercept=intercept,
                         slope_se=math.sqrt(max(var_slope, 0.0)),
                         window=tuple(xs), dropped=0)


def windowed_fit(scales, ys, ses=None,
                 drop_scales: int = DEFAULT_DROP_SCALES) -> RegressionFit:
    """Fit y against log(scale), dropping the smallest scales.

    Falls back to dropping fewer scales when the ladder is too short to
    keep two points.
    """
    drop = min(drop_scales, len(scales) - 2)
    drop = max(drop, 0)
    xs = [math.log(s) for s in scales[drop:]]
    fit = fit_line(xs, list(ys[drop:]),
                   None if ses is None else list(ses[drop:]))
    return RegressionFit(slope=fit.slope, intercept=fit.intercept,
                         slope_se=fit.slope_se,
                         window=tuple(scales[drop:]), dropped=drop)


@dataclass(frozen=True)
class LadderPoint:
    """Aggregated statistics at one scale of a study ladder."""

    scale: int
    count: int
    stats: dict


@dataclass(frozen=True)
class EstimatorReport:
    """Uniform result envelope for every study in this module."""

    study: str
    spec_label: str
    seed: int
    params: dict
    points: tuple
    fits: dict
    values: dict
    notes: tuple = ()


# ---------------------------------------------------------------------------
# Ladder study: T and T^B against log n over a dyadic ladder.

def ladder_sample(spec: DistributionSpec, n_ladder, seed: int,
                  stream: int) -> dict:
    """One field at the top scale; passage times for every ladder scale.

    A single distance solve per kind covers the whole ladder because the
    point-to-ring time at radius r only reads the field inside B(r).
    """
    ladder = tuple(int(n) for n in n_ladder)
    f = sample_field(spec, max(ladder), seed=seed, stream=stream)
    rt = ring_times(f, "general")
    counts = ring_times(f, "bernoulli")
    site_dom = bool((f.t_bern <= f.t).all())
    ts = [float(rt[n]) for n in ladder]
    tbs = [float(spec.infimum * counts[n]) for n in ladder]
    ladder_dom = all(tb <= t for tb, t in zip(tbs, ts))
    return {"index": int(stream), "T": ts, "TB": tbs,
            "site_dom": site_dom, "ladder_dom": ladder_dom}


def aggregate_ladder(spec: DistributionSpec, n_ladder, seed: int, records,
                     drop_scales: int = DEFAULT_DROP_SCALES) -> EstimatorReport:
    ladder = tuple(int(n) for n in n_ladder)
    recs = sorted(records, key=lambda r: r["index"])
    if not recs:
        raise ValueError("no records")
    points = []
    mean_t, se_t, var_t, var_se_t = [], [], [], []
    mean_tb, var_tb, se_tb, var_se_tb = [], [], [], []
    gap_over_log = []
    for pos, n in enumerate(ladder):
        ts = [r["T"][pos] for r in recs]
        tbs = [r["TB"][pos] for r in recs]
        gaps = [t - tb for t, tb in zip(ts, tbs)]
        mt, st = mean_se(ts)
        vt, vst = variance_se(ts)
        mb, sb = mean_se(tbs)
        vb, vsb = variance_se(tbs)
        mg, sg = mean_se(gaps)
        mean_t.append(mt); se_t.append(st)
        var_t.append(vt); var_se_t.append(vst)
        mean_tb.append(mb); se_tb.append(sb)
        var_tb.append(vb); var_se_tb.append(vsb)
        gap_over_log.append(mg / math.log(n))
        points.append(LadderPoint(scale=n, count=len(recs), stats={
            "mean_T": mt, "se_T": st, "var_T": vt, "var_se_T": vst,
            "mean_TB": mb, "se_TB": sb, "var_TB": vb, "var_se_TB": vsb,
            "mean_gap": mg, "se_gap": sg,
            "gap_over_log": mg / math.log(n)}))
    site_viol = sum(0 if r["site_dom"] else 1 for r in recs)
    ladder_viol = sum(0 if r["ladder_dom"] else 1 for r in recs)
    fits = {
        "time": windowed_fit(ladder, mean_t, se_t, drop_scales),
        "time_bern": windowed_fit(ladder, mean_tb, se_tb, drop_scales),
        "var": windowed_fit(ladder, var_t, var_se_t, drop_scales),
        "var_bern": windowed_fit(ladder, var_tb, var_se_tb, drop_scales),
    }
    decreasing = all(b < a for a, b in zip(gap_over_log, gap_over_log[1:]))
    nonincreasing = all(b <= a + 1e-12
                        for a, b in zip(gap_over_log, gap_over_log[1:]))
    values = {
        "samples": float(len(recs)),
        "domination_site_violations": float(site_viol),
        "domination_ladder_violations": float(ladder_viol),
        "time_slope_target": target_time_slope(spec),
        "var_slope_target": target_variance_slope(spec),
        "gap_over_log_decreasing": 1.0 if decreasing else 0.0,
        "gap_over_log_nonincreasing": 1.0 if nonincreasing else 0.0,
    }
    return EstimatorReport(
        study="ladder", spec_label=spec.cli_string(), seed=seed,
        params={"n_ladder": list(ladder), "drop_scales": drop_scales},
        points=tuple(points), fits=fits, values=values)


def time_constant_study(spec: DistributionSpec, n_ladder, samples: int,
                        seed: int,
                        drop_scales: int = DEFAULT_DROP_SCALES
                        ) -> EstimatorReport:
    """Serial ladder study; the runner parallelizes the same samples."""
    records = [ladder_sample(spec, n_ladder, seed, i) for i in range(samples)]
    return aggregate_ladder(spec, n_ladder, seed, records, drop_scales)


# ---------------------------------------------------------------------------
# Characteristic quantile sums.

def char_sums(spec: DistributionSpec, n: int) -> tuple:
    """Quantile sums S1, S2 over dyadic excess probabilities.

    S1 sums the generalized inverse at 1/2 + 2^{-k} for k from 2 to
    floor(log n) (natural log); S2 sums the squares.
    """
    if n < 8:
        raise ValueError(f"n must be at least 8, got {n}")
    kmax = math.floor(math.log(n))
    terms = [float(spec.inverse(0.5 + 2.0 ** (-k))) for k in range(2, kmax + 1)]
    return tree_sum(terms), tree_sum([t * t for t in terms])


# ---------------------------------------------------------------------------
# Chain resolution with bounded field enlargement.

@dataclass(frozen=True)
class ChainResolution:
    """Outcome of resolving a circuit chain on one sampled field."""

    resolved: bool
    radius: int
    attempts: int
    k_failed: int = None
    needed_radius: int = None


def default_sampler(spec: DistributionSpec, seed: int):
    """Field sampler hook: (radius, stream) -> WeightField.

    Enlarging the radius extends the same realization because site
    uniforms are addressed by coordinates, so retrying at a bigger
    radius genuinely looks further in the same environment.
    """
    def sampler(radius: int, stream: int):
        return sample_field(spec, radius, seed=seed, stream=stream)
    return sampler


def resolve_chain(sampler, k_max: int, stream: int, start_radius: int,
                  radius_cap: int):
    """Grow the field geometrically until the chain resolves or the cap
    is hit.  Returns (field, chain or None, ChainResolution)."""
    radius = start_radius
    attempts = 0
    while True:
        attempts += 1
        f = sampler(radius, stream)
        try:
            chain = annulus_chain(f, k_max)
            return f, chain, ChainResolution(True, radius, attempts)
        except InsufficientFieldError as err:
            if radius * 2 > radius_cap:
                return f, None, ChainResolution(
                    False, radius, attempts, k_failed=err.k,
                    needed_radius=err.needed_radius)
            radius *= 2


# ---------------------------------------------------------------------------
# Variance decomposition across the circuit chain.

def _outer_leg_times(f, chain, kind: str):
    """T(O_{k-1}, O_k) on the chain's own field, with O_{-1} = {0}."""
    box = f.box
    origin = np.zeros((box.side, box.side), dtype=bool)
    origin[box.n, box.n] = True
    sources = [origin] + [c.sites for c in chain.circuits]
    legs = []
    for k in range(chain.k_max + 1):
        legs.append(float(first_passage(f, kind, sources[k],
                                        chain.circuits[k].sites).time))
    return legs


def _min_over_sites(dist: np.ndarray, box, sites) -> float:
    return float(min(dist[x + box.n, y + box.n] for x, y in sites))


def martingale_sample(spec: DistributionSpec, k_max: int, inner_samples: int,
                      seed: int, stream: int, start_radius: int,
                      radius_cap: int, sampler=None) -> dict:
    """One outer field: chain, leg times, and nested inner estimates.

    The increment estimate for level k combines the outer leg
    T(O_{k-1}, O_k) with inner-averaged passage times from the outer
    circuits to the resampled field's next-level circuit; unresolved
    chains are reported as diagnostics instead of numbers.
    """
    if sampler is None:
        sampler = default_sampler(spec, seed)
    f, chain, res = resolve_chain(sampler, k_max, stream, start_radius,
                                  radius_cap)
    rec = {"index": int(stream), "resolved": res.resolved,
           "radius": int(res.radius), "attempts": int(res.attempts)}
    if not res.resolved:
        rec["k_failed"] = res.k_failed
        rec["needed_radius"] = res.needed_radius
        return rec
    box = f.box
    origin = np.zeros((box.side, box.side), dtype=bool)
    origin[box.n, box.n] = True
    sources = [origin] + [c.sites for c in chain.circuits]

    legs = _outer_leg_times(f, chain, "general")
    t_direct = float(first_passage(f, "general", origin,
                                   chain.circuits[k_max].sites).time)
    inner_level = chain.m(k_max) + 1

    sums_u = [[] for _ in range(k_max + 1)]
    sums_v = [[] for _ in range(k_max + 1)]
    inner_unresolved = 0
    for j in range(inner_samples):
        inner_stream = INNER_STREAM_BASE + stream * inner_samples + j
        f2, chain2, res2 = resolve_chain(sampler, inner_level, inner_stream,
                                         start_radius, radius_cap)
        if not res2.resolved:
            inner_unresolved += 1
            continue
        box2 = f2.box
        # one distance solve per source set covers every level k
        dists = []
        for k in range(-1, k_max + 1):
            src = sources[k + 1]
            if isinstance(src, np.ndarray):
                src2 = np.zeros((box2.side, box2.side), dtype=bool)
                src2[box2.n, box2.n] = True
            else:
                src2 = src
            dists.append(solve_distances(f2, "general", src2))
        for k in range(k_max + 1):
            target = chain2.circuit(chain.m(k) + 1).sites
            sums_u[k].append(_min_over_sites(dists[k + 1], box2, target))
            sums_v[k].append(_min_over_sites(dists[k], box2, target))

    inner_used = inner_samples - inner_unresolved
    rec["inner_used"] = inner_used
    rec["inner_unresolved"] = inner_unresolved
    rec["m_values"] = [int(m) for m in chain.m_values]
    rec["legs"] = legs
    rec["t_direct"] = t_direct
    rec["telescope_gap"] = abs(tree_sum(legs) - t_direct)
    if inner_used == 0:
        rec["resolved"] = False
        rec["k_failed"] = -1
        rec["needed_radius"] = None
        return rec
    delta, mean_u, mean_v = [], [], []
    half = inner_used // 2
    delta_lo, delta_hi = [], []
    for k in range(k_max + 1):
        mu = tree_sum(sums_u[k]) / inner_used
        mv = tree_sum(sums_v[k]) / inner_used
        mean_u.append(mu)
        mean_v.append(mv)
        delta.append(legs[k] + mu - mv)
        if half >= 1 and inner_used - half >= 1:
            w = [u - v for u, v in zip(sums_u[k], sums_v[k])]
            delta_lo.append(legs[k] + tree_sum(w[:half]) / half)
            delta_hi.append(legs[k] + tree_sum(w[half:]) / (inner_used - half))
    rec["mean_u"] = mean_u
    rec["mean_v"] = mean_v
    rec["delta"] = delta
    if delta_lo:
        rec["delta_lo"] = delta_lo
        rec["delta_hi"] = delta_hi
    return rec


@dataclass(frozen=True)
class MartingaleEstimate:
    """Variance decomposition check with its resolution diagnostics."""

    k_max: int
    outer_requested: int
    outer_used: int
    outer_unresolved: int
    inner_unresolved: int
    delta_sq: tuple
    delta_sq_se: tuple
    delta_sq_split: tuple
    sum_delta_sq: float
    sum_delta_sq_se: float
    var_direct: float
    var_direct_se: float
    identity_z: float
    cross_z_max: float
    fourth_moments: tuple
    fourth_ratio: float
    telescope_gap_max: float
    radius_counts: tuple
    unresolved_k: tuple


def aggregate_martingale(k_max: int, records) -> MartingaleEstimate:
    recs = sorted(records, key=lambda r: r["index"])
    used = [r for r in recs if r["resolved"]]
    unresolved = [r for r in recs if not r["resolved"]]
    radius_counts = {}
    for r in recs:
        radius_counts[r["radius"]] = radius_counts.get(r["radius"], 0) + 1
    unresolved_k = {}
    for r in unresolved:
        kf = r.get("k_failed")
        unresolved_k[kf] = unresolved_k.get(kf, 0) + 1
    inner_unres = sum(r.get("inner_unresolved", 0) for r in recs)
    if not used:
        nan = float("nan")
        return MartingaleEstimate(
            k_max=k_max, outer_requested=len(recs), outer_used=0,
            outer_unresolved=len(unresolved), inner_unresolved=inner_unres,
            delta_sq=(), delta_sq_se=(), delta_sq_split=(),
            sum_delta_sq=nan, sum_delta_sq_se=nan, var_direct=nan,
            var_direct_se=nan, identity_z=nan, cross_z_max=nan,
            fourth_moments=(), fourth_ratio=nan, telescope_gap_max=nan,
            radius_counts=tuple(sorted(radius_counts.items())),
            unresolved_k=tuple(sorted(unresolved_k.items(),
                                      key=lambda kv: (kv[0] is None, kv[0]))))
    delta_sq, delta_sq_se, split_sq, fourth = [], [], [], []
    for k in range(k_max + 1):
        dk = [r["delta"][k] for r in used]
        sq = [d * d for d in dk]
        m, s = mean_se(sq)
        delta_sq.append(m)
        delta_sq_se.append(s)
        fourth.append(tree_sum([q * q for q in sq]) / len(sq))
        prods = [r["delta_lo"][k] * r["delta_hi"][k]
                 for r in used if "delta_lo" in r]
        split_sq.append(tree_sum(prods) / len(prods) if prods else m)
    per_sample_sum = [tree_sum([d * d for d in r["delta"]]) for r in used]
    sum_sq, sum_sq_se = mean_se(per_sample_sum)
    t_direct = [r["t_direct"] for r in used]
    if len(t_direct) >= 2:
        var_direct, var_direct_se = variance_se(t_direct)
    else:
        var_direct, var_direct_se = float("nan"), float("nan")
    denom = math.hypot(sum_sq_se, var_direct_se)
    if denom > 0:
        identity_z = (sum_sq - var_direct) / denom
    elif sum_sq == var_direct:
        identity_z = 0.0
    else:
        identity_z = math.copysign(float("inf"), sum_sq - var_direct)
    cross_z = 0.0
    for j in range(k_max + 1):
        for k in range(j + 1, k_max + 1):
            prods = [r["delta"][j] * r["delta"][k] for r in used]
            m, s = mean_se(prods)
            if s > 0:
                z = abs(m) / s
            else:
                # constant products: exact orthogonality or exact violation
                z = 0.0 if m == 0 else float("inf")
            cross_z = max(cross_z, z)
    # boundedness probe looks at the deep levels only; the first two are
    # dominated by the origin transient
    deep_start = min(2, k_max)
    pos_fourth = [fm for idx, fm in enumerate(fourth)
                  if fm > 0 and idx >= deep_start]
    fourth_ratio = (max(pos_fourth) / min(pos_fourth)
                    if pos_fourth else float("nan"))
    return MartingaleEstimate(
        k_max=k_max, outer_requested=len(recs), outer_used=len(used),
        outer_unresolved=len(unresolved), inner_unresolved=inner_unres,
        delta_sq=tuple(delta_sq), delta_sq_se=tuple(delta_sq_se),
        delta_sq_split=tuple(split_sq),
        sum_delta_sq=sum_sq, sum_delta_sq_se=sum_sq_se,
        var_direct=var_direct, var_direct_se=var_direct_se,
        identity_z=identity_z, cross_z_max=cross_z,
        fourth_moments=tuple(fourth), fourth_ratio=fourth_ratio,
        telescope_gap_max=max(r["telescope_gap"] for r in used),
        radius_counts=tuple(sorted(radius_counts.items())),
        unresolved_k=tuple(sorted(unresolved_k.items(),
                                  key=lambda kv: (kv[0] is None, kv[0]))))


def martingale_report(spec: DistributionSpec, k_max: int, seed: int,
                      estimate: MartingaleEstimate,
                      params: dict) -> EstimatorReport:
    points = []
    for k in range(k_max + 1):
        if k < len(estimate.delta_sq):
            points.append(LadderPoint(scale=k, count=estimate.outer_used,
                                      stats={
                "delta_sq": estimate.delta_sq[k],
                "delta_sq_se": estimate.delta_sq_se[k],
                "delta_sq_split": estimate.delta_sq_split[k],
                "fourth_moment": estimate.fourth_moments[k]}))
    notes = []
    if estimate.outer_unresolved:
        notes.append(
            f"{estimate.outer_unresolved} of {estimate.outer_requested} "
            f"outer chains unresolved within the radius cap; "
            f"radius attempts {dict(estimate.radius_counts)}; "
            f"first unresolved level by count {dict(estimate.unresolved_k)}")
    if estimate.inner_unresolved:
        notes.append(f"{estimate.inner_unresolved} inner resamples "
                     f"unresolved and dropped")
    values = {
        "outer_used": float(estimate.outer_used),
        "outer_unresolved": float(estimate.outer_unresolved),
        "sum_delta_sq": estimate.sum_delta_sq,
        "sum_delta_sq_se": estimate.sum_delta_sq_se,
        "var_direct": estimate.var_direct,
        "var_direct_se": estimate.var_direct_se,
        "identity_z": estimate.identity_z,
        "cross_z_max": estimate.cross_z_max,
        "fourth_ratio": estimate.fourth_ratio,
        "telescope_gap_max": estimate.telescope_gap_max,
    }
    return EstimatorReport(
        study="martingale", spec_label=spec.cli_string(), seed=seed,
        params=params, points=tuple(points), fits={}, values=values,
        notes=tuple(notes))


def martingale_study(spec: DistributionSpec, k_max: int, outer_samples: int,
                     inner_samples: int, seed: int, *, sampler=None,
                     start_radius: int = None, radius_cap: int = None
                     ) -> tuple:
    """Serial study; returns (MartingaleEstimate, EstimatorReport)."""
    if start_radius is None:
        start_radius = 2 ** (k_max + 3)
    if radius_cap is None:
        radius_cap = start_radius * 8
    records = [martingale_sample(spec, k_max, inner_samples, seed, i,
                                 start_radius, radius_cap, sampler)
               for i in range(outer_samples)]
    est = aggregate_martingale(k_max, records)
    report = martingale_report(spec, k_max, seed, est, params={
        "k_max": k_max, "outer_samples": outer_samples,
        "inner_samples": inner_samples, "start_radius": start_radius,
        "radius_cap": radius_cap})
    return est, report


# ---------------------------------------------------------------------------
# Single-field shortcut check for the squared coupling gap.

def y_tilde_nested_sample(spec: DistributionSpec, k: int, inner_samples: int,
                          seed: int, stream: int, start_radius: int,
                          radius_cap: int, sampler=None) -> dict:
    """Nested estimator sample: outer circuits against resampled fields.

    Y is the coupling gap of the passage time from the outer field's
    level-k circuit to the resampled field's next-level circuit, with
    both times read off the resampled weights.
    """
    if sampler is None:
        sampler = default_sampler(spec, seed)
    f, chain, res = resolve_chain(sampler, k, stream, start_radius,
                                  radius_cap)
    rec = {"index": int(stream), "resolved": res.resolved,
           "radius": int(res.radius), "attempts": int(res.attempts)}
    if not res.resolved:
        rec["k_failed"] = res.k_failed
        rec["needed_radius"] = res.needed_radius
        return rec
    source = chain.circuit(k).sites
    inner_level = chain.m(k) + 1
    y_sq = []
    neg = 0
    inner_unresolved = 0
    for j in range(inner_samples):
        inner_stream = INNER_STREAM_BASE + stream * inner_samples + j
        f2, chain2, res2 = resolve_chain(sampler, inner_level, inner_stream,
                                         start_radius, radius_cap)
        if not res2.resolved:
            inner_unresolved += 1
            continue
        target = chain2.circuit(inner_level).sites
        t = float(first_passage(f2, "general", source, target).time)
        tb = float(first_passage(f2, "bernoulli", source, target).time)
        y = t - tb
        if y < 0:
            neg += 1
        y_sq.append(y * y)
    rec["inner_used"] = len(y_sq)
    rec["inner_unresolved"] = inner_unresolved
    rec["negative_gaps"] = neg
    if not y_sq:
        rec["resolved"] = False
        rec["k_failed"] = -1
        return rec
    rec["y_sq_mean"] = tree_sum(y_sq) / len(y_sq)
    return rec


def y_tilde_single_sample(spec: DistributionSpec, k: int, seed: int,
                          stream: int, start_radius: int, radius_cap: int,
                          sampler=None) -> dict:
    """Single-field estimator sample: the same gap read on one field."""
    if sampler is None:
        sampler = default_sampler(spec, seed)
    f, chain, res = resolve_chain(sampler, k + 1, stream, start_radius,
                                  radius_cap)
    rec = {"index": int(stream), "resolved": res.resolved,
           "radius": int(res.radius), "attempts": int(res.attempts)}
    if not res.resolved:
        rec["k_failed"] = res.k_failed
        rec["needed_radius"] = res.needed_radius
        return rec
    inner_level = chain.m(k) + 1
    if inner_level > chain.k_max:
        # the chain jumped past k+1; resolve further levels
        f, chain, res = resolve_chain(sampler, inner_level, stream,
                                      start_radius, radius_cap)
        if not res.resolved:
            rec["resolved"] = False
            rec["k_failed"] = res.k_failed
            rec["needed_radius"] = res.needed_radius
            return rec
    source = chain.circuit(k).sites
    target = chain.circuit(inner_level).sites
    t = float(first_passage(f, "general", source, target).time)
    tb = float(first_passage(f, "bernoulli", source, target).time)
    y = t - tb
    rec["y_tilde"] = y
    rec["nonneg"] = bool(y >= 0)
    rec["y_tilde_sq"] = y * y
    return rec


def aggregate_y_tilde(spec: DistributionSpec, k: int, seed: int,
                      nested_records, single_records,
                      params: dict) -> EstimatorReport:
    nested = sorted((r for r in nested_records if r["resolved"]),
                    key=lambda r: r["index"])
    single = sorted((r for r in single_records if r["resolved"]),
                    key=lambda r: r["index"])
    n_unres = sum(1 for r in nested_records if not r["resolved"])
    s_unres = sum(1 for r in single_records if not r["resolved"])
    values = {
        "nested_used": float(len(nested)),
        "single_used": float(len(single)),
        "nested_unresolved": float(n_unres),
        "single_unresolved": float(s_unres),
    }
    notes = []
    if nested and single:
        a, a_se = mean_se([r["y_sq_mean"] for r in nested])
        b, b_se = mean_se([r["y_tilde_sq"] for r in single])
        denom = math.hypot(a_se, b_se)
        if denom > 0:
            z = (a - b) / denom
        else:
            z = 0.0 if a == b else math.copysign(float("inf"), a - b)
        values.update({
            "nested_mean_sq": a, "nested_se": a_se,
            "single_mean_sq": b, "single_se": b_se,
            "difference": a - b,
            "difference_z": z,
            "negative_gaps": float(sum(r["negative_gaps"] for r in nested)
                                   + sum(0 if r["nonneg"] else 1
                                         for r in single)),
        })
    else:
        notes.append("no resolved samples on at least one estimator side; "
                     "identity not evaluated")
        values["difference_z"] = float("nan")
    return EstimatorReport(
        study="y_tilde", spec_label=spec.cli_string(), seed=seed,
        params=params, points=(), fits={}, values=values, notes=tuple(notes))


def y_tilde_check(spec: DistributionSpec, k: int, outer_samples: int,
                  inner_samples: int, seed: int, *, sampler=None,
                  start_radius: int = None, radius_cap: int = None
                  ) -> EstimatorReport:
    """Compare the nested and single-field estimators of the squared gap."""
    if start_radius is None:
        start_radius = 2 ** (k + 3)
    if radius_cap is None:
        radius_cap = start_radius * 8
    nested = [y_tilde_nested_sample(spec, k, inner_samples, seed, i,
                                    start_radius, radius_cap, sampler)
              for i in range(outer_samples)]
    single = [y_tilde_single_sample(spec, k, seed,
                                    SINGLE_FIELD_STREAM_BASE + i,
                                    start_radius, radius_cap, sampler)
              for i in range(outer_samples)]
    return aggregate_y_tilde(spec, k, seed, nested, single, params={
        "k": k, "outer_samples": outer_samples,
        "inner_samples": inner_samples, "start_radius": start_radius,
        "radius_cap": radius_cap})


# ---------------------------------------------------------------------------
# Arm probabilities.

def arm_stream(arm: ArmEventSpec, i: int) -> int:
    """Stream id for the i-th sample of an arm event; scales never share
    streams so ladder points are independent."""
    return arm.N * 10 ** 6 + i


def arm_sample(arm: ArmEventSpec, seed: int, stream: int) -> dict:
    """Indicator of the arm event on one sampled configuration.

    Only the open/closed pattern matters, so sampling uses the unit
    Bernoulli family regardless of the weight distribution under study.
    """
    f = sample_field(ARM_SAMPLING_SPEC, arm.N, seed=seed, stream=stream)
    return {"index": int(stream), "hit": 1 if has_disjoint_arms(f, arm) else 0}


def aggregate_arm(arm: ArmEventSpec, seed: int, records) -> EstimatorReport:
    recs = sorted(records, key=lambda r: r["index"])
    if not recs:
        raise ValueError("no records")
    hits = [r["hit"] for r in recs]
    m = len(hits)
    p = tree_sum(hits) / m
    se = math.sqrt(max(p * (1.0 - p), 0.0) / m)
    target = arm_exponent(arm.j, arm.geometry, arm.sigma)
    values = {"p": p, "se": se, "samples": float(m),
              "hits": float(int(tree_sum(hits)))}
    if target is not None:
        values["target_exponent"] = target
    return EstimatorReport(
        study="arm", spec_label=ARM_SAMPLING_SPEC.cli_string(), seed=seed,
        params={"j": arm.j, "sigma": list(arm.sigma),
                "geometry": arm.geometry, "n": arm.n, "N": arm.N},
        points=(LadderPoint(scale=arm.N, count=m,
                            stats={"p": p, "se": se}),),
        fits={}, values=values)


def arm_probability(samples: int, arm: ArmEventSpec,
                    seed: int) -> EstimatorReport:
    records = [arm_sample(arm, seed, arm_stream(arm, i))
               for i in range(samples)]
    return aggregate_arm(arm, seed, records)


def arm_ladder_study(j: int, sigma, geometry: str, n: int, ratios,
                     samples: int, seed: int,
                     drop_scales: int = DEFAULT_DROP_SCALES
                     ) -> EstimatorReport:
    """Arm probability against the annulus ratio over a dyadic ladder.

    The inner scale for the ratio is max(n, 1) so the origin-anchored
    case n = 0 keeps a well-defined abscissa.
    """
    inner_scale = max(n, 1)
    ratio_list = tuple(int(r) for r in ratios)
    points = []
    ps, ses = [], []
    for ratio in ratio_list:
        rep = arm_probability(
            samples, ArmEventSpec(j, tuple(sigma), geometry, n,
                                  inner_scale * ratio), seed)
        p, se = rep.values["p"], rep.values["se"]
        ps.append(p)
        ses.append(se)
        points.append(LadderPoint(scale=ratio, count=samples,
                                  stats={"p": p, "se": se,
                                         "N": float(inner_scale * ratio)}))
    if any(p <= 0 for p in ps):
        raise ValueError("zero arm probability on the ladder; "
                         "cannot fit a log slope")
    log_ps = [math.log(p) for p in ps]
    log_ses = [se / p for p, se in zip(ps, ses)]
    fits = {
        "decay": windowed_fit(ratio_list, log_ps, log_ses, drop_scales),
        "decay_all_scales": windowed_fit(ratio_list, log_ps, log_ses, 0),
    }
    target = arm_exponent(j, geometry, tuple(sigma))
    values = {"samples_per_scale": float(samples)}
    if target is not None:
        values["target_slope"] = -target
    mono = all(b <= a + 2.0 * math.hypot(sa, sb)
               for (a, sa), (b, sb) in zip(zip(ps, ses), zip(ps[1:], ses[1:])))
    values["nonincreasing_2se"] = 1.0 if mono else 0.0
    return EstimatorReport(
        study="arm_ladder", spec_label=ARM_SAMPLING_SPEC.cli_string(),
        seed=seed,
        params={"j": j, "sigma": list(sigma), "geometry": geometry,
                "n": n, "ratios": list(ratio_list),
                "drop_scales": drop_scales},
        points=tuple(points), fits=fits, values=values)
