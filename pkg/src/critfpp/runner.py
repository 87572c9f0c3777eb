"""Deterministic batch execution and persistence for the studies.

A run is fully determined by its config: sample streams derive from the
master seed and the sample index alone (never from worker identity),
workers share no mutable state, and the writer serializes records in a
fixed order, so record files are byte-identical across worker counts.
Records go to line-delimited JSON (append-safe, auditable), summaries to
JSON, and per-scale tables to CSV; every file embeds the package
version, the canonical config hash, the PRNG identifier, and the
tolerances actually applied.  Formats are documented in docs/formats.md.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import metadata

from .arms import ArmEventSpec, arm_exponent
from .circuits import (
    hierarchy_between_oracle,
    max_disjoint_closed_circuits,
    outermost_closed_sequence,
    verify_circuit,
)
from .estimators import (
    DEFAULT_DROP_SCALES,
    SINGLE_FIELD_STREAM_BASE,
    aggregate_ladder,
    aggregate_martingale,
    aggregate_y_tilde,
    arm_stream,
    arm_sample,
    char_sums,
    ladder_sample,
    martingale_report,
    martingale_sample,
    windowed_fit,
    y_tilde_nested_sample,
    y_tilde_single_sample,
)
from .lattice import mask_of_sites
from .passage import point_to_box
from .tolerances import (
    TOLERANCE_TABLE_VERSION,
    resolve_tolerances,
)
from .weights import PRNG_ID, DistributionSpec, sample_field

try:
    PACKAGE_VERSION = metadata.version("critfpp")
except metadata.PackageNotFoundError:  # pragma: no cover
    PACKAGE_VERSION = "0.0.0"

RECORD_FORMAT = 1

# scale-tagged studies give every (sample, scale) pair its own stream
SCALE_STREAM_BASE = 10 ** 6

# merged record files keep per-file sample order under one synthetic index
MERGE_INDEX_STRIDE = 1 << 48

STUDY_KINDS = ("tc", "var", "gap", "duality", "circuits", "martingale",
               "ytilde", "arms", "chars")

# the two fixed probes behind the arm-ordering comparison
ORDER_PROBES = (
    ("order_half5", 5, ("open", "closed", "open", "closed", "open"),
     "half", 8),
    ("order_full6", 6, ("open", "closed", "open", "closed", "open",
                        "closed"), "full", 8),
)


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one batch run.

    The canonical form (sorted keys, study-relevant fields only) hashes
    to the identifier embedded in every output file.
    """

    study: str
    dist: str = "bernoulli:1.0"
    n_ladder: tuple = None
    k_max: int = None
    samples: int = 100
    inner_samples: int = 10
    seed: int = 0
    workers: int = 1
    out: str = None
    ratios: tuple = None
    arm_j: int = 2
    arm_sigma: tuple = ("open", "closed")
    arm_geometry: str = "full"
    arm_n: int = 0
    start_radius: int = None
    radius_cap: int = None
    drop_scales: int = DEFAULT_DROP_SCALES
    tol: tuple = ()

    def __post_init__(self):
        if self.study not in STUDY_KINDS:
            raise ValueError(f"unknown study {self.study!r}; "
                             f"expected one of {', '.join(STUDY_KINDS)}")
        DistributionSpec.from_cli(self.dist)
        if self.study in ("tc", "var", "gap", "duality", "circuits",
                          "chars") and not self.n_ladder:
            raise ValueError(f"study {self.study!r} needs n_ladder")
        if self.study in ("martingale", "ytilde") and self.k_max is None:
            raise ValueError(f"study {self.study!r} needs k_max")
        if self.study == "arms" and not self.ratios:
            raise ValueError("study 'arms' needs ratios")
        if self.samples < 1:
            raise ValueError(f"samples must be positive, got {self.samples}")

    def spec(self) -> DistributionSpec:
        return DistributionSpec.from_cli(self.dist)

    def canonical(self) -> dict:
        out = {"study": self.study, "dist": self.dist,
               "samples": self.samples, "seed": self.seed}
        if self.n_ladder:
            out["n_ladder"] = [int(n) for n in self.n_ladder]
        if self.k_max is not None:
            out["k_max"] = int(self.k_max)
        if self.study in ("martingale", "ytilde"):
            out["inner_samples"] = int(self.inner_samples)
            out["start_radius"] = self.resolved_start_radius()
            out["radius_cap"] = self.resolved_radius_cap()
        if self.study == "arms":
            out["ratios"] = [int(r) for r in self.ratios]
            out["arm"] = {"j": self.arm_j, "sigma": list(self.arm_sigma),
                          "geometry": self.arm_geometry, "n": self.arm_n}
        if self.study in ("tc", "var", "gap", "arms"):
            out["drop_scales"] = int(self.drop_scales)
        if self.tol:
            out["tol"] = {cid: val for cid, val in self.tol}
        return out

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def tolerances(self) -> dict:
        return resolve_tolerances(dict(self.tol))

    def resolved_start_radius(self) -> int:
        if self.start_radius is not None:
            return int(self.start_radius)
        return 2 ** (self.chain_depth() + 3)

    def resolved_radius_cap(self) -> int:
        if self.radius_cap is not None:
            return int(self.radius_cap)
        return self.resolved_start_radius() * 8

    def chain_depth(self) -> int:
        # ytilde resolves one level past k for the single-field target
        return int(self.k_max) + (1 if self.study == "ytilde" else 0)


# ---------------------------------------------------------------------------
# Per-sample computations.  One top-level dispatcher so the worker pool
# can pickle tasks; every task carries plain values only.

def _duality_record(dist: str, seed: int, n: int, i: int) -> dict:
    spec = DistributionSpec.from_cli(dist)
    stream = n * SCALE_STREAM_BASE + i
    f = sample_field(spec, n, seed=seed, stream=stream)
    res = point_to_box(f, "bernoulli", n)
    count, _ = max_disjoint_closed_circuits(f, n)
    time_exact = res.time == spec.infimum * count
    return {"index": stream, "sample": i, "n": n,
            "time": float(res.time), "steps": int(res.steps),
            "count": int(count),
            "site_dom": bool((f.t_bern <= f.t).all()),
            "equal": bool(time_exact and res.steps == count)}


def _circuits_record(dist: str, seed: int, n: int, i: int) -> dict:
    spec = DistributionSpec.from_cli(dist)
    stream = n * SCALE_STREAM_BASE + i
    f = sample_field(spec, n, seed=seed, stream=stream)
    hierarchy = outermost_closed_sequence(f, n)
    box = f.box
    circs = hierarchy.circuits
    ok_circuits = True
    try:
        for c in circs:
            verify_circuit(f, c)
    except Exception:
        ok_circuits = False
    site_sets = [set(c.sites) for c in circs]
    ok_disjoint = all(not (a & b) for idx, a in enumerate(site_sets)
                      for b in site_sets[idx + 1:])
    ok_nested = True
    for a, b in zip(circs, circs[1:]):
        inner = mask_of_sites(box, a.sites) | a.interior(box)
        if bool((inner & ~b.interior(box)).any()):
            ok_nested = False
    try:
        hierarchy_between_oracle(f, hierarchy)
        ok_between = True
    except AssertionError:
        ok_between = False
    count, _ = max_disjoint_closed_circuits(f, n)
    ok_count = len(hierarchy) == count
    return {"index": stream, "sample": i, "n": n,
            "size": len(hierarchy), "peel_count": int(count),
            "ok_circuits": ok_circuits, "ok_disjoint": ok_disjoint,
            "ok_nested": ok_nested, "ok_between": ok_between,
            "ok_count": ok_count,
            "ok": bool(ok_circuits and ok_disjoint and ok_nested
                       and ok_between and ok_count)}


def _arm_task_record(seed: int, payload: tuple) -> dict:
    event, j, sigma, geometry, n, ratio, i = payload
    inner_scale = max(n, 1)
    arm = ArmEventSpec(j, tuple(sigma), geometry, n, inner_scale * ratio)
    rec = arm_sample(arm, seed, arm_stream(arm, i))
    rec.update({"event": event, "sample": i, "ratio": int(ratio),
                "N": int(arm.N)})
    return rec


def _compute(task: tuple) -> dict:
    kind, payload = task
    if kind == "ladder":
        dist, ladder, seed, i = payload
        spec = DistributionSpec.from_cli(dist)
        return ladder_sample(spec, ladder, seed, i)
    if kind == "duality":
        return _duality_record(*payload)
    if kind == "circuits":
        return _circuits_record(*payload)
    if kind == "martingale":
        dist, k_max, inner, seed, i, start, cap = payload
        spec = DistributionSpec.from_cli(dist)
        return martingale_sample(spec, k_max, inner, seed, i, start, cap)
    if kind == "ytilde":
        dist, k, inner, seed, i, start, cap, side = payload
        spec = DistributionSpec.from_cli(dist)
        if side == "nested":
            rec = y_tilde_nested_sample(spec, k, inner, seed, i, start, cap)
        else:
            rec = y_tilde_single_sample(spec, k, seed,
                                        SINGLE_FIELD_STREAM_BASE + i,
                                        start, cap)
            rec["sample"] = i
        rec["side"] = side
        return rec
    if kind == "arm":
        seed, payload = payload
        return _arm_task_record(seed, payload)
    raise ValueError(f"unknown task kind {kind!r}")


def build_tasks(config: RunConfig) -> list:
    study = config.study
    if study in ("tc", "var", "gap"):
        return [("ladder", (config.dist, tuple(config.n_ladder),
                            config.seed, i))
                for i in range(config.samples)]
    if study == "duality":
        return [("duality", (config.dist, config.seed, int(n), i))
                for n in config.n_ladder for i in range(config.samples)]
    if study == "circuits":
        return [("circuits", (config.dist, config.seed, int(n), i))
                for n in config.n_ladder for i in range(config.samples)]
    if study == "martingale":
        start, cap = config.resolved_start_radius(), config.resolved_radius_cap()
        return [("martingale", (config.dist, config.k_max,
                                config.inner_samples, config.seed, i,
                                start, cap))
                for i in range(config.samples)]
    if study == "ytilde":
        start, cap = config.resolved_start_radius(), config.resolved_radius_cap()
        tasks = [("ytilde", (config.dist, config.k_max, config.inner_samples,
                             config.seed, i, start, cap, "nested"))
                 for i in range(config.samples)]
        tasks += [("ytilde", (config.dist, config.k_max, config.inner_samples,
                              config.seed, i, start, cap, "single"))
                  for i in range(config.samples)]
        return tasks
    if study == "arms":
        tasks = [("arm", (config.seed,
                          ("ladder", config.arm_j, tuple(config.arm_sigma),
                           config.arm_geometry, config.arm_n, int(ratio), i)))
                 for ratio in config.ratios for i in range(config.samples)]
        for event, j, sigma, geometry, ratio in ORDER_PROBES:
            tasks += [("arm", (config.seed,
                               (event, j, sigma, geometry, 0, ratio, i)))
                      for i in range(config.samples)]
        return tasks
    if study == "chars":
        return []
    raise ValueError(f"unknown study {study!r}")


def run_tasks(tasks: list, workers: int) -> list:
    """Execute tasks and return records in task order.

    The pool maps over the task list in order; records depend only on
    task payloads, so worker count cannot change the result list.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [_compute(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_compute, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# Aggregation and criterion gates.

def _gate(criterion: str, passed: bool, observed, tolerance,
          message: str, underpowered: bool = False) -> dict:
    return {"criterion": criterion, "passed": bool(passed),
            "underpowered": bool(underpowered), "observed": observed,
            "tolerance": tolerance, "message": message}


def _fit_to_json(fit) -> dict:
    return {"slope": fit.slope, "intercept": fit.intercept,
            "slope_se": fit.slope_se, "window": list(fit.window),
            "dropped": fit.dropped}


def _report_to_json(report) -> dict:
    return {
        "study": report.study, "spec": report.spec_label,
        "seed": report.seed, "params": report.params,
        "points": [{"scale": p.scale, "count": p.count, "stats": p.stats}
                   for p in report.points],
        "fits": {name: _fit_to_json(f) for name, f in report.fits.items()},
        "values": report.values, "notes": list(report.notes),
    }


def _slope_gate(criterion: str, fit, target: float, rel_tol: float,
                label: str) -> dict:
    half_width = rel_tol * abs(target)
    err = abs(fit.slope - target)
    if 2.0 * fit.slope_se > half_width:
        return _gate(criterion, False, fit.slope, rel_tol,
                     f"underpowered: {label} slope {fit.slope:.5f} has SE "
                     f"{fit.slope_se:.5f}; 2 SE exceeds the +/-{rel_tol:.0%}"
                     f" band around {target:.7f}", underpowered=True)
    passed = err <= half_width
    return _gate(criterion, passed, fit.slope, rel_tol,
                 f"{label} slope {fit.slope:.5f} vs target {target:.7f} "
                 f"(window {list(fit.window)}, "
                 f"{'within' if passed else 'outside'} +/-{rel_tol:.0%})")


def _domination_gate(report) -> dict:
    site = report.values["domination_site_violations"]
    ladder = report.values["domination_ladder_violations"]
    total = site + ladder
    return _gate("C3", total == 0, total, 0.0,
                 f"coupling domination violations: {int(site)} site, "
                 f"{int(ladder)} ladder")


def _slope_difference(ladder, records, drop_scales, batches: int = 10):
    """Coupled slope difference (general minus infimum-weight) with a
    batch-means SE; the coupling makes this the joint CI for the pair."""
    recs = sorted(records, key=lambda r: r["index"])
    ladder = tuple(int(n) for n in ladder)

    def diff_of(recs_part):
        mean_t = [float(sum(r["T"][pos] for r in recs_part)) / len(recs_part)
                  for pos in range(len(ladder))]
        mean_tb = [float(sum(r["TB"][pos] for r in recs_part)) / len(recs_part)
                   for pos in range(len(ladder))]
        ft = windowed_fit(ladder, mean_t, drop_scales=drop_scales)
        fb = windowed_fit(ladder, mean_tb, drop_scales=drop_scales)
        return ft.slope - fb.slope

    overall = diff_of(recs)
    k = min(batches, len(recs))
    if k < 2:
        return overall, float("nan")
    bounds = [round(j * len(recs) / k) for j in range(k + 1)]
    diffs = [diff_of(recs[a:b]) for a, b in zip(bounds, bounds[1:])]
    centre = sum(diffs) / k
    var = sum((d - centre) ** 2 for d in diffs) / (k - 1)
    return overall, math.sqrt(var / k)


def aggregate_run(config: RunConfig, records: list) -> tuple:
    """Aggregate records into (summary dict, gates list)."""
    study = config.study
    spec = config.spec()
    tols = config.tolerances()
    if study in ("tc", "var", "gap"):
        report = aggregate_ladder(spec, config.n_ladder, config.seed,
                                  records, config.drop_scales)
        summary = _report_to_json(report)
        gates = [_domination_gate(report)]
        if study == "tc":
            gates.append(_slope_gate(
                "C4", report.fits["time"],
                report.values["time_slope_target"], tols["C4"], "mean time"))
        elif study == "var":
            gates.append(_slope_gate(
                "C5", report.fits["var"],
                report.values["var_slope_target"], tols["C5"], "variance"))
        else:
            diff, diff_se = _slope_difference(config.n_ladder, records,
                                              config.drop_scales)
            if math.isnan(diff_se):
                gates.append(_gate("C6", False, diff, tols["C6"],
                                   "underpowered: too few samples for "
                                   "batch-means slope comparison",
                                   underpowered=True))
            else:
                if diff_se > 0:
                    z = abs(diff) / diff_se
                else:
                    z = 0.0 if diff == 0 else float("inf")
                decreasing = report.values["gap_over_log_decreasing"] == 1.0
                passed = z <= tols["C6"] and decreasing
                gates.append(_gate(
                    "C6", passed, z, tols["C6"],
                    f"coupled slope difference {diff:.5f} ({z:.2f} combined"
                    f" SEs); gap/log n strictly decreasing: {decreasing}"))
            summary["values"]["slope_difference"] = diff
            summary["values"]["slope_difference_se"] = diff_se
        return summary, gates
    if study == "duality":
        bad = [r for r in records if not r["equal"]]
        site_bad = sum(0 if r["site_dom"] else 1 for r in records)
        per_scale = []
        for n in config.n_ladder:
            sub = [r for r in records if r["n"] == n]
            per_scale.append({"scale": int(n), "count": len(sub),
                              "stats": {
                                  "mean_count": sum(r["count"] for r in sub)
                                  / max(len(sub), 1),
                                  "equal": float(sum(1 for r in sub
                                                     if r["equal"]))}})
        summary = {"study": "duality", "spec": spec.cli_string(),
                   "seed": config.seed, "points": per_scale,
                   "values": {"samples": float(len(records)),
                              "violations": float(len(bad)),
                              "site_violations": float(site_bad)}}
        gates = [
            _gate("C1", not bad, len(bad), tols["C1"],
                  f"duality equality: {len(records) - len(bad)}/"
                  f"{len(records)} exact"),
            _gate("C3", site_bad == 0, site_bad, tols["C3"],
                  f"coupling domination violations: {site_bad} site"),
        ]
        return summary, gates
    if study == "circuits":
        bad = [r for r in records if not r["ok"]]
        kinds = {k: sum(0 if r[k] else 1 for r in records)
                 for k in ("ok_circuits", "ok_disjoint", "ok_nested",
                           "ok_between", "ok_count")}
        summary = {"study": "circuits", "spec": spec.cli_string(),
                   "seed": config.seed,
                   "points": [{"scale": int(n), "count":
                               len([r for r in records if r["n"] == n]),
                               "stats": {"mean_size":
                                         sum(r["size"] for r in records
                                             if r["n"] == n)
                                         / max(1, len([r for r in records
                                                       if r["n"] == n]))}}
                              for n in config.n_ladder],
                   "values": {"samples": float(len(records)),
                              "failures": float(len(bad)),
                              **{k: float(v) for k, v in kinds.items()}}}
        detail = ", ".join(f"{k[3:]}={v}" for k, v in kinds.items() if v)
        gates = [_gate("C7", not bad, len(bad), tols["C7"],
                       f"hierarchy checks: {len(records) - len(bad)}/"
                       f"{len(records)} clean"
                       + (f" (failing: {detail})" if detail else ""))]
        return summary, gates
    if study == "martingale":
        est = aggregate_martingale(config.k_max, records)
        report = martingale_report(spec, config.k_max, config.seed, est,
                                   params=config.canonical())
        summary = _report_to_json(report)
        summary["estimate"] = {
            "delta_sq": list(est.delta_sq),
            "delta_sq_se": list(est.delta_sq_se),
            "delta_sq_split": list(est.delta_sq_split),
            "fourth_moments": list(est.fourth_moments),
            "radius_counts": [list(rc) for rc in est.radius_counts],
            "unresolved_k": [list(uk) for uk in est.unresolved_k],
        }
        gates = list(_martingale_gates(est, tols))
        return summary, gates
    if study == "ytilde":
        nested = [r for r in records if r["side"] == "nested"]
        single = [r for r in records if r["side"] == "single"]
        report = aggregate_y_tilde(spec, config.k_max, config.seed, nested,
                                   single, params=config.canonical())
        summary = _report_to_json(report)
        gates = [_ytilde_gate(report, tols)]
        return summary, gates
    if study == "arms":
        return _aggregate_arms(config, records, tols)
    if study == "chars":
        points = []
        for n in config.n_ladder:
            s1, s2 = char_sums(spec, int(n))
            points.append({"scale": int(n), "count": 1,
                           "stats": {"S1": s1, "S2": s2}})
        summary = {"study": "chars", "spec": spec.cli_string(),
                   "seed": config.seed, "points": points,
                   "values": {"scales": float(len(points))}}
        return summary, []
    raise ValueError(f"unknown study {study!r}")


def _martingale_gates(est, tols):
    resolution = (f"{est.outer_used}/{est.outer_requested} chains resolved"
                  f" (radius attempts {list(est.radius_counts)}, "
                  f"failing levels {list(est.unresolved_k)})")
    if est.outer_used == 0:
        msg = ("no chain resolved within the radius cap; identity not "
               "measurable on random critical fields at these scales: "
               + resolution)
        yield _gate("C8", False, float("nan"), tols["C8"], msg)
        yield _gate("C11", False, float("nan"), tols["C11"], msg)
        return
    ok_id = abs(est.identity_z) <= tols["C8"]
    ok_cross = est.cross_z_max <= tols["C8"]
    yield _gate("C8", ok_id and ok_cross,
                {"identity_z": est.identity_z,
                 "cross_z_max": est.cross_z_max}, tols["C8"],
                f"variance identity z {est.identity_z:.2f}, max cross-moment"
                f" z {est.cross_z_max:.2f}; " + resolution)
    ratio = est.fourth_ratio
    ok_ratio = (not math.isnan(ratio)) and ratio < tols["C11"]
    yield _gate("C11", ok_ratio, ratio, tols["C11"],
                f"deep-level fourth-moment max/min ratio {ratio:.3f}"
                if not math.isnan(ratio) else
                "fourth-moment ratio undefined (no positive deep moments); "
                + resolution)


def _ytilde_gate(report, tols):
    v = report.values
    if "difference_z" not in v or math.isnan(v["difference_z"]):
        return _gate("C9", False, float("nan"), tols["C9"],
                     "identity not evaluated: "
                     f"{int(v['nested_unresolved'])} nested and "
                     f"{int(v['single_unresolved'])} single-field chains "
                     "unresolved within the radius cap; "
                     + "; ".join(report.notes))
    z = v["difference_z"]
    return _gate("C9", abs(z) <= tols["C9"], z, tols["C9"],
                 f"nested {v['nested_mean_sq']:.5f} vs single-field "
                 f"{v['single_mean_sq']:.5f}: z {z:.2f} "
                 f"({int(v['negative_gaps'])} negative gaps)")


def _aggregate_arms(config: RunConfig, records: list, tols: dict) -> tuple:
    ladder_recs = [r for r in records if r["event"] == "ladder"]
    inner_scale = max(config.arm_n, 1)
    points, ps, ses = [], [], []
    for ratio in config.ratios:
        sub = [r for r in ladder_recs if r["ratio"] == ratio]
        hits = sum(r["hit"] for r in sub)
        p = hits / len(sub) if sub else float("nan")
        se = math.sqrt(max(p * (1.0 - p), 0.0) / len(sub)) if sub else 0.0
        ps.append(p)
        ses.append(se)
        points.append({"scale": int(ratio), "count": len(sub),
                       "stats": {"p": p, "se": se,
                                 "N": float(inner_scale * ratio),
                                 "hits": float(hits)}})
    target = arm_exponent(config.arm_j, config.arm_geometry,
                          tuple(config.arm_sigma))
    values = {"samples_per_scale": float(config.samples)}
    order = {}
    for event, j, sigma, geometry, ratio in ORDER_PROBES:
        sub = [r for r in records if r["event"] == event]
        hits = sum(r["hit"] for r in sub)
        order[event] = hits / len(sub) if sub else float("nan")
        values[f"{event}_p"] = order[event]
    summary = {"study": "arms", "spec": "bernoulli:1.0",
               "seed": config.seed, "params": config.canonical(),
               "points": points, "values": values, "fits": {}}
    gates = []
    if any(p <= 0 or math.isnan(p) for p in ps):
        gates.append(_gate("C10", False, ps, tols["C10"],
                           "underpowered: some ladder scale recorded no "
                           "arm hits; cannot fit a log slope",
                           underpowered=True))
    else:
        log_ps = [math.log(p) for p in ps]
        log_ses = [se / p for p, se in zip(ps, ses)]
        fit = windowed_fit(tuple(int(r) for r in config.ratios), log_ps,
                           log_ses, config.drop_scales)
        fit_all = windowed_fit(tuple(int(r) for r in config.ratios), log_ps,
                               log_ses, 0)
        summary["fits"] = {"decay": _fit_to_json(fit),
                           "decay_all_scales": _fit_to_json(fit_all)}
        if target is None:
            gates.append(_gate("C10", False, fit.slope, tols["C10"],
                               "no target exponent for a monochromatic "
                               "full-plane sequence"))
        else:
            gate = _slope_gate("C10", fit, -target, tols["C10"],
                               "arm decay")
            ordering = order["order_half5"] < order["order_full6"]
            gate["passed"] = bool(gate["passed"] and ordering
                                  and not gate["underpowered"])
            gate["message"] += (
                f"; ordering half-plane 5-arm {order['order_half5']:.5f} < "
                f"full-plane 6-arm {order['order_full6']:.5f}: {ordering}")
            gates.append(gate)
    return summary, gates


# ---------------------------------------------------------------------------
# Persistence.

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=True)


def make_header(config: RunConfig) -> dict:
    return {"kind": "header", "format": RECORD_FORMAT,
            "version": PACKAGE_VERSION, "study": config.study,
            "config": config.canonical(),
            "config_hash": config.config_hash(), "prng": PRNG_ID,
            "tolerance_table_version": TOLERANCE_TABLE_VERSION,
            "tolerances": config.tolerances()}


def record_lines(config: RunConfig, records: list) -> list:
    """Flatten study records to one line per (sample, scale)."""
    study = config.study
    if study in ("tc", "var", "gap"):
        lines = []
        for r in sorted(records, key=lambda r: r["index"]):
            for pos, n in enumerate(config.n_ladder):
                lines.append({"kind": "record", "study": study,
                              "sample": r["index"], "n": int(n),
                              "T": r["T"][pos], "TB": r["TB"][pos],
                              "site_dom": r["site_dom"],
                              "ladder_dom": r["ladder_dom"]})
        return lines
    if study in ("duality", "circuits"):
        out = []
        for r in sorted(records, key=lambda r: (r["n"], r["sample"])):
            line = {"kind": "record", "study": study}
            line.update(r)
            out.append(line)
        return out
    if study == "martingale":
        out = []
        for r in sorted(records, key=lambda r: r["index"]):
            line = {"kind": "record", "study": study, "sample": r["index"]}
            line.update({k: v for k, v in r.items() if k != "index"})
            out.append(line)
        return out
    if study == "ytilde":
        out = []
        order = {"nested": 0, "single": 1}
        for r in sorted(records, key=lambda r: (order[r["side"]],
                                                r["index"])):
            line = {"kind": "record", "study": study}
            line.update(r)
            out.append(line)
        return out
    if study == "arms":
        events = ["ladder"] + [probe[0] for probe in ORDER_PROBES]
        pos = {e: i for i, e in enumerate(events)}
        out = []
        for r in sorted(records, key=lambda r: (pos[r["event"]],
                                                r["ratio"], r["sample"])):
            line = {"kind": "record", "study": study}
            line.update(r)
            out.append(line)
        return out
    if study == "chars":
        spec = config.spec()
        out = []
        for n in config.n_ladder:
            s1, s2 = char_sums(spec, int(n))
            out.append({"kind": "record", "study": study, "n": int(n),
                        "S1": s1, "S2": s2})
        return out
    raise ValueError(f"unknown study {study!r}")


def csv_table(config: RunConfig, summary: dict) -> str:
    """One CSV row per scale, with config identity in comment lines."""
    buf = io.StringIO()
    buf.write(f"# study={config.study}\n")
    buf.write(f"# config_hash={config.config_hash()}\n")
    buf.write(f"# version={PACKAGE_VERSION}\n")
    buf.write(f"# prng={PRNG_ID}\n")
    points = summary.get("points", [])
    stat_keys = sorted({k for p in points for k in p["stats"]})
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scale", "count"] + stat_keys)
    for p in points:
        writer.writerow([p["scale"], p["count"]]
                        + [repr(p["stats"][k]) if k in p["stats"] else ""
                           for k in stat_keys])
    return buf.getvalue()


def write_outputs(config: RunConfig, records: list, summary: dict,
                  gates: list, exit_code: int, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    header = make_header(config)
    paths = {
        "records": os.path.join(out_dir, "records.jsonl"),
        "summary": os.path.join(out_dir, "summary.json"),
        "table": os.path.join(out_dir, "table.csv"),
    }
    with open(paths["records"], "w") as fh:
        fh.write(_dumps(header) + "\n")
        for line in record_lines(config, records):
            fh.write(_dumps(line) + "\n")
    doc = {"header": header, "summary": summary, "gates": gates,
           "exit_code": exit_code}
    with open(paths["summary"], "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    with open(paths["table"], "w") as fh:
        fh.write(csv_table(config, summary))
    return paths


def gate_exit_code(gates: list) -> int:
    return 0 if all(g["passed"] for g in gates) else 2


def print_gates(gates: list, stream=None) -> None:
    stream = stream or sys.stdout
    for g in gates:
        status = "PASS" if g["passed"] else (
            "UNDERPOWERED" if g["underpowered"] else "FAIL")
        stream.write(f"{g['criterion']:>4}  {status:<12} {g['message']}\n")


def run(config: RunConfig) -> int:
    """Execute a configured study end to end; returns the exit code."""
    t0 = time.monotonic()
    try:
        tasks = build_tasks(config)
        records = run_tasks(tasks, config.workers)
        summary, gates = aggregate_run(config, records)
        code = gate_exit_code(gates)
        out_dir = config.out or f"critfpp-{config.study}-out"
        paths = write_outputs(config, records, summary, gates, code, out_dir)
    except Exception as err:  # noqa: BLE001 - exit-code contract
        print(f"error: {err}", file=sys.stderr)
        return 1
    elapsed = time.monotonic() - t0
    print_gates(gates)
    print(f"records: {paths['records']}")
    print(f"summary: {paths['summary']}")
    print(f"table:   {paths['table']}")
    print(f"elapsed: {elapsed:.1f}s ({len(records)} records, "
          f"{config.workers} workers)", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# Re-aggregation of stored records.

def read_record_file(path: str) -> tuple:
    """Read one records.jsonl file -> (header, record dicts)."""
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise ValueError(f"{path}: missing header line")
    header = lines[0]
    records = [ln for ln in lines[1:] if ln.get("kind") == "record"]
    return header, records


def _unflatten(config: RunConfig, flat: list) -> list:
    """Rebuild aggregation inputs from per-(sample, scale) lines.

    Each line carries a ``_file`` tag so merged seed files with equal
    sample indices stay distinct; the tag folds into a synthetic index
    that preserves (file, sample) order.
    """
    study = config.study
    if study in ("tc", "var", "gap"):
        ladder = [int(n) for n in config.n_ladder]
        by_sample = {}
        for line in flat:
            key = (line["_file"], line["sample"])
            by_sample.setdefault(key, {})[line["n"]] = line
        recs = []
        for fi, idx in sorted(by_sample):
            rows = by_sample[(fi, idx)]
            if sorted(rows) != sorted(ladder):
                raise ValueError(f"sample {idx}: incomplete ladder")
            recs.append({"index": fi * MERGE_INDEX_STRIDE + idx,
                         "T": [rows[n]["T"] for n in ladder],
                         "TB": [rows[n]["TB"] for n in ladder],
                         "site_dom": rows[ladder[0]]["site_dom"],
                         "ladder_dom": rows[ladder[0]]["ladder_dom"]})
        return recs
    if study == "chars":
        return []
    out = []
    for line in flat:
        rec = {k: v for k, v in line.items() if k not in ("kind", "study")}
        fi = rec.pop("_file")
        if study == "martingale":
            rec["index"] = rec.pop("sample")
        if "index" in rec:
            rec["index"] = fi * MERGE_INDEX_STRIDE + rec["index"]
        out.append(rec)
    return out


def report_from_files(paths: list, out_dir: str) -> int:
    """Recompute aggregates from stored records; exit-code contract as run.

    Files must share study, distribution, and study parameters; seeds may
    differ, in which case the pooled report is flagged as merged.
    """
    try:
        if not paths:
            raise ValueError("no records")
        headers, all_records = [], []
        for fi, path in enumerate(paths):
            header, records = read_record_file(path)
            headers.append(header)
            for rec in records:
                rec["_file"] = fi
            all_records.extend(records)
        if not all_records:
            raise ValueError("no records")
        kinds = sorted({h["study"] for h in headers})
        if len(kinds) > 1:
            raise ValueError("mixed incompatible studies: "
                             + ", ".join(kinds))
        base = dict(headers[0]["config"])
        seeds = sorted({h["config"]["seed"] for h in headers})
        for h in headers[1:]:
            other = dict(h["config"])
            a = {k: v for k, v in base.items() if k != "seed"}
            b = {k: v for k, v in other.items() if k != "seed"}
            if a != b:
                raise ValueError("record files disagree on study "
                                 "parameters; refusing to merge")
        config = config_from_canonical(base)
        records = _unflatten(config, all_records)
        summary, gates = aggregate_run(config, records)
        if len(seeds) > 1:
            summary["merged_seeds"] = seeds
        code = gate_exit_code(gates)
        os.makedirs(out_dir, exist_ok=True)
        doc = {"header": make_header(config), "summary": summary,
               "gates": gates, "exit_code": code,
               "merged_seeds": seeds if len(seeds) > 1 else None}
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            fh.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        with open(os.path.join(out_dir, "table.csv"), "w") as fh:
            fh.write(csv_table(config, summary))
    except Exception as err:  # noqa: BLE001 - exit-code contract
        print(f"error: {err}", file=sys.stderr)
        return 1
    print_gates(gates)
    print(f"summary: {os.path.join(out_dir, 'summary.json')}")
    return code


def config_from_canonical(canon: dict) -> RunConfig:
    """Rebuild a RunConfig from the canonical dict stored in headers."""
    kw = {"study": canon["study"], "dist": canon["dist"],
          "samples": canon["samples"], "seed": canon["seed"]}
    if "n_ladder" in canon:
        kw["n_ladder"] = tuple(canon["n_ladder"])
    if "k_max" in canon:
        kw["k_max"] = canon["k_max"]
    for key in ("inner_samples", "start_radius", "radius_cap",
                "drop_scales"):
        if key in canon:
            kw[key] = canon[key]
    if "ratios" in canon:
        kw["ratios"] = tuple(canon["ratios"])
    if "arm" in canon:
        arm = canon["arm"]
        kw.update({"arm_j": arm["j"], "arm_sigma": tuple(arm["sigma"]),
                   "arm_geometry": arm["geometry"], "arm_n": arm["n"]})
    if "tol" in canon:
        kw["tol"] = tuple(sorted(canon["tol"].items()))
    return RunConfig(**kw)
