"""Command-line interface.

One subcommand per study plus ``verify`` (acceptance suites) and
``report`` (re-aggregation of stored records).  Every run is fully
determined by its flags and seed; outputs land in ``--out`` as
line-delimited records, a JSON summary, and a CSV table (see
docs/formats.md).  Exit codes: 0 pass, 2 tolerance failure or
underpowered, 1 execution error.
"""

import argparse
import os
import sys

from .runner import RunConfig, report_from_files, run
from .tolerances import CRITERIA, parse_overrides
from .verify import SUITES, run_suite

STUDY_HELP = {
    "tc": "mean passage time vs log n ladder (time-constant slope)",
    "var": "passage-time variance vs log n ladder (variance slope)",
    "gap": "coupled general-vs-infimum slope comparison and gap decay",
    "duality": "exact circuit-count duality of the infimum-weight time",
    "circuits": "closed-circuit hierarchy consistency checks",
    "martingale": "variance decomposition across the circuit chain",
    "ytilde": "nested vs single-field squared-gap estimators",
    "arms": "arm-event probability ladder and ordering probes",
    "chars": "characteristic quantile sums (deterministic)",
}

LADDER_STUDIES = ("tc", "var", "gap", "duality", "circuits", "chars")


def parse_scales(text: str) -> tuple:
    """Parse ``--n``: '16..512' doubles dyadically, '64' or '16,64,256'
    list scales explicitly."""
    text = text.strip()
    try:
        if ".." in text:
            lo_text, hi_text = text.split("..", 1)
            lo, hi = int(lo_text), int(hi_text)
            if lo < 1 or hi < lo:
                raise ValueError
            scales = [lo]
            while scales[-1] < hi:
                scales.append(scales[-1] * 2)
            if scales[-1] != hi:
                raise ValueError
            return tuple(scales)
        scales = tuple(int(p) for p in text.split(","))
        if not scales or any(s < 1 for s in scales):
            raise ValueError
        return scales
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad scale ladder {text!r}: use 'a..b' with b a power-of-two "
            f"multiple of a, a single scale, or a comma list") from None


def parse_sigma(text: str) -> tuple:
    sigma = tuple(s.strip() for s in text.split(","))
    if not sigma or any(s not in ("open", "closed") for s in sigma):
        raise argparse.ArgumentTypeError(
            f"bad arm sequence {text!r}: comma list of open/closed")
    return sigma


def default_workers() -> int:
    env = os.environ.get("CRITFPP_WORKERS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SystemExit(
                f"error: CRITFPP_WORKERS={env!r} is not an integer")
    return 1


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--dist", default="bernoulli:1.0",
                     help="weight distribution, family:params "
                          "(default bernoulli:1.0)")
    sub.add_argument("--samples", type=int, default=None,
                     help="outer Monte Carlo samples")
    sub.add_argument("--inner-samples", type=int, default=None,
                     help="inner resamples per outer sample")
    sub.add_argument("--seed", type=int, default=0,
                     help="master seed (default 0)")
    sub.add_argument("--workers", type=int, default=None,
                     help="worker processes (default $CRITFPP_WORKERS or 1)")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--tol", action="append", default=[],
                     metavar="CRITERION=VALUE",
                     help="tolerance override, repeatable "
                          f"(criteria: {', '.join(CRITERIA)})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critfpp",
        description="Monte Carlo studies of critical first-passage "
                    "percolation on the triangular lattice.")
    subs = parser.add_subparsers(dest="command", required=True)

    for study, blurb in STUDY_HELP.items():
        sub = subs.add_parser(study, help=blurb, description=blurb)
        _add_common(sub)
        if study in LADDER_STUDIES:
            sub.add_argument("--n", type=parse_scales, required=True,
                             metavar="A..B",
                             help="scale ladder, e.g. 16..512 or 16,64,256")
        if study in ("martingale", "ytilde"):
            sub.add_argument("--k", type=int,
                             default=4 if study == "martingale" else 2,
                             help="chain depth k (default %(default)s)")
            sub.add_argument("--start-radius", type=int, default=None,
                             help="initial field radius for chain "
                                  "resolution")
            sub.add_argument("--radius-cap", type=int, default=None,
                             help="largest field radius before giving up")
        if study == "arms":
            sub.add_argument("--n", type=parse_scales, default=(4, 8, 16, 32),
                             metavar="A..B", dest="ratios",
                             help="annulus ratio ladder (default 4..32)")
            sub.add_argument("--j", type=int, default=2,
                             help="number of disjoint arms (default 2)")
            sub.add_argument("--sigma", type=parse_sigma,
                             default=("open", "closed"),
                             help="arm statuses, e.g. open,closed")
            sub.add_argument("--geometry", default="full",
                             choices=("full", "half", "three_quarter"),
                             help="territory restriction (default full)")
            sub.add_argument("--inner", type=int, default=0, dest="arm_n",
                             help="inner box radius n; 0 anchors at the "
                                  "origin (default 0)")

    sub = subs.add_parser(
        "verify", help="run an acceptance suite",
        description="Run one acceptance suite and print its pass/fail "
                    "matrix keyed to criteria identifiers.")
    sub.add_argument("suite", choices=SUITES)
    sub.add_argument("--samples", type=int, default=None,
                     help="override the registered sample counts")
    sub.add_argument("--inner-samples", type=int, default=None)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--out", default=None,
                     help="directory for per-study run outputs")
    sub.add_argument("--tol", action="append", default=[],
                     metavar="CRITERION=VALUE")

    sub = subs.add_parser(
        "report", help="recompute aggregates from stored records",
        description="Recompute summary and table from records.jsonl "
                    "files; files must share a study and parameters, "
                    "seeds may differ (merged reports are flagged).")
    sub.add_argument("records", nargs="+", help="records.jsonl paths")
    sub.add_argument("--out", default="critfpp-report-out",
                     help="output directory (default %(default)s)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    kw = {
        "study": args.command,
        "dist": args.dist,
        "seed": args.seed,
        "workers": args.workers if args.workers else default_workers(),
        "out": args.out,
        "tol": tuple(sorted(parse_overrides(args.tol).items())),
    }
    if args.samples is not None:
        kw["samples"] = args.samples
    if args.inner_samples is not None:
        kw["inner_samples"] = args.inner_samples
    if args.command in LADDER_STUDIES:
        kw["n_ladder"] = args.n
    if args.command == "chars":
        kw["samples"] = 1
    if args.command in ("martingale", "ytilde"):
        kw.update({"k_max": args.k, "start_radius": args.start_radius,
                   "radius_cap": args.radius_cap})
    if args.command == "arms":
        kw.update({"ratios": args.ratios, "arm_j": args.j,
                   "arm_sigma": args.sigma, "arm_geometry": args.geometry,
                   "arm_n": args.arm_n})
    return RunConfig(**kw)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as err:
        # argparse exits 2 on usage errors; 2 is reserved for tolerance
        # failures, so usage problems map to the error code
        code = err.code if isinstance(err.code, int) else 1
        return 0 if code == 0 else 1
    try:
        if args.command == "verify":
            workers = args.workers if args.workers else default_workers()
            return run_suite(args.suite, seed=args.seed, workers=workers,
                             samples=args.samples,
                             inner_samples=args.inner_samples,
                             tol=parse_overrides(args.tol),
                             out_dir=args.out)
        if args.command == "report":
            return report_from_files(args.records, args.out)
        config = config_from_args(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
