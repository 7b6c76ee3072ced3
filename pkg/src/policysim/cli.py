"""Command-line front end: ``policysim {simulate,sweep,detect,its}``.

Every command computes its results, renders them into a scratch directory, and
only then copies the files into ``--out``; a failing command leaves no partial
output behind. Exit codes: 0 success, 2 usage, 3 bad input data or config,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import re
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .coordination import (baseline_probability, connected_components, crossover_threshold, detect_coordination,
                           fit_exp_mixture_em, interarrival_times, select_mixture_order)
from .errors import DataError, NumericError, ParameterError
from .io import SUMMARY_COLUMNS, read_events, read_series, summary_rows, write_json, write_table
from .its import ItsOptions, run_its_at
from .rng import DEFAULT_SEED
from .sim import (Intervention, apply_intervention, bundled_config, dump_config, load_config, read_interventions,
                  relative_effect, run_ensemble)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SWEEP_WEEKS = (60, 90, 119)
BUNDLED = ("pages", "groups")


class StageError(Exception):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (DataError, ParameterError, NumericError, OSError, ValueError, ArithmeticError) as exc:
        raise StageError(name, exc) from exc


def _load_config(ref: str):
    path = Path(ref)
    if not path.exists() and ref in BUNDLED:
        return bundled_config(ref)
    if not path.is_file():
        raise DataError(f"config file {ref} not found (bundled configs: {', '.join(BUNDLED)})")
    return load_config(path)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_") or "run"


# simulate ----------------------------------------------------------------------

def cmd_simulate(args, out: Path) -> None:
    config = _stage("config", _load_config, args.config)
    for text in args.intervention or []:
        config = _stage("intervention", apply_intervention, config, Intervention.parse(text))
    summary = _stage("simulation", run_ensemble, config, args.runs, args.seed, n_jobs=args.jobs)
    write_table(out / "summary.csv", SUMMARY_COLUMNS, summary_rows(summary))
    (out / "config.cfg").write_text(dump_config(config), encoding="utf-8")
    write_json(out / "summary.json", {
        "command": "simulate",
        "config": config.name or Path(args.config).stem,
        "interventions": list(args.intervention or []),
        "runs": args.runs,
        "seed": args.seed,
        "t_max": config.t_max,
        "final_week": {"posts_median": summary.posts[1, -1], "engagements_median": summary.engagements[1, -1]},
    })
    plotting.plot_ensemble(summary, out / "summary.png", config.t_policy, config.name)


# sweep -------------------------------------------------------------------------

def cmd_sweep(args, out: Path) -> None:
    config = _stage("config", _load_config, args.config)
    interventions = _stage("interventions", read_interventions, args.interventions)
    if not interventions:
        raise StageError("interventions", DataError(f"{args.interventions} lists no interventions"))
    treated = [(iv, _stage("intervention", apply_intervention, config, iv)) for iv in interventions]
    weeks = [w for w in SWEEP_WEEKS if w <= config.t_max]
    baseline = _stage("simulation", run_ensemble, config, args.runs, args.seed, n_jobs=args.jobs)
    rows, records = [], []
    for iv, cfg in treated:
        summary = _stage("simulation", run_ensemble, cfg, args.runs, args.seed, n_jobs=args.jobs)
        effect = relative_effect(summary, baseline, weeks)
        for series in ("posts", "engagements"):
            rows.append([iv.label, str(iv), series, *(effect[w][series] for w in weeks)])
        records.append({"label": iv.label, "intervention": str(iv),
                        "effect": {str(w): effect[w] for w in weeks}})
    write_table(out / "sweep.csv", ["label", "intervention", "series", *(f"week_{w}" for w in weeks)], rows)
    write_table(out / "baseline_summary.csv", SUMMARY_COLUMNS, summary_rows(baseline))
    write_json(out / "sweep.json", {"command": "sweep", "config": config.name or Path(args.config).stem,
                                    "runs": args.runs, "seed": args.seed, "weeks": weeks,
                                    "interventions": records})
    last = weeks[-1]
    labels = [r["label"] for r in records]
    plotting.plot_sweep(labels, [r["effect"][str(last)]["posts"] for r in records],
                        [r["effect"][str(last)]["engagements"] for r in records], out / "sweep.png", last)


# detect ------------------------------------------------------------------------

def cmd_detect(args, out: Path) -> None:
    events = _stage("read events", read_events, args.events)
    gaps = interarrival_times(events)
    if len(gaps) < 2:
        raise StageError("interarrivals", DataError(f"need at least 2 interarrival times, got {len(gaps)}"))
    durations = np.array([g for g, _ in gaps], dtype=float)
    table, best_k = {}, None
    if args.threshold is not None:
        threshold, source = args.threshold, "override"
        if args.p0 is None:
            two = _stage("mixture fit", fit_exp_mixture_em, durations, 2, seed=args.seed)
            mixture = two
        else:
            mixture = None
    else:
        best_k, table, fits = _stage("mixture selection", select_mixture_order, durations,
                                     range(1, args.k_max + 1), seed=args.seed)
        if 2 not in fits:
            raise StageError("threshold", NumericError("the two-component fit failed"))
        mixture = fits[2]
        threshold, source = _stage("threshold", crossover_threshold, mixture), "fitted"
    p0 = args.p0 if args.p0 is not None else _stage("baseline probability", baseline_probability,
                                                    threshold, float(mixture.mu[-1]))
    edges = _stage("pair tests", detect_coordination, events, threshold, p0, args.alpha)
    venues = sorted({e.venue_id for e in events})
    clusters = connected_components(edges, venues)

    write_table(out / "edges.csv", ["venue_a", "venue_b", "n_pairs", "k_near", "p_value", "significant"],
                [[e.venue_a, e.venue_b, e.n_pairs, e.k_near, e.p_value, e.significant] for e in edges])
    write_table(out / "components.csv", ["component", "size", "venue_id"],
                [[i, len(c), v] for i, c in enumerate(clusters) for v in c])
    write_json(out / "summary.json", {
        "command": "detect",
        "events": len(events),
        "interarrivals": len(durations),
        "threshold": threshold,
        "threshold_source": source,
        "p0": p0,
        "alpha": args.alpha,
        "selected_k": best_k,
        "components": None if mixture is None else [{"mu": m, "pi": w} for m, w in zip(mixture.mu, mixture.pi)],
        "order_table": {str(k): row for k, row in table.items()},
        "significant_edges": sum(e.significant for e in edges),
        "clusters": sum(len(c) > 1 for c in clusters),
    })
    plotting.plot_interarrivals(durations, out / "interarrivals.png", mixture, threshold)


# its ---------------------------------------------------------------------------

def cmd_its(args, out: Path) -> None:
    series = _stage("read series", read_series, args.series)
    options = ItsOptions(transform=args.transform, max_p=args.max_p, max_q=args.max_q, level=args.level)
    report = _stage("its", run_its_at, series, args.policy_date, options)
    fit = report.fit
    rows = [[term, coef, se] for term, coef, se in fit.params()]
    rows += [["aicc", fit.aicc, None], ["chi2", report.gof.chi2, None], ["dof", report.gof.dof, None],
             ["p_value", report.gof.p_value, None], ["percent_change", report.percent_change, None]]
    write_table(out / "report.csv", ["term", "coef", "std_err"], rows)
    pct = f"{round(100 * args.level):d}"
    write_table(out / "band.csv", ["week", "observed", "mean", f"lo{pct}", f"hi{pct}", "inside_band"],
                [[r.date.isoformat(), r.observed, r.mean, r.lower, r.upper, r.inside] for r in report.band])
    write_json(out / "report.json", {"command": "its", "series": Path(args.series).name,
                                     "policy_date": args.policy_date.isoformat(), **report.to_dict()})
    plotting.plot_its(report, out / "its.png", f"{series.label}: {report.spec}")


# parser ------------------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return value


def _unit_interval(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def _order(text):
    value = int(text)
    if not 0 <= value <= 5:
        raise argparse.ArgumentTypeError("must be between 0 and 5")
    return value


def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected YYYY-MM-DD") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="policysim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an ensemble and write per-week percentile bands")
    sim.add_argument("--config", required=True, help="config file, or a bundled name: pages, groups")
    sim.add_argument("--runs", type=_positive_int, default=500)
    sim.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    sim.add_argument("--intervention", action="append", metavar="SPEC",
                     help="apply an intervention such as scale_g:0.2 (repeatable)")
    sim.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    sim.add_argument("--out", required=True, type=Path)
    sim.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="percent change vs a shared baseline for each intervention")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--interventions", required=True, help="file with one intervention per line")
    sweep.add_argument("--runs", type=_positive_int, default=500)
    sweep.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    sweep.add_argument("--jobs", type=_positive_int, default=1)
    sweep.add_argument("--out", required=True, type=Path)
    sweep.set_defaults(func=cmd_sweep)

    det = sub.add_parser("detect", help="flag venue pairs that share links near-simultaneously")
    det.add_argument("--events", required=True, help="CSV with venue_id,url,timestamp")
    det.add_argument("--k-max", type=_positive_int, default=4, help="largest mixture order to try")
    det.add_argument("--threshold", type=float, help="seconds; skips threshold estimation")
    det.add_argument("--p0", type=_unit_interval, help="baseline probability; with --threshold skips all fitting")
    det.add_argument("--alpha", type=_unit_interval, default=0.05)
    det.add_argument("--seed", type=_seed, default=0, help="seed for EM restarts")
    det.add_argument("--out", required=True, type=Path)
    det.set_defaults(func=cmd_detect)

    its = sub.add_parser("its", help="interrupted time series against an ARIMA projection")
    its.add_argument("--series", required=True, help="CSV with date,value (blank value = missing)")
    its.add_argument("--policy-date", required=True, type=_date)
    its.add_argument("--transform", choices=("none", "log", "logit"), default="none")
    its.add_argument("--max-p", type=_order, default=5)
    its.add_argument("--max-q", type=_order, default=5)
    its.add_argument("--level", type=_unit_interval, default=0.90)
    its.add_argument("--out", required=True, type=Path)
    its.set_defaults(func=cmd_its)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threshold", None) is not None and args.threshold <= 0:
        parser.error("--threshold must be positive")
    if args.out.exists() and not args.out.is_dir():
        parser.error(f"--out {args.out} exists and is not a directory")
    try:
        with tempfile.TemporaryDirectory(prefix="policysim-") as scratch:
            args.func(args, Path(scratch))
            args.out.mkdir(parents=True, exist_ok=True)
            for path in sorted(Path(scratch).iterdir()):
                shutil.copyfile(path, args.out / path.name)
    except StageError as exc:
        cause = exc.cause
        code = EXIT_NUMERIC if isinstance(cause, (NumericError, ArithmeticError)) else EXIT_DATA
        if isinstance(cause, ValueError) and not isinstance(cause, (DataError, ParameterError)):
            code = EXIT_NUMERIC if exc.stage not in ("config", "intervention", "interventions") else EXIT_DATA
        print(f"policysim {args.command}: error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
