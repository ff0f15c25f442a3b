"""Command-line interface.

    mvtraffic stats <trace> [--view V | --sequential | --combined] [--smooth G]
    mvtraffic curves <trace>... --shaping {view|S|C|smoothG}
    mvtraffic mux cmin <trace> --J N [--epsilon E --runs R --sims S --seed K --shaping C|smoothG]
    mvtraffic mux jmax <trace> --C BPS [...]
    mvtraffic mux loss <trace> --J N --C BPS [...]
    mvtraffic synth --spec FILE --seed K [-o OUT]

Reports are CSV (default) or JSON.  Exit status: 0 ok, 1 invalid trace or
input file, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Sequence

from . import metrics
from .mux import MuxScenario, StopRule, estimate_loss
from .search import SearchConfig, admission_search, find_cmin
from .streamshape import DemandSequence, combine, gop_smooth, to_demand
from .trace import (MultiviewTrace, SynthSpec, TraceFormatError, TraceValidationError,
                    parse_trace, serialize_trace, synthesize_trace)

SEED_ENV = "MVTRAFFIC_SEED"

STATS_COLUMNS = ["label", "normalization", "samples", "mean_frame_size", "variance",
                 "std_dev", "cov", "mean_bitrate"]
CURVE_COLUMNS = ["kind", "label", "avg_psnr", "avg_bitrate", "cov"]
CMIN_COLUMNS = ["J", "c_min", "bracket_low", "bracket_high", "p_hat", "ci_half_width",
                "pooled_ratio", "replications", "zero_loss", "evaluations",
                "run_mean", "run_min", "run_max"]
JMAX_COLUMNS = ["C", "j_max", "p_hat", "ci_half_width", "replications", "zero_loss",
                "evaluations"]
LOSS_COLUMNS = ["J", "C", "budget_bits", "p_hat", "ci_half_width", "confidence",
                "replications", "zero_loss", "converged", "pooled_ratio", "upper_bound"]
# bit/s columns: integers, or Mb/s with --human
RATE_COLUMNS = {"mean_bitrate", "avg_bitrate", "c_min", "bracket_low", "bracket_high", "C"}


class UsageError(Exception):
    pass


def _fmt(value, column: str, human: bool) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if column in RATE_COLUMNS:
        return f"{value / 1e6:.6f}" if human else str(int(round(value)))
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".12g")


def _json_value(value, column: str, human: bool):
    if value is None or isinstance(value, (bool, str)):
        return value
    if column in RATE_COLUMNS:
        return round(value / 1e6, 6) if human else int(round(value))
    if isinstance(value, int):
        return value
    return float(value)


def render(rows: list[dict], columns: list[str], fmt: str = "csv", human: bool = False) -> str:
    if fmt == "json":
        data = [{c: _json_value(r.get(c), c, human) for c in columns} for r in rows]
        return json.dumps(data, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] if isinstance(r.get(c), str) else _fmt(r.get(c), c, human)
                    for c in columns])
    return buf.getvalue()


def _read_trace(path: str) -> MultiviewTrace:
    if path == "-":
        return parse_trace(sys.stdin)
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)


def _stats_row(s: metrics.StreamStats) -> dict:
    return {"label": s.label, "normalization": s.normalization, "samples": s.sample_count,
            "mean_frame_size": s.mean_frame_size, "variance": s.variance,
            "std_dev": s.std_dev, "cov": s.cov, "mean_bitrate": s.mean_bitrate}


def _demand(trace: MultiviewTrace, shaping: str) -> DemandSequence:
    demand = to_demand(combine(trace))
    if shaping == "C":
        return demand
    kind, g = metrics.parse_shaping(shaping)
    if kind != "smooth":
        raise UsageError(f"multiplexing supports shaping C or smoothG, not {shaping!r}")
    return gop_smooth(demand, g or trace.meta.gop_length)


def cmd_stats(args) -> tuple[list[dict], list[str]]:
    trace = _read_trace(args.trace)
    rows = []
    if args.view is not None:
        rows.append(_stats_row(metrics.view_stats(trace, args.view)))
    elif args.sequential:
        rows.append(_stats_row(metrics.sequential_variability(trace, args.normalization)))
    elif args.combined:
        rows.append(_stats_row(metrics.combined_variability(trace)))
    elif args.smooth is None:
        rows.extend(_stats_row(metrics.view_stats(trace, v)) for v in range(1, trace.V + 1))
    if args.smooth is not None:
        smoothed = gop_smooth(to_demand(combine(trace)), args.smooth)
        rows.append(_stats_row(metrics.demand_stats(smoothed, f"smooth{args.smooth}")))
    return rows, STATS_COLUMNS


def cmd_curves(args):
    encodings = [(_read_trace(p), args.shaping) for p in args.traces]
    points = metrics.build_curves(encodings)
    rows = [{"kind": p.kind, "label": p.label, "avg_psnr": p.avg_psnr,
             "avg_bitrate": p.avg_bitrate, "cov": p.cov} for p in points]
    return rows, CURVE_COLUMNS


def _search_config(args) -> SearchConfig:
    return SearchConfig(epsilon=args.epsilon, runs=args.runs, sims_per_run=args.sims,
                        seed=args.seed, tolerance=args.tolerance,
                        rel_half_width=args.rel_width, confidence=args.confidence,
                        workers=args.workers)


def cmd_cmin(args):
    trace = _read_trace(args.trace)
    res = find_cmin(_demand(trace, args.shaping), args.J, _search_config(args))
    est = res.loss
    row = {"J": res.J, "c_min": res.c_min, "bracket_low": res.bracket[0],
           "bracket_high": res.bracket[1], "p_hat": est.p_hat,
           "ci_half_width": est.ci_half_width, "pooled_ratio": est.pooled_ratio,
           "replications": est.replications, "zero_loss": est.zero_loss,
           "evaluations": res.evaluations, "run_mean": res.run_mean,
           "run_min": res.run_min, "run_max": res.run_max}
    return [row], CMIN_COLUMNS


def cmd_jmax(args):
    trace = _read_trace(args.trace)
    res = admission_search(_demand(trace, args.shaping), args.C, _search_config(args))
    est = res.loss
    row = {"C": res.link_rate, "j_max": res.j_max, "evaluations": res.evaluations,
           "p_hat": est.p_hat if est else None,
           "ci_half_width": est.ci_half_width if est else None,
           "replications": est.replications if est else None,
           "zero_loss": est.zero_loss if est else None}
    return [row], JMAX_COLUMNS


def cmd_loss(args):
    trace = _read_trace(args.trace)
    scenario = MuxScenario(_demand(trace, args.shaping), args.J, args.C)
    stop = StopRule(rel_half_width=args.rel_width, confidence=args.confidence,
                    min_replications=args.min_reps, max_replications=args.max_reps)
    est = estimate_loss(scenario, args.seed, stop, args.workers)
    row = {"J": args.J, "C": args.C, "budget_bits": scenario.budget_bits,
           "p_hat": est.p_hat, "ci_half_width": est.ci_half_width,
           "confidence": est.confidence_level, "replications": est.replications,
           "zero_loss": est.zero_loss, "converged": est.converged,
           "pooled_ratio": est.pooled_ratio, "upper_bound": est.upper_bound}
    return [row], LOSS_COLUMNS


def cmd_synth(args):
    spec = SynthSpec.from_json(args.spec)
    return serialize_trace(synthesize_trace(spec, args.seed))


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    out = argparse.ArgumentParser(add_help=False)
    out.add_argument("--format", choices=["csv", "json"], default="csv")
    out.add_argument("--human", action="store_true", help="render bit rates in Mb/s")
    out.add_argument("-o", "--output", default="-", help="output path ('-' for stdout)")

    p = argparse.ArgumentParser(prog="mvtraffic",
                                description="3D video trace statistics and multiplexing")
    sub = p.add_subparsers(dest="command", required=True)

    st = sub.add_parser("stats", parents=[out], help="frame-size statistics")
    st.add_argument("trace")
    sel = st.add_mutually_exclusive_group()
    sel.add_argument("--view", type=int)
    sel.add_argument("--sequential", action="store_true")
    sel.add_argument("--combined", action="store_true")
    st.add_argument("--smooth", type=int, metavar="G")
    st.add_argument("--normalization", choices=["paper", "standard"], default="paper")
    st.set_defaults(func=cmd_stats)

    cu = sub.add_parser("curves", parents=[out], help="RD and VD curve points")
    cu.add_argument("traces", nargs="+")
    cu.add_argument("--shaping", default="C")
    cu.set_defaults(func=cmd_curves)

    mx = sub.add_parser("mux", help="bufferless multiplexing experiments")
    msub = mx.add_subparsers(dest="experiment", required=True)
    common = argparse.ArgumentParser(add_help=False, parents=[out])
    common.add_argument("trace")
    common.add_argument("--shaping", default="C")
    common.add_argument("--seed", type=int, default=seed)
    common.add_argument("--rel-width", type=float, default=0.10)
    common.add_argument("--confidence", type=float, default=0.95)
    common.add_argument("--workers", type=int, default=1)
    search = argparse.ArgumentParser(add_help=False, parents=[common])
    search.add_argument("--epsilon", type=float, default=1e-5)
    search.add_argument("--runs", type=int, default=500)
    search.add_argument("--sims", type=int, default=1000)
    search.add_argument("--tolerance", type=float, default=1e-3)

    cm = msub.add_parser("cmin", parents=[search], help="minimum link rate for J streams")
    cm.add_argument("--J", type=int, required=True)
    cm.set_defaults(func=cmd_cmin)
    jm = msub.add_parser("jmax", parents=[search], help="maximum streams for a link rate")
    jm.add_argument("--C", type=float, required=True)
    jm.set_defaults(func=cmd_jmax)
    lo = msub.add_parser("loss", parents=[common], help="loss probability estimate")
    lo.add_argument("--J", type=int, required=True)
    lo.add_argument("--C", type=float, required=True)
    lo.add_argument("--min-reps", type=int, default=100)
    lo.add_argument("--max-reps", type=int, default=100_000)
    lo.set_defaults(func=cmd_loss)

    sy = sub.add_parser("synth", help="generate a seeded synthetic trace")
    sy.add_argument("--spec", required=True, help="JSON synthesis parameters")
    sy.add_argument("--seed", type=int, default=seed)
    sy.add_argument("-o", "--output", default="-")
    sy.set_defaults(func=cmd_synth, format=None, human=False)
    return p


def _emit(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        parser = build_parser()
    except UsageError as e:
        print(f"mvtraffic: {e}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        result = args.func(args)
    except TraceValidationError as e:
        print("mvtraffic: invalid trace:", file=sys.stderr)
        for v in e.violations:
            print(f"  {v}", file=sys.stderr)
        return 1
    except (TraceFormatError, OSError) as e:
        print(f"mvtraffic: {e}", file=sys.stderr)
        return 1
    except (UsageError, ValueError) as e:
        print(f"mvtraffic: {e}", file=sys.stderr)
        return 2
    if isinstance(result, str):
        _emit(result, args.output)
    else:
        rows, columns = result
        _emit(render(rows, columns, args.format, args.human), args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
