"""Command-line front end: ``pnp run``, ``pnp render`` and ``pnp report``."""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .engine import Trace, run
from .metrics import RunReport, aggregate_csv, build_report
from .render import LAYERS, RenderError, RenderSpec, evenly_spaced, render_svg
from .scenario import PRESETS, ConfigError, ScenarioConfig, load_config, preset

OUT_ENV = "PNP_OUT"


def parse_counts(text: str) -> list[int]:
    """``150``, ``150,300`` or ``150..300:50`` (inclusive, step defaults to 1)."""
    out: list[int] = []
    for part in text.split(","):
        m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*(?::\s*(\d+))?)?\s*", part)
        if not m:
            raise argparse.ArgumentTypeError(f"bad sensor count {part!r}")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) else lo
        step = int(m.group(3)) if m.group(3) else 1
        if hi < lo or step < 1:
            raise argparse.ArgumentTypeError(f"empty range {part!r}")
        out.extend(range(lo, hi + 1, step))
    return out


def _times(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad time list {text!r}") from None


def _layers(text: str) -> frozenset:
    return frozenset(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnp", description="Hexagonal-tiling sensor deployment simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a preset or a config file")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", help="YAML scenario file")
    src.add_argument("--preset", choices=PRESETS)
    r.add_argument("--n", type=parse_counts, help="sensor count(s): 150, 150,300 or 150..300:50")
    r.add_argument("--seed", type=int, default=None, help="first seed (default: config seed)")
    r.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    r.add_argument("--max-time", type=float, default=None)
    r.add_argument("--snapshots", type=int, default=4,
                   help="evenly spaced SVG snapshots per run (0 disables)")
    r.add_argument("-o", "--out", default=None,
                   help=f"output directory (default: ${OUT_ENV} or ./out)")
    r.add_argument("--jobs", type=int, default=1, help="parallel runs")
    r.add_argument("--allow-nonterm", action="store_true",
                   help="exit 0 even if some run hits max_time without quiescence")

    d = sub.add_parser("render", help="draw SVG snapshots from a trace")
    d.add_argument("trace")
    d.add_argument("--times", type=_times, default=None, help="comma-separated seconds")
    d.add_argument("--count", type=int, default=None, help="evenly spaced snapshots instead of --times")
    d.add_argument("--width", type=int, default=640)
    d.add_argument("--layers", type=_layers, default=frozenset(LAYERS),
                   help=f"comma-separated subset of {','.join(LAYERS)}")
    d.add_argument("-o", "--out", default=None)

    q = sub.add_parser("report", help="recompute the run report from a trace")
    q.add_argument("trace")
    q.add_argument("--window", type=float, default=None, help="quiescence window in seconds")
    q.add_argument("-o", "--out", default=None, help="write JSON here instead of stdout")
    return p


def _base_config(args) -> ScenarioConfig:
    if args.preset:
        return preset(args.preset)
    return load_config(args.config)


def _run_one(job: tuple[ScenarioConfig, int, str, int]) -> tuple[str, dict]:
    cfg, seed, run_dir, snapshots = job
    path = Path(run_dir)
    path.mkdir(parents=True, exist_ok=True)
    trace = run(cfg, seed)
    trace.write(path / "trace.jsonl")
    report = build_report(trace)
    (path / "report.json").write_text(report.to_json())
    for t in evenly_spaced(trace.records, snapshots):
        spec = RenderSpec((t,))
        (path / f"snapshot-{t:09.3f}.svg").write_text(render_svg(trace.records, t, spec))
    return run_dir, report.to_dict()


def cmd_run(args) -> int:
    base = _base_config(args)
    for w in base.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.max_time is not None:
        base = base.replace(max_time=args.max_time)
    counts = args.n or [base.n_sensors]
    first = base.seed if args.seed is None else args.seed
    if args.seeds < 1:
        raise ConfigError([("error", "--seeds must be at least 1")], "command line")
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    jobs = []
    for n in counts:
        cfg = base.replace(n_sensors=n) if n != base.n_sensors else base
        for seed in range(first, first + args.seeds):
            jobs.append((cfg, seed, str(out / f"{cfg.name}-n{n}-s{seed}"), args.snapshots))
    out.mkdir(parents=True, exist_ok=True)
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    reports = [RunReport(**d) for _, d in results]
    (out / "aggregate.csv").write_text(aggregate_csv(reports))
    failed = 0
    for run_dir, d in results:
        status = "ok" if d["terminated"] else "NOT TERMINATED"
        cov = d["final_coverage"]
        term = d["termination_time"]
        print(f"{run_dir}: {status} coverage={cov:.4f} "
              f"termination={'-' if term is None else f'{term:.1f}'}s "
              f"messages/sensor={d['messages_per_sensor']:.2f}")
        failed += not d["terminated"]
    if failed and not args.allow_nonterm:
        print(f"{failed} of {len(results)} runs did not terminate", file=sys.stderr)
        return 1
    return 0


def cmd_render(args) -> int:
    trace = Trace.read(args.trace)
    records = trace.records
    if args.times is not None and args.count is not None:
        raise RenderError("use either --times or --count")
    times = args.times if args.times is not None else evenly_spaced(records, args.count or 4)
    spec = RenderSpec(tuple(times), args.width, args.layers)
    out = Path(args.out) if args.out else Path(args.trace).parent
    svgs = [(t, render_svg(records, t, spec)) for t in spec.times]
    out.mkdir(parents=True, exist_ok=True)
    for t, svg in svgs:
        target = out / f"snapshot-{t:09.3f}.svg"
        target.write_text(svg)
        print(target)
    return 0


def cmd_report(args) -> int:
    trace = Trace.read(args.trace)
    text = build_report(trace, args.window).to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "render": cmd_render, "report": cmd_report}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    except (json.JSONDecodeError, KeyError, IndexError) as exc:
        print(f"error: unreadable trace: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
