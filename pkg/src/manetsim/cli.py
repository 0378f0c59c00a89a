"""Command line entry point: generate, run, sweep, report."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, replace

from . import metrics as M
from .errors import ManetSimError
from .harness import (
    DEFAULT_SEEDS,
    PROTOCOLS,
    RunConfig,
    RunResult,
    Simulation,
    SweepSpec,
    emit_csv,
    load_config,
    run_row,
    scenario_for,
    sweep,
    sweep_rows,
)
from .scenario import parse_movement, parse_traffic, write_movement, write_traffic


def _spec(args) -> SweepSpec:
    spec = SweepSpec()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            spec = load_config(fh.read(), spec)
    return spec


def _point(args, spec: SweepSpec) -> RunConfig:
    base = spec.base
    protocol = getattr(args, "protocol", None) or base.protocol
    pause = args.pause if args.pause is not None else base.mobility.pause_time
    sources = args.sources if args.sources is not None else base.traffic.source_count
    seed = args.seed if args.seed is not None else base.seed
    cfg = base.with_axes(protocol, sources, pause, seed)
    cfg.validate()
    return cfg


def _outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _describe(report: M.RunReport) -> dict:
    out = asdict(report)
    if report.avg_delay is not None:
        out["avg_delay_ms"] = report.avg_delay * 1000.0
    return out


def cmd_generate(args) -> int:
    spec = _spec(args)
    cfg = _point(args, spec)
    movement, traffic = scenario_for(cfg)
    out = _outdir(args.out)
    stem = f"p{cfg.mobility.pause_time:g}-s{cfg.traffic.source_count}-seed{cfg.seed}"
    mpath = os.path.join(out, f"movement-{stem}.txt")
    tpath = os.path.join(out, f"traffic-{stem}.txt")
    with open(mpath, "w", encoding="utf-8", newline="\n") as fh:
        write_movement(movement, fh)
    with open(tpath, "w", encoding="utf-8", newline="\n") as fh:
        write_traffic(traffic, fh)
    print(mpath)
    print(tpath)
    return 0


def cmd_run(args) -> int:
    spec = _spec(args)
    cfg = _point(args, spec)
    movement = traffic = None
    if args.movement:
        with open(args.movement, encoding="utf-8") as fh:
            movement = parse_movement(fh, args.movement)
    if args.traffic:
        with open(args.traffic, encoding="utf-8") as fh:
            traffic = parse_traffic(fh, args.traffic)
    t0 = time.perf_counter()
    sim = Simulation(cfg, movement, traffic)
    report = sim.run()
    elapsed = time.perf_counter() - t0
    if args.out:
        out = _outdir(args.out)
        stem = f"{cfg.protocol}-p{cfg.mobility.pause_time:g}-s{cfg.traffic.source_count}-seed{cfg.seed}"
        res = RunResult(
            cfg.protocol,
            cfg.traffic.source_count,
            cfg.mobility.pause_time,
            cfg.seed,
            report,
            sim.movement_hash,
            sim.traffic_hash,
        )
        with open(os.path.join(out, f"{stem}.csv"), "w", encoding="utf-8", newline="\n") as fh:
            emit_csv([run_row(res)], fh)
        if args.trace:
            with open(os.path.join(out, f"{stem}.trace"), "w", encoding="utf-8", newline="\n") as fh:
                sim.trace.write(fh)
    elif args.trace:
        print("--trace needs --out", file=sys.stderr)
    info = _describe(report)
    info["seconds"] = round(elapsed, 3)
    print(json.dumps(info, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    spec = _spec(args)
    if args.seeds is not None:
        spec = replace(spec, seeds=tuple(range(1, args.seeds + 1)))
    if args.protocol:
        spec = replace(spec, protocols=(args.protocol,))
    if args.pause is not None:
        spec = replace(spec, pause_times=(args.pause,))
    if args.sources is not None:
        spec = replace(spec, source_counts=(args.sources,))
    if args.seed is not None:
        spec = replace(spec, seeds=(args.seed,))
    spec.validate()
    out = _outdir(args.out)
    total = len(spec.protocols) * len(spec.pause_times) * len(spec.source_counts) * len(spec.seeds)
    done = [0]
    t0 = time.perf_counter()

    def progress(res):
        done[0] += 1
        if not args.quiet:
            print(
                f"[{done[0]}/{total}] {res.protocol} pause={res.pause_time:g} sources={res.sources} "
                f"seed={res.seed} pdf={res.report.pdf} ({time.perf_counter() - t0:.0f}s)",
                file=sys.stderr,
            )

    results = sweep(spec, parallel=args.parallel, progress=progress)
    path = os.path.join(out, "results.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        emit_csv(sweep_rows(results), fh)
    print(path)
    return 0


def cmd_report(args) -> int:
    with open(args.trace_file, encoding="utf-8") as fh:
        events = M.parse_trace(fh, args.trace_file)
    report = M.build_report(events, 0)
    cons = M.conservation_check(events)
    info = _describe(report)
    info["conservation_ok"] = cons.ok
    print(json.dumps(info, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="manetsim", description="Hybrid wired/ad hoc network simulator (DSDV, DSR).")
    sub = p.add_subparsers(dest="command", required=True)

    def axes(sp, protocol=True):
        if protocol:
            sp.add_argument("--protocol", choices=PROTOCOLS)
        sp.add_argument("--pause", type=float, help="pause time in seconds")
        sp.add_argument("--sources", type=int, help="number of CBR sources")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--config", help="INI run configuration file")

    g = sub.add_parser("generate", help="write movement and traffic scripts")
    axes(g, protocol=False)
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run one simulation and print its report")
    axes(r)
    r.add_argument("--movement", help="movement script to use instead of generating one")
    r.add_argument("--traffic", help="traffic script to use instead of generating one")
    r.add_argument("--out", help="directory for the CSV row (and trace)")
    r.add_argument("--trace", action="store_true", help="also write the event trace")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the experiment matrix and write results.csv")
    axes(s)
    s.add_argument("--seeds", type=int, help=f"use seeds 1..N (default {len(DEFAULT_SEEDS)})")
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--out", default=".")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="recompute metrics from a saved trace")
    rep.add_argument("trace_file")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ManetSimError as exc:  # ConfigError, ParseError, InvalidParams, UnknownNode
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
