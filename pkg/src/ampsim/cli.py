"""Command-line harness: run scenarios, check traces, sweep seed ranges.

Verbs:
  run    --config FILE [--seed N] [--out DIR]          write trace + metrics + block logs
  check  TRACE [--format text|machine]                 evaluate properties over a trace
  sweep  --config GLOB --seeds A-B [--jobs N] [--out DIR] [--format ...]

Exit codes: 0 ok, 1 property failure, 2 invalid config, 3 incomplete trace,
4 malformed trace file. AMPSIM_OUT sets the default output directory.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .checks import check_trace
from .metrics import measure
from .scenario import load_config, render_config
from .simnet import ConfigError, SimConfig, Simulation
from .trace import Trace, TraceParseError, dumps, load_trace

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INCOMPLETE = 3
EXIT_PARSE = 4


def _default_out() -> str:
    return os.environ.get("AMPSIM_OUT", "out")


def run_one(cfg: SimConfig) -> Trace:
    return Simulation(cfg, render_config(cfg)).run()


def _write_outputs(trace: Trace, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trace.jsonl"), "wb") as fh:
        fh.write(trace.to_bytes())
    blocks: dict[str, list[dict]] = {}
    for e in trace.iter("finalize"):
        blocks.setdefault(e["node"], []).append(
            {"height": e["h"], "block": e["block"], "txs": e["txs"]}
        )
    for i in range(trace.header["n"]):
        node = f"v{i}"
        path = os.path.join(out_dir, f"blocks_{node}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for record in blocks.get(node, []):
                fh.write(dumps(record) + "\n")
    if trace.complete:
        report = measure(trace)
        with open(os.path.join(out_dir, "metrics.jsonl"), "w", encoding="utf-8") as fh:
            for row in report["heights"]:
                fh.write(dumps(row) + "\n")
            fh.write(dumps({"totals": report["totals"]}) + "\n")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
            cfg.validate()
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    trace = run_one(cfg)
    out_dir = args.out or _default_out()
    _write_outputs(trace, out_dir)
    end = trace.events[-1]
    if not trace.complete:
        print(f"INCOMPLETE: {end['reason']} (trace written to {out_dir})", file=sys.stderr)
        return EXIT_INCOMPLETE
    print(f"complete: {cfg.max_heights} heights, {len(trace.events)} events -> {out_dir}")
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        trace = load_trace(args.trace)
    except (TraceParseError, OSError) as e:
        print(f"trace parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    report = check_trace(trace)
    if args.format == "machine":
        print(dumps(report.to_json()))
    else:
        for r in report.results:
            line = f"{r.name}: {r.status}"
            if r.counterexample is not None:
                line += "  " + dumps(r.counterexample)
            print(line)
    return EXIT_OK if report.ok else EXIT_FAIL


def _sweep_one(task: tuple[str, int]) -> dict:
    path, seed = task
    cfg = replace(load_config(path), seed=seed)
    trace = run_one(cfg)
    report = check_trace(trace)
    row = {
        "config": path,
        "seed": seed,
        "complete": trace.complete,
        "pass": report.ok,
        "failed": [r.name for r in report.failed()],
    }
    if trace.complete:
        m = measure(trace)
        steps = [s for s in m["payload_steps"].values() if s is not None]
        row["msgs_per_height"] = m["totals"]["msgs_per_height"]
        row["bytes_per_height"] = m["totals"]["bytes_per_height"]
        row["steps_to_finalize"] = steps
    return row


def cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.config))
    if not paths:
        print(f"no configs match {args.config!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        seeds = _parse_seeds(args.seeds)
        for path in paths:
            load_config(path)
    except (ConfigError, OSError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    tasks = [(path, seed) for path in paths for seed in seeds]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    rows.sort(key=lambda r: (r["config"], r["seed"]))

    failing = [(r["config"], r["seed"]) for r in rows if not r["pass"]]
    summary = _summarize(rows, failing)
    out_dir = args.out or _default_out()
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
        fh.write(dumps(summary) + "\n")
    if args.format == "machine":
        print(dumps(summary))
    else:
        for cfg_path, agg in summary["configs"].items():
            print(
                f"{cfg_path}: {agg['pass']}/{agg['runs']} pass"
                + (f", median steps {agg['median_steps']}" if agg["median_steps"] is not None else "")
                + f", msgs/height {agg['msgs_per_height']:.1f}"
            )
        if failing:
            print("FAILING:", ", ".join(f"{c}#{s}" for c, s in failing))
    return EXIT_OK if not failing else EXIT_FAIL


def _summarize(rows: list[dict], failing) -> dict:
    configs: dict[str, dict] = {}
    for r in rows:
        agg = configs.setdefault(
            r["config"],
            {"runs": 0, "pass": 0, "steps": [], "msgs": [], "bytes": []},
        )
        agg["runs"] += 1
        agg["pass"] += 1 if r["pass"] else 0
        agg["steps"].extend(r.get("steps_to_finalize", []))
        if "msgs_per_height" in r:
            agg["msgs"].append(r["msgs_per_height"])
            agg["bytes"].append(r["bytes_per_height"])
    out = {}
    for path, agg in sorted(configs.items()):
        out[path] = {
            "runs": agg["runs"],
            "pass": agg["pass"],
            "median_steps": statistics.median(agg["steps"]) if agg["steps"] else None,
            "msgs_per_height": statistics.fmean(agg["msgs"]) if agg["msgs"] else 0.0,
            "bytes_per_height": statistics.fmean(agg["bytes"]) if agg["bytes"] else 0.0,
        }
    return {"configs": out, "failing": [list(x) for x in failing], "runs": len(rows)}


def _parse_seeds(text: str) -> list[int]:
    if "-" in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in text:
        return [int(x) for x in text.split(",")]
    return [int(text)]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ampsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run one seeded simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="evaluate properties over a trace")
    p_check.add_argument("trace")
    p_check.add_argument("--format", choices=["text", "machine"], default="text")
    p_check.set_defaults(func=cmd_check)

    p_sweep = sub.add_parser("sweep", help="run+check a config glob across seeds")
    p_sweep.add_argument("--config", required=True, help="config path or glob")
    p_sweep.add_argument("--seeds", required=True, help="range A-B, list A,B,C, or single seed")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--format", choices=["text", "machine"], default="text")
    p_sweep.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
