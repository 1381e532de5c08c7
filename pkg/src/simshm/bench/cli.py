"""``bench`` command-line front end.

Three subcommands:

* ``bench run``    — measure latency distributions for one transport/workload.
* ``bench faults`` — execute a scripted fault scenario and report pass/fail.
* ``bench model``  — evaluate the analytic handoff-time model.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import TransportError
from ..region import ImageMeta
from .config import (
    DEFAULT_FRAMES,
    DEFAULT_RUNS,
    DEFAULT_WARMUP,
    BenchConfig,
    CameraWorkload,
    LidarWorkload,
)
from .faults import SCENARIOS, run_fault_scenario
from .model import handoff_model, measure_copy_bandwidth, measure_publish_cost
from .report import emit_report
from .runner import run_benchmark


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a latency benchmark")
    run.add_argument("--transport", choices=("sim", "baseline"), default="sim")
    run.add_argument("--workload", choices=("lidar", "camera"), default="lidar")
    run.add_argument("--points", type=int, default=2160, help="points per cloud (lidar)")
    run.add_argument("--width", type=int, default=640)
    run.add_argument("--height", type=int, default=480)
    run.add_argument("--channels", type=int, default=3)
    run.add_argument("--stride", type=int, default=None, help="row stride bytes (camera)")
    run.add_argument("--rate", type=float, default=None, help="frames per second")
    run.add_argument("--readers", type=int, default=1)
    run.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    run.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    run.add_argument("--warmup", type=int, default=DEFAULT_WARMUP,
                     help="frames discarded from the start of each run")
    run.add_argument("--poll-us", type=float, default=50.0,
                     help="reader poll interval, microseconds")
    run.add_argument("--priority", action="store_true",
                     help="try to elevate scheduling priority (best effort)")
    run.add_argument("--checksum", action="store_true",
                     help="enable per-frame checksum stamping/verification")
    run.add_argument("--no-validate", action="store_true",
                     help="skip payload digest validation in readers")
    run.add_argument("--clock", choices=("wall", "mono"), default="wall")
    run.add_argument("--format", choices=("json", "csv"), default=None,
                     help="report format (default: from --out suffix, else json)")
    run.add_argument("--out", default=None, help="write report to this path")

    fl = sub.add_parser("faults", help="run a fault-injection scenario")
    fl.add_argument("--scenario", required=True,
                    choices=[s.replace("_", "-") for s in SCENARIOS])
    fl.add_argument("--readers", type=int, default=None)
    fl.add_argument("--frames", type=int, default=200, help="frames (kill-reader)")
    fl.add_argument("--trials", type=int, default=10, help="trials (pause-writer)")
    fl.add_argument("--gap-ms", type=float, default=2000.0,
                    help="writer downtime before restart (kill-writer)")
    fl.add_argument("--deadline-ms", type=float, default=None,
                    help="liveness deadline (default 500 kill-writer, 150 pause-writer)")
    fl.add_argument("--poll-ms", type=float, default=50.0,
                    help="liveness poll interval (pause-writer)")
    fl.add_argument("--out", default=None, help="write the scenario report to this path")

    md = sub.add_parser("model", help="evaluate the analytic handoff model")
    md.add_argument("--frame-bytes", type=int, required=True)
    md.add_argument("--bw-writer", type=float, default=None,
                    help="writer-side copy bandwidth, bytes/s (default: measured)")
    md.add_argument("--bw-reader", type=float, default=None,
                    help="reader-side copy bandwidth, bytes/s (default: measured)")
    md.add_argument("--publish-ns", type=float, default=None,
                    help="publish cost, ns (default: measured)")
    md.add_argument("--out", default=None)
    return p


def _cmd_run(args) -> int:
    if args.workload == "lidar":
        workload = LidarWorkload(count=args.points, rate_hz=args.rate or 20.0)
    else:
        meta = ImageMeta(args.width, args.height, args.channels,
                         stride=args.stride or 0)
        workload = CameraWorkload(meta=meta, rate_fps=args.rate or 30.0)
    fmt = args.format
    if fmt is None:
        fmt = "csv" if args.out and args.out.endswith(".csv") else "json"
    cfg = BenchConfig(
        transport=args.transport,
        workload=workload,
        readers=args.readers,
        runs=args.runs,
        frames_per_run=args.frames,
        warmup_discard=args.warmup,
        poll_interval_ns=max(1, round(args.poll_us * 1000)),
        elevate_priority=args.priority,
        checksum_enabled=args.checksum,
        clock=args.clock,
        validate_payloads=not args.no_validate,
        out_path=args.out,
        out_format=fmt,
    )
    report = run_benchmark(cfg)
    text = emit_report(report, fmt, args.out)
    if args.out:
        pooled = report.pooled
        if pooled is not None:
            print(
                f"{args.transport}/{workload.label} readers={args.readers}: "
                f"mean={pooled.mean / 1e3:.1f}us p99={pooled.p99 / 1e3:.1f}us "
                f"n={pooled.n} delivery={pooled.delivery_ratio}"
            )
        print(f"report written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_faults(args) -> int:
    scenario = args.scenario.replace("-", "_")
    params = {}
    cfg = None
    if scenario == "kill_writer":
        params["gap_s"] = args.gap_ms / 1000.0
        params["deadline_ns"] = round((args.deadline_ms or 500.0) * 1e6)
        if args.readers:
            cfg = _fault_cfg(readers=args.readers)
    elif scenario == "kill_reader":
        cfg = _fault_cfg(readers=args.readers or 10, frames_per_run=args.frames)
    else:
        params["trials"] = args.trials
        params["deadline_ns"] = round((args.deadline_ms or 150.0) * 1e6)
        params["poll_ns"] = round(args.poll_ms * 1e6)
    result = run_fault_scenario(scenario, cfg, **params)
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    sys.stdout.write(text)
    return 0 if result["passed"] else 1


def _fault_cfg(**kw) -> BenchConfig:
    base = dict(
        transport="sim",
        workload=LidarWorkload(),
        readers=3,
        runs=1,
        frames_per_run=200,
        warmup_discard=0,
        checksum_enabled=True,
        validate_payloads=False,
    )
    base.update(kw)
    return BenchConfig(**base)


def _cmd_model(args) -> int:
    bw_w = args.bw_writer or measure_copy_bandwidth(max(args.frame_bytes, 4096))
    bw_r = args.bw_reader or bw_w
    t_pub = args.publish_ns if args.publish_ns is not None else measure_publish_cost()
    predicted = handoff_model(args.frame_bytes, bw_w, bw_r, t_pub)
    out = {
        "frame_bytes": args.frame_bytes,
        "bw_writer_bytes_per_s": bw_w,
        "bw_reader_bytes_per_s": bw_r,
        "publish_cost_ns": t_pub,
        "predicted_ns": predicted,
    }
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "faults":
            return _cmd_faults(args)
        return _cmd_model(args)
    except TransportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
