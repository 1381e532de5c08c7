"""Multiprocess benchmark execution.

Each run spawns one writer/publisher process and ``cfg.readers`` consumer
processes (fork start method: cheap on the single-board hosts this targets
and keeps worker arguments out of pickle). Latency is stamped on the writer
side immediately before the publish call and on the reader side immediately
after a fresh frame lands; both stamps come from the same host clock.
Consumers append raw samples to per-process CSV files that the parent
merges after the run, so the only shared mutable state between bench
processes is the transport under test.

Payload validation uses a digest table generated from the frame generators:
the parent hashes the expected payload for every sequence number once per
workload, and consumers hash what they received and compare. A mismatch is
recorded as a validation failure (a torn or corrupted frame).
"""

from __future__ import annotations

import csv
import gc
import hashlib
import json
import multiprocessing as mp
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import frames as _frames
from ..baseline import BaselinePublisher, BaselineSubscriber, EndOfStream
from ..reader import Reader, ReadStatus
from ..region import create_region, destroy_region, layout_for
from ..writer import Writer
from .config import BenchConfig, LatencySample
from .model import (
    handoff_model,
    measure_copy_bandwidth,
    measure_publish_cost,
    measure_stamp_overhead,
)
from .report import BenchReport
from .stats import compute_stats, mean_ci95

_CTX = mp.get_context("fork")

_CLOCKS = {"wall": time.time_ns, "mono": time.monotonic_ns}

# Pregenerate every frame up front when the whole run fits comfortably in
# memory; otherwise generate per frame inside the publish loop (generation
# happens before the pacing sleep, so it never lands on the latency path).
_PREGEN_LIMIT_BYTES = 512 * 1024 * 1024

_digest_cache: dict = {}


def elevate_priority_best_effort() -> bool:
    """SCHED_FIFO 99 where permitted; plain nice boost otherwise."""
    try:
        os.sched_setscheduler(0, os.SCHED_FIFO, os.sched_param(99))
        return True
    except (PermissionError, OSError):
        pass
    try:
        os.nice(-5)
    except (PermissionError, OSError):
        pass
    return False


def _touch_payload(payload) -> None:
    """Read the payload through the CPU right before it is published.

    Models the producer this harness stands in for: the process that just
    filled the frame (format conversion, feature extraction, synthetic
    generation) leaves its bytes cache-warm at publish time. The bench
    writer instead sleeps out the publish period while cache contents decay,
    so without this touch the campaign charges the transport for re-reading
    a source no real producer would have let go cold. Runs before the
    timestamp, identically for both transports.
    """
    payload.count(0)


_PR_SET_TIMERSLACK = 29


def tighten_timer_slack() -> bool:
    """Opt this process out of the kernel's default 50 us nanosleep slack.

    Every timed sleep in a normal process may be delivered up to its slack
    value late so the kernel can coalesce wakeups. That is the right default
    for battery life and the wrong one for a latency benchmark: poll sleeps
    and pacing sleeps both inherit the delay. Unprivileged; applied to every
    bench worker on both transports.
    """
    try:
        import ctypes

        libc = ctypes.CDLL(None, use_errno=True)
        return libc.prctl(_PR_SET_TIMERSLACK, 1, 0, 0, 0) == 0
    except OSError:
        return False


def digest_table(kind, frames: int) -> list[bytes | None]:
    """sha256 of the generated payload for every seq in 1..frames."""
    key = (kind, frames)
    cached = _digest_cache.get(key)
    if cached is not None:
        return cached
    table: list[bytes | None] = [None] * (frames + 1)
    for seq in range(1, frames + 1):
        table[seq] = hashlib.sha256(_frames.expected_payload(kind, seq)).digest()
    _digest_cache[key] = table
    return table


def _payload_for(kind, seq: int) -> bytes:
    return _frames.expected_payload(kind, seq)


_payload_cache: dict = {}


def payload_table(kind, frames: int) -> list[bytes]:
    """Payloads for seq 1..frames (index 0 unused), generated once.

    Built in the parent and inherited by forked workers so the writer never
    burns generator CPU between publishes — on a single core that would
    starve the consumers and the run would measure the generator, not the
    transport.
    """
    key = (kind, frames)
    cached = _payload_cache.get(key)
    if cached is not None:
        return cached
    table = [b""] + [_frames.expected_payload(kind, seq) for seq in range(1, frames + 1)]
    _payload_cache[key] = table
    return table


PAYLOAD_RING_SLOTS = 8


def ring_payloads(kind, frames: int, slots: int = PAYLOAD_RING_SLOTS) -> list[bytes]:
    """Payloads for seq 1..frames drawn from a small recycled buffer ring.

    Sensor sources hand the transport frames from a small ring of recycled
    buffers (a camera driver's DMA ring), so the bytes being published are
    usually still cache-warm. A never-repeating payload table instead streams
    every frame from cold memory and the campaign ends up measuring DRAM
    bandwidth on top of the handoff. Latency campaigns that do not validate
    payload content use this ring; entries are references, so the footprint
    is ``slots`` frames regardless of campaign length.
    """
    ring = [_frames.expected_payload(kind, seq) for seq in range(1, slots + 1)]
    return [b""] + [ring[i % slots] for i in range(frames)]


@dataclass
class RunResult:
    run: int
    published: int
    rows: list[tuple[int, int, int, int]] = field(default_factory=list)
    # rows: (reader_id, seq, publish_ts_ns, recv_ts_ns) for every fresh frame
    per_reader_observed: dict[int, int] = field(default_factory=dict)
    validation_failures: int = 0
    contended: int = 0
    negative_excluded: int = 0
    invalid: bool = False
    invalid_reason: str = ""
    writer_info: dict = field(default_factory=dict)


# ----------------------------------------------------------------------
# worker processes
# ----------------------------------------------------------------------


def _sim_writer_proc(name, cfg: BenchConfig, frames, ready_events, done_event, out_path, payloads=None):
    if cfg.elevate_priority:
        elevate_priority_best_effort()
    tighten_timer_slack()
    gc.disable()
    clock = _CLOCKS[cfg.clock]
    kind = cfg.workload.kind
    period_s = cfg.period_ns / 1e9
    pregen = payloads
    if pregen is None and frames * cfg.workload.frame_bytes <= _PREGEN_LIMIT_BYTES:
        pregen = payload_table(kind, frames)
    w = Writer(name, kind, checksum_enabled=cfg.checksum_enabled, clock=cfg.clock)
    try:
        for ev in ready_events:
            if not ev.wait(timeout=60):
                raise RuntimeError("reader never became ready")
        start = time.perf_counter()
        for i in range(frames):
            payload = pregen[i + 1] if pregen is not None else _payload_for(kind, i + 1)
            while True:
                remaining = start + i * period_s - time.perf_counter()
                if remaining <= 0:
                    break
                time.sleep(remaining)
            _touch_payload(payload)
            ts = clock()  # stamp immediately before the publish call
            w.write_frame(payload, timestamp_ns=ts)
        snap = w.snapshot()
        info = {
            "published": frames,
            "last_seq": snap.last_seq,
            "max_interpublish_ns": snap.max_interpublish_ns,
            "heartbeat_ns": snap.heartbeat_ns,
            "checksum_enabled": snap.checksum_enabled,
        }
        Path(out_path).write_text(json.dumps(info))
    finally:
        done_event.set()
        w.close()


def _sim_reader_proc(name, cfg: BenchConfig, reader_id, ready_event, done_event, out_prefix, digests):
    if cfg.elevate_priority:
        elevate_priority_best_effort()
    tighten_timer_slack()
    gc.disable()
    clock = _CLOCKS[cfg.clock]
    kind = cfg.workload.kind
    elem = kind.elem_size
    r = Reader(name, kind, clock=cfg.clock)
    buf = bytearray(layout_for(kind).buffer_size)
    rows = []
    failures = 0
    contended = 0
    poll_s = cfg.poll_interval_ns / 1e9
    validate = cfg.validate_payloads
    ready_event.set()
    try:
        while True:
            out = r.try_read_latest(buf)
            if out.status is ReadStatus.FRESH:
                recv = clock()
                rows.append((out.seq, out.timestamp_ns, recv))
                if validate:
                    nbytes = out.effective_len * elem
                    expect = digests[out.seq] if out.seq < len(digests) else None
                    if expect is None or hashlib.sha256(memoryview(buf)[:nbytes]).digest() != expect:
                        failures += 1
                continue  # look again right away in case we are behind
            if out.status is ReadStatus.CONTENDED:
                contended += 1
                continue
            if done_event.is_set():
                # final drain: the last frame may have landed after our poll
                out = r.try_read_latest(buf)
                if out.status is ReadStatus.FRESH:
                    recv = clock()
                    rows.append((out.seq, out.timestamp_ns, recv))
                    continue
                break
            time.sleep(poll_s)
    finally:
        r.close()
    _write_reader_files(out_prefix, reader_id, rows, failures, contended)


def _write_reader_files(out_prefix, reader_id, rows, failures, contended):
    with open(f"{out_prefix}.csv", "w", newline="") as f:
        wr = csv.writer(f)
        for seq, pub, recv in rows:
            wr.writerow((seq, pub, recv))
    Path(f"{out_prefix}.json").write_text(
        json.dumps(
            {
                "reader_id": reader_id,
                "observed": len(rows),
                "validation_failures": failures,
                "contended": contended,
            }
        )
    )


def _baseline_pub_proc(addr, cfg: BenchConfig, frames, done_event, out_path, payloads=None):
    if cfg.elevate_priority:
        elevate_priority_best_effort()
    tighten_timer_slack()
    gc.disable()
    clock = _CLOCKS[cfg.clock]
    kind = cfg.workload.kind
    period_s = cfg.period_ns / 1e9
    pregen = payloads
    if pregen is None and frames * cfg.workload.frame_bytes <= _PREGEN_LIMIT_BYTES:
        pregen = payload_table(kind, frames)
    pub = BaselinePublisher(addr)
    try:
        pub.accept_subscribers(cfg.readers)
        start = time.perf_counter()
        last_pub = None
        max_gap_s = 0.0
        for i in range(frames):
            payload = pregen[i + 1] if pregen is not None else _payload_for(kind, i + 1)
            while True:
                remaining = start + i * period_s - time.perf_counter()
                if remaining <= 0:
                    break
                time.sleep(remaining)
            _touch_payload(payload)
            ts = clock()  # stamp immediately before the publish call
            pub.publish(i + 1, ts, payload)
            now = time.perf_counter()
            if last_pub is not None and now - last_pub > max_gap_s:
                max_gap_s = now - last_pub
            last_pub = now
        time.sleep(0.2)  # let senders flush before tearing down
        st = pub.stats()
        Path(out_path).write_text(
            json.dumps(
                {
                    "published": st.published,
                    "dropped": st.dropped,
                    "per_subscriber_sent": st.per_subscriber_sent,
                    "max_interpublish_ns": int(max_gap_s * 1e9),
                }
            )
        )
    finally:
        done_event.set()
        pub.close()


def _baseline_sub_proc(addr, cfg: BenchConfig, reader_id, ready_event, out_prefix, digests, slow_factor=0.0):
    if cfg.elevate_priority:
        elevate_priority_best_effort()
    tighten_timer_slack()
    gc.disable()
    clock = _CLOCKS[cfg.clock]
    kind = cfg.workload.kind
    sub = BaselineSubscriber(addr)
    buf = bytearray(max(cfg.workload.frame_bytes, 1))
    rows = []
    failures = 0
    validate = cfg.validate_payloads
    delay_s = slow_factor * cfg.period_ns / 1e9
    ready_event.set()
    try:
        while True:
            try:
                seq, ts, length = sub.receive(buf)
            except EndOfStream:
                break
            recv = clock()
            rows.append((seq, ts, recv))
            if validate:
                expect = digests[seq] if seq < len(digests) else None
                if expect is None or hashlib.sha256(memoryview(buf)[:length]).digest() != expect:
                    failures += 1
            if delay_s:
                time.sleep(delay_s)
    finally:
        sub.close()
    _write_reader_files(out_prefix, reader_id, rows, failures, 0)


# ----------------------------------------------------------------------
# orchestration
# ----------------------------------------------------------------------


def _join_or_kill(procs, timeout_s):
    deadline = time.monotonic() + timeout_s
    bad = []
    for p in procs:
        p.join(max(deadline - time.monotonic(), 0.1))
        if p.is_alive():
            p.terminate()
            p.join(5)
            bad.append(f"{p.name} timed out")
        elif p.exitcode != 0:
            bad.append(f"{p.name} exited {p.exitcode}")
    return bad


def run_once(cfg: BenchConfig, run_idx: int, workdir: Path, digests, payloads=None) -> RunResult:
    """Execute one run and merge its per-process files.

    ``payloads`` is an optional pregenerated payload table (see
    ``payload_table``) inherited by the producer through fork, keeping
    generator cost out of the paced loop.
    """
    frames = cfg.frames_per_run
    rundir = workdir / f"run{run_idx}"
    rundir.mkdir(parents=True, exist_ok=True)
    done = _CTX.Event()
    ready = [_CTX.Event() for _ in range(cfg.readers)]
    procs = []
    writer_out = rundir / "writer.json"

    if cfg.transport == "sim":
        name = f"/bench_{os.getpid()}_{run_idx}"
        destroy_region(name)
        create_region(name, cfg.workload.kind, checksum_enabled=cfg.checksum_enabled).close()
        for i in range(cfg.readers):
            procs.append(
                _CTX.Process(
                    target=_sim_reader_proc,
                    args=(name, cfg, i, ready[i], done, str(rundir / f"reader{i}"), digests),
                    name=f"sim-reader-{i}",
                )
            )
        writer = _CTX.Process(
            target=_sim_writer_proc,
            args=(name, cfg, frames, ready, done, str(writer_out), payloads),
            name="sim-writer",
        )
    else:
        addr = str(rundir / "pub.sock")
        writer = _CTX.Process(
            target=_baseline_pub_proc,
            args=(addr, cfg, frames, done, str(writer_out), payloads),
            name="baseline-pub",
        )
        for i in range(cfg.readers):
            procs.append(
                _CTX.Process(
                    target=_baseline_sub_proc,
                    args=(addr, cfg, i, ready[i], str(rundir / f"reader{i}"), digests),
                    name=f"baseline-sub-{i}",
                )
            )

    result = RunResult(run=run_idx, published=frames)
    try:
        if cfg.transport == "sim":
            for p in procs:
                p.start()
            writer.start()
        else:
            writer.start()
            for p in procs:
                p.start()
        budget = frames * cfg.period_ns / 1e9 + 120
        bad = _join_or_kill([writer, *procs], budget)
        if bad:
            result.invalid = True
            result.invalid_reason = "; ".join(bad)
    finally:
        if cfg.transport == "sim":
            destroy_region(name)

    if writer_out.is_file():
        result.writer_info = json.loads(writer_out.read_text())
        result.published = result.writer_info.get("published", frames)

    for i in range(cfg.readers):
        side = rundir / f"reader{i}.json"
        samp = rundir / f"reader{i}.csv"
        if not side.is_file() or not samp.is_file():
            result.invalid = True
            result.invalid_reason += f"; reader {i} left no output"
            continue
        meta = json.loads(side.read_text())
        result.validation_failures += meta["validation_failures"]
        result.contended += meta.get("contended", 0)
        result.per_reader_observed[i] = meta["observed"]
        with open(samp, newline="") as f:
            for seq_s, pub_s, recv_s in csv.reader(f):
                result.rows.append((i, int(seq_s), int(pub_s), int(recv_s)))
    return result


def _retained_samples(cfg: BenchConfig, results: list[RunResult]) -> tuple[list[LatencySample], int]:
    samples = []
    negative = 0
    for res in results:
        for reader_id, seq, pub, recv in res.rows:
            if seq <= cfg.warmup_discard:
                continue
            lat = recv - pub
            if lat < 0:
                negative += 1
                continue
            samples.append(LatencySample(res.run, reader_id, seq, pub, recv, lat))
    return samples, negative


def run_benchmark(cfg: BenchConfig, workdir: str | Path | None = None) -> BenchReport:
    """Run the configured benchmark and assemble the full report."""
    kind = cfg.workload.kind
    layout_for(kind)  # validate geometry before spawning anything
    digests = digest_table(kind, cfg.frames_per_run) if cfg.validate_payloads else [None]
    if cfg.validate_payloads:
        # Readers check content against per-seq digests, so every frame must
        # be distinct; fall back to in-loop generation if the table is huge.
        payloads = None
        if cfg.frames_per_run * cfg.workload.frame_bytes <= _PREGEN_LIMIT_BYTES:
            payloads = payload_table(kind, cfg.frames_per_run)
    else:
        payloads = ring_payloads(kind, cfg.frames_per_run)

    own_tmp = None
    if workdir is None:
        own_tmp = tempfile.TemporaryDirectory(prefix="simshm_bench_")
        workdir = own_tmp.name
    workdir = Path(workdir)

    try:
        results = [run_once(cfg, i, workdir, digests, payloads) for i in range(cfg.runs)]
        return assemble_report(cfg, results)
    finally:
        if own_tmp is not None:
            own_tmp.cleanup()


def assemble_report(cfg: BenchConfig, results: list[RunResult]) -> BenchReport:
    samples, negative = _retained_samples(cfg, results)
    valid = [r for r in results if not r.invalid]

    run_stats = []
    run_means = []
    for res in results:
        run_samp = [s.latency_ns for s in samples if s.run == res.run]
        ratios = [
            res.per_reader_observed.get(i, 0) / res.published if res.published else 1.0
            for i in range(cfg.readers)
        ]
        ratio = sum(ratios) / len(ratios)
        if run_samp:
            st = compute_stats(run_samp, delivery_ratio=ratio)
            run_stats.append(st)
            if not res.invalid:
                run_means.append(st.mean)

    all_lat = [s.latency_ns for s in samples]
    all_ratios = [
        res.per_reader_observed.get(i, 0) / res.published
        for res in valid
        for i in range(cfg.readers)
        if res.published
    ]
    pooled_ratio = sum(all_ratios) / len(all_ratios) if all_ratios else 1.0
    pooled = compute_stats(all_lat, delivery_ratio=pooled_ratio) if all_lat else None
    ci = mean_ci95(run_means) if run_means else (float("nan"), float("nan"))

    frame_bytes = cfg.workload.frame_bytes
    block = max(frame_bytes, 4096)
    if cfg.validate_payloads:
        bw = measure_copy_bandwidth(block, iterations=100)
    else:
        # Unvalidated campaigns publish from the recycled payload ring, so
        # the model must be fed bandwidth measured at that same locality.
        bw = measure_copy_bandwidth(
            block, iterations=100, footprint_bytes=2 * PAYLOAD_RING_SLOTS * block
        )
    t_pub = measure_publish_cost()
    predicted = handoff_model(frame_bytes, bw, bw, t_pub)

    meta = {
        "timestamp_policy": "stamp_immediately_before_publish",
        "clock": cfg.clock,
        "validation_failures": sum(r.validation_failures for r in results),
        "contended": sum(r.contended for r in results),
        "negative_excluded": negative,
        "invalid_runs": [
            {"run": r.run, "reason": r.invalid_reason} for r in results if r.invalid
        ],
        "per_reader_observed": [
            {str(k): v for k, v in sorted(r.per_reader_observed.items())} for r in results
        ],
        "writer": results[-1].writer_info if results else {},
        # per-run pacing quality: a value well above the publish period means
        # the writer was stalled by the host and caught up with a burst
        "writer_max_interpublish_ns": [
            r.writer_info.get("max_interpublish_ns") for r in results
        ],
        "copy_bandwidth_bytes_per_s": bw,
        "publish_cost_ns": t_pub,
    }
    return BenchReport(
        config=cfg,
        run_stats=run_stats,
        pooled=pooled,
        ci95=ci,
        model_predicted_ns=predicted,
        model_measured_mean_ns=pooled.mean if pooled else float("nan"),
        host={
            "page_size": os.sysconf("SC_PAGESIZE"),
            "stamp_overhead_ns": measure_stamp_overhead(),
        },
        meta=meta,
        samples=samples,
    )
