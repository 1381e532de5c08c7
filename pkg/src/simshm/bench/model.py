"""Steady-state handoff model and the host measurements that feed it.

The model for moving one frame of B bytes between processes is the writer's
copy in, a fixed publication cost, and the reader's copy out:
B/BW_writer + T_publish + B/BW_reader. There is no term for discovery,
allocation, or (de)serialization; that absence is the point.
"""

from __future__ import annotations

import os
import statistics
import time

from ..errors import ConfigError


def handoff_model(frame_bytes: int, bw_writer: float, bw_reader: float, t_publish_ns: float) -> float:
    """Predicted handoff time in ns for one frame of ``frame_bytes``."""
    if bw_writer <= 0 or bw_reader <= 0:
        raise ConfigError("bandwidths must be positive")
    if frame_bytes < 0:
        raise ConfigError("frame_bytes must be >= 0")
    return frame_bytes / bw_writer * 1e9 + t_publish_ns + frame_bytes / bw_reader * 1e9


def measure_wake_overshoot(sleep_ns: int = 500_000, samples: int = 120) -> int:
    """p95 sleep-wake overshoot in ns: how late a timed wake arrives right now.

    A polling reader's latency floor includes how promptly the scheduler
    returns from a short sleep. On this class of host that promptness is not
    constant: quiet periods overshoot by tens of microseconds, busy periods
    (often caused by neighbours of the virtual machine, not by this process)
    by a hundred times more, in waves lasting minutes. The probe touches
    nothing but the clock and the scheduler, so it characterises the host
    independently of any transport under test.
    """
    if sleep_ns <= 0 or samples <= 0:
        raise ConfigError("sleep_ns and samples must be positive")
    sleep_s = sleep_ns / 1e9
    lat = []
    for _ in range(samples):
        t0 = time.perf_counter_ns()
        time.sleep(sleep_s)
        lat.append(time.perf_counter_ns() - t0 - sleep_ns)
    lat.sort()
    return lat[(95 * samples + 99) // 100 - 1]


_BW_RING_FOOTPRINT = 128 * 1024 * 1024


def measure_copy_bandwidth(
    block_bytes: int, iterations: int = 100, footprint_bytes: int = _BW_RING_FOOTPRINT
) -> float:
    """Bulk-copy throughput in bytes/s at a chosen locality; median of runs.

    The probe cycles through a ring of src/dst buffer pairs totalling
    ``footprint_bytes``. Locality is the whole question when predicting a
    handoff: a source recycled from a small buffer ring (how sensor pipelines
    feed a transport) is still cache-warm and copies several times faster
    than a source streamed from cold memory. Size the footprint like the
    workload being modelled — small to match a recycled ring, or the default
    (well past any plausible cache) for a worst-case cold stream.
    """
    page = os.sysconf("SC_PAGESIZE") if hasattr(os, "sysconf") else 4096
    if block_bytes < page:
        raise ConfigError(f"block must be at least one page ({page} bytes)")
    pairs = max(2, footprint_bytes // (2 * block_bytes))
    template = os.urandom(block_bytes)
    srcs = []
    dsts = []
    for _ in range(pairs):
        s = bytearray(block_bytes)
        s[:] = template  # force real (non-shared-zero) pages
        srcs.append(memoryview(s))
        dsts.append(memoryview(bytearray(block_bytes)))
    for i in range(pairs):  # fault in destinations, untimed
        dsts[i][:] = srcs[i]
    rates = []
    for i in range(iterations):
        ms, md = srcs[i % pairs], dsts[i % pairs]
        t0 = time.perf_counter_ns()
        md[:] = ms
        dt = time.perf_counter_ns() - t0
        rates.append(block_bytes / (dt / 1e9) if dt else float("inf"))
    return statistics.median(rates)


def measure_publish_cost(iterations: int = 200) -> float:
    """Median cost in ns of a zero-byte publish (header stores only)."""
    from ..region import PointCloudKind, destroy_region
    from ..writer import Writer

    name = f"/simshm_pubcost_{os.getpid()}"
    destroy_region(name)
    costs = []
    try:
        with Writer(name, PointCloudKind(16)) as w:
            empty = b""
            for _ in range(20):
                w.write_frame(empty, 0)
            for _ in range(iterations):
                t0 = time.perf_counter_ns()
                w.write_frame(empty, 0)
                costs.append(time.perf_counter_ns() - t0)
    finally:
        destroy_region(name)
    return statistics.median(costs)


def measure_stamp_overhead(iterations: int = 2000) -> int:
    """Median cost in ns of one wall-clock stamp."""
    deltas = []
    for _ in range(iterations):
        t0 = time.time_ns()
        t1 = time.time_ns()
        deltas.append(t1 - t0)
    return int(statistics.median(deltas))
