"""Report assembly and emission.

The JSON layout is a stable contract: ``config`` echoes the benchmark
configuration, ``runs`` carries per-run summary stats, ``pooled`` the
distribution over every retained sample, ``ci95_mean`` a confidence
interval over per-run means, ``model`` the analytic handoff prediction
next to the measured mean, and ``host`` the page size and timestamp
overhead needed to interpret the numbers. ``meta`` holds diagnostics that
may grow over time; everything else keeps its keys fixed.

CSV output is one row per retained sample:
``run,reader_id,seq,publish_ts_ns,recv_ts_ns,latency_ns``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from ..errors import ConfigError
from .config import BenchConfig, LatencySample
from .stats import LatencyStats

CSV_HEADER = ("run", "reader_id", "seq", "publish_ts_ns", "recv_ts_ns", "latency_ns")


def _stats_dict(st: LatencyStats | None) -> dict:
    if st is None:
        return {
            "min": None, "mean": None, "p95": None, "p99": None,
            "max": None, "std": None, "n": 0, "delivery_ratio": None,
        }
    return {
        "min": st.min,
        "mean": st.mean,
        "p95": st.p95,
        "p99": st.p99,
        "max": st.max,
        "std": st.std,
        "n": st.n,
        "delivery_ratio": st.delivery_ratio,
    }


@dataclass
class BenchReport:
    config: BenchConfig
    run_stats: list[LatencyStats]
    pooled: LatencyStats | None
    ci95: tuple[float, float]
    model_predicted_ns: float
    model_measured_mean_ns: float
    host: dict
    meta: dict = field(default_factory=dict)
    samples: list[LatencySample] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.echo(),
            "runs": [{"stats": _stats_dict(st)} for st in self.run_stats],
            "pooled": _stats_dict(self.pooled),
            "ci95_mean": {"lo": self.ci95[0], "hi": self.ci95[1]},
            "model": {
                "predicted_ns": self.model_predicted_ns,
                "measured_mean_ns": self.model_measured_mean_ns,
            },
            "host": {
                "page_size": self.host["page_size"],
                "stamp_overhead_ns": self.host["stamp_overhead_ns"],
            },
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(CSV_HEADER)
        for s in self.samples:
            w.writerow((s.run, s.reader_id, s.seq, s.publish_ts_ns, s.recv_ts_ns, s.latency_ns))
        return out.getvalue()


def emit_report(report: BenchReport, fmt: str, path: str | None = None) -> str:
    """Render ``report`` as ``json`` or ``csv``; write to ``path`` if given."""
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        text = report.to_csv()
    else:
        raise ConfigError(f"unknown report format {fmt!r} (expected 'json' or 'csv')")
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text
