"""Benchmark harness: workloads, process topologies, stats, fault drills."""

from .config import BenchConfig, CameraWorkload, LidarWorkload, LatencySample
from .stats import LatencyStats, compute_stats, mean_ci95
from .model import handoff_model, measure_copy_bandwidth, measure_publish_cost
from .report import BenchReport, emit_report
from .runner import run_benchmark
from .faults import SCENARIOS, run_fault_scenario

__all__ = [
    "BenchConfig",
    "BenchReport",
    "CameraWorkload",
    "LidarWorkload",
    "LatencySample",
    "LatencyStats",
    "SCENARIOS",
    "compute_stats",
    "emit_report",
    "mean_ci95",
    "handoff_model",
    "measure_copy_bandwidth",
    "measure_publish_cost",
    "run_benchmark",
    "run_fault_scenario",
]
