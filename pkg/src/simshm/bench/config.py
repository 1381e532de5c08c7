"""Benchmark configuration and sample records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from ..errors import ConfigError
from ..region import FrameKind, ImageKind, ImageMeta, PointCloudKind

DEFAULT_RUNS = 5
DEFAULT_FRAMES = 1000
DEFAULT_WARMUP = 100
DEFAULT_POLL_NS = 50_000


@dataclass(frozen=True)
class LidarWorkload:
    """Point-cloud stream: ``count`` points per frame at ``rate_hz``."""

    count: int = 2160
    rate_hz: float = 20.0

    @property
    def kind(self) -> FrameKind:
        return PointCloudKind(self.count)

    @property
    def frame_bytes(self) -> int:
        return self.count * 16

    @property
    def label(self) -> str:
        return "lidar"


@dataclass(frozen=True)
class CameraWorkload:
    """Image stream at ``rate_fps``."""

    meta: ImageMeta = field(default_factory=lambda: ImageMeta(640, 480, 3))
    rate_fps: float = 30.0

    @property
    def kind(self) -> FrameKind:
        return ImageKind(self.meta)

    @property
    def frame_bytes(self) -> int:
        return self.meta.byte_size

    @property
    def rate_hz(self) -> float:
        return self.rate_fps

    @property
    def label(self) -> str:
        return "camera"


Workload = LidarWorkload | CameraWorkload


class LatencySample(NamedTuple):
    run: int
    reader_id: int
    seq: int
    publish_ts_ns: int
    recv_ts_ns: int
    latency_ns: int


@dataclass(frozen=True)
class BenchConfig:
    transport: str = "sim"  # "sim" | "baseline"
    workload: Workload = field(default_factory=LidarWorkload)
    readers: int = 1
    runs: int = DEFAULT_RUNS
    frames_per_run: int = DEFAULT_FRAMES
    warmup_discard: int = DEFAULT_WARMUP
    poll_interval_ns: int = DEFAULT_POLL_NS  # 0 = busy-poll (no sleep between reads)
    elevate_priority: bool = False
    checksum_enabled: bool = False
    clock: str = "wall"
    validate_payloads: bool = True
    out_path: str | None = None
    out_format: str = "json"

    def __post_init__(self):
        if self.transport not in ("sim", "baseline"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.readers < 1:
            raise ConfigError("readers must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.frames_per_run <= self.warmup_discard:
            raise ConfigError("frames_per_run must exceed warmup_discard")
        if self.poll_interval_ns < 0:
            raise ConfigError("poll_interval_ns must be >= 0 (0 busy-polls)")
        if self.clock not in ("wall", "mono"):
            raise ConfigError(f"unknown clock {self.clock!r}")
        if self.out_format not in ("json", "csv"):
            raise ConfigError(f"unknown output format {self.out_format!r}")

    @property
    def period_ns(self) -> int:
        return round(1e9 / self.workload.rate_hz)

    def echo(self) -> dict:
        w = self.workload
        if isinstance(w, LidarWorkload):
            wl = {"type": "lidar", "points": w.count, "rate_hz": w.rate_hz}
        else:
            m = w.meta
            wl = {
                "type": "camera",
                "width": m.width,
                "height": m.height,
                "channels": m.channels,
                "stride": m.stride,
                "depth": m.depth,
                "rate_fps": w.rate_fps,
            }
        return {
            "transport": self.transport,
            "workload": wl,
            "readers": self.readers,
            "runs": self.runs,
            "frames_per_run": self.frames_per_run,
            "warmup_discard": self.warmup_discard,
            "poll_interval_ns": self.poll_interval_ns,
            "elevate_priority": self.elevate_priority,
            "checksum_enabled": self.checksum_enabled,
            "clock": self.clock,
        }
