"""Consume side: seqlock-validated copy-out of the latest published frame.

Readers only ever load from the region; they write no shared state, so any
number of them can poll one region without affecting the writer or each
other. A read either copies a complete frame, reports that nothing new is
published, or reports that the writer lapped it mid-copy.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

from . import region as _region
from .errors import IntegrityError
from .integrity import checksum
from .region import (
    FrameKind,
    OFF_CHECKSUM,
    OFF_FRONT_IDX,
    OFF_HEARTBEAT,
    OFF_PUBLISHED_LEN,
    OFF_SEQ,
    OFF_TIMESTAMP,
    OFF_VERSION,
    RegionHandle,
)

_CLOCKS = {"wall": time.time_ns, "mono": time.monotonic_ns}

DEFAULT_RETRY_LIMIT = 3


class ReadStatus(enum.Enum):
    FRESH = "fresh"
    NO_NEW_DATA = "no_new_data"
    CONTENDED = "contended"
    WRITER_STALE = "writer_stale"


@dataclass(frozen=True)
class ReadOutcome:
    status: ReadStatus
    seq: int = 0
    timestamp_ns: int = 0
    effective_len: int = 0
    last_heartbeat_ns: int = 0


class LivenessStatus(enum.Enum):
    ALIVE = "alive"
    WRITER_STALE = "writer_stale"


_NO_NEW = ReadOutcome(ReadStatus.NO_NEW_DATA)
_CONTENDED = ReadOutcome(ReadStatus.CONTENDED)


class Reader:
    """One consumer handle; not shareable across threads concurrently."""

    def __init__(
        self,
        name: str,
        kind: FrameKind,
        deadline_ns: int = 500_000_000,
        *,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
        clock: str = "wall",
    ):
        if retry_limit < 1:
            raise ValueError("retry_limit must be >= 1")
        self.region: RegionHandle = _region.attach_region(name, "ro", expected_kind=kind)
        self.kind = kind
        self.last_seq = 0  # so an already-published frame is delivered first
        self.deadline_ns = deadline_ns
        self.retry_limit = retry_limit
        self._clock = _CLOCKS[clock]
        self._elem = kind.elem_size
        self._cap_units = kind.capacity_units
        self._checksum_enabled = self.region.checksum_enabled
        self._bufs = self.region.buffer_views

    def try_read_latest(self, dest) -> ReadOutcome:
        """Copy the newest unseen frame into ``dest`` if there is one.

        ``dest`` must be a writable buffer of at least the region's buffer
        size. Never blocks; at most ``retry_limit`` copy attempts when the
        writer keeps lapping this reader, then CONTENDED. Sequence gaps are
        normal: the transport skips intermediate frames by design.
        """
        h = self.region
        dv = memoryview(dest)
        if dv.format != "B":
            dv = dv.cast("B")
        for _ in range(self.retry_limit):
            f = h.u64(OFF_FRONT_IDX)
            voff = OFF_VERSION + 8 * f
            v1 = h.u64(voff)
            if v1 & 1:
                continue
            s = h.u64(OFF_SEQ + 8 * f)
            if s <= self.last_seq:
                return _NO_NEW
            n = h.u64(OFF_PUBLISHED_LEN + 8 * f)
            if n > self._cap_units:
                continue  # metadata from a write in flight; retry
            ts = h.u64(OFF_TIMESTAMP + 8 * f)
            ck = h.u32(OFF_CHECKSUM + 4 * f) if self._checksum_enabled else 0
            nbytes = n * self._elem
            if nbytes:
                dv[:nbytes] = self._bufs[f][:nbytes]
            if h.u64(voff) != v1:
                continue
            if self._checksum_enabled and checksum(dv[:nbytes]) != ck:
                raise IntegrityError(
                    f"checksum mismatch on seq {s} (frame discarded)"
                )
            self.last_seq = s
            return ReadOutcome(
                ReadStatus.FRESH, seq=s, timestamp_ns=ts, effective_len=n
            )
        return _CONTENDED

    def check_liveness(self) -> LivenessStatus:
        """Compare the writer's most recent activity against the deadline.

        A region whose writer never started (heartbeat 0) is stale: absent
        producers must fail closed.
        """
        h = self.region
        last = max(
            h.u64(OFF_HEARTBEAT),
            h.u64(OFF_TIMESTAMP),
            h.u64(OFF_TIMESTAMP + 8),
        )
        if self._clock() - last <= self.deadline_ns:
            return LivenessStatus.ALIVE
        return LivenessStatus.WRITER_STALE

    def last_heartbeat_ns(self) -> int:
        h = self.region
        return max(
            h.u64(OFF_HEARTBEAT),
            h.u64(OFF_TIMESTAMP),
            h.u64(OFF_TIMESTAMP + 8),
        )

    def last_sequence(self) -> int:
        return self.last_seq

    def close(self) -> None:
        if self.region.mm is None:
            return
        for b in self._bufs:
            b.release()
        self.region.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def reader_init(name: str, kind: FrameKind, deadline_ns: int = 500_000_000, **kwargs) -> Reader:
    """Attach to an existing region for reading."""
    return Reader(name, kind, deadline_ns, **kwargs)
