"""Publish side: fill the back buffer, stamp metadata, flip the front index.

The writer never inspects reader state and never blocks on readers; a
publish is one bulk copy plus a handful of header stores. Overwrite is the
policy: two publishes without an intervening read make the older frame
unrecoverable.
"""

from __future__ import annotations

import os
import time

from . import region as _region
from .errors import CapacityError, ExclusivityError
from .integrity import checksum, DiagnosticsSnapshot
from .region import (
    FrameKind,
    OFF_CHECKSUM,
    OFF_FRONT_IDX,
    OFF_HEARTBEAT,
    OFF_MAX_INTERPUBLISH,
    OFF_PUBLISHED_LEN,
    OFF_SEQ,
    OFF_TIMESTAMP,
    OFF_VERSION,
    OFF_WRITER_LOCK,
    RegionHandle,
)

_CLOCKS = {"wall": time.time_ns, "mono": time.monotonic_ns}

# A writer whose heartbeat is older than this may have its region lock
# stolen by a new writer even if its pid still exists.
DEFAULT_LOCK_STEAL_NS = 5_000_000_000


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class Writer:
    """Single publisher for one region. One live writer per region.

    Safe to hand between threads across calls, not to share concurrently.
    """

    def __init__(
        self,
        name: str,
        kind: FrameKind,
        *,
        checksum_enabled: bool = False,
        clock: str = "wall",
        lock_pages: bool = False,
        lock_steal_ns: int = DEFAULT_LOCK_STEAL_NS,
    ):
        self._clock = _CLOCKS[clock]
        self.region: RegionHandle = _region.create_region(
            name, kind, checksum_enabled=checksum_enabled, lock_pages=lock_pages
        )
        self.kind = kind
        self.checksum_enabled = self.region.checksum_enabled
        self._acquire_lock(lock_steal_ns)
        h = self.region
        # Resume after a crash: continue the sequence, never reset it, and
        # leave any half-written back buffer marked stable (it is not front,
        # so no reader ever looks at it until the next publish).
        for i in (0, 1):
            v = h.u64(OFF_VERSION + 8 * i)
            if v & 1:
                h.put_u64(OFF_VERSION + 8 * i, v + 1)
        self.next_seq = h.latest_seq() + 1
        self.last_publish_ns = max(h.u64(OFF_TIMESTAMP), h.u64(OFF_TIMESTAMP + 8))
        self._bufs = h.buffer_views
        h.put_u64(OFF_HEARTBEAT, self._clock())

    def _acquire_lock(self, steal_ns: int) -> None:
        h = self.region
        holder = h.u64(OFF_WRITER_LOCK)
        if holder:
            hb = max(
                h.u64(OFF_HEARTBEAT),
                h.u64(OFF_TIMESTAMP),
                h.u64(OFF_TIMESTAMP + 8),
            )
            stale = self._clock() - hb > steal_ns
            if _pid_alive(holder) and not stale:
                h.close()
                raise ExclusivityError(
                    f"region {h.name} already has live writer pid {holder}"
                )
        h.put_u64(OFF_WRITER_LOCK, os.getpid())

    # -- publishing ------------------------------------------------------

    def write_frame(self, payload, effective_len: int | None = None, *, timestamp_ns: int | None = None) -> int:
        """Publish one frame; returns its sequence number.

        ``effective_len`` counts points for point clouds and bytes for
        images and defaults to the full payload. ``timestamp_ns`` lets a
        caller that stamped just before this call put that stamp in the
        frame header instead of a fresh reading.
        """
        h = self.region
        view = memoryview(payload)
        nbytes = view.nbytes
        kind = self.kind
        if effective_len is None:
            if nbytes % kind.elem_size:
                raise ValueError("payload length not a whole number of records")
            effective_len = nbytes // kind.elem_size
        if effective_len > kind.capacity_units:
            raise CapacityError(
                f"frame of {effective_len} exceeds capacity {kind.capacity_units}"
            )
        if nbytes != effective_len * kind.elem_size:
            raise ValueError(
                f"payload is {nbytes} bytes, expected {effective_len * kind.elem_size}"
            )

        front = h.u64(OFF_FRONT_IDX)
        back = 1 - front
        voff = OFF_VERSION + 8 * back

        v = h.u64(voff)
        h.put_u64(voff, v + 1 + (v & 1))  # odd: write in progress

        if nbytes:
            self._bufs[back][:nbytes] = view

        seq = self.next_seq
        now = timestamp_ns if timestamp_ns is not None else self._clock()
        h.put_u64(OFF_PUBLISHED_LEN + 8 * back, effective_len)
        h.put_u64(OFF_TIMESTAMP + 8 * back, now)
        h.put_u64(OFF_SEQ + 8 * back, seq)
        if self.checksum_enabled:
            h.put_u32(OFF_CHECKSUM + 4 * back, checksum(view))

        h.put_u64(voff, h.u64(voff) + 1)  # even: stable
        h.put_u64(OFF_FRONT_IDX, back)  # publish

        done = self._clock()
        h.put_u64(OFF_HEARTBEAT, done)
        if self.last_publish_ns:
            gap = done - self.last_publish_ns
            if gap > h.u64(OFF_MAX_INTERPUBLISH):
                h.put_u64(OFF_MAX_INTERPUBLISH, gap)
        self.last_publish_ns = done
        self.next_seq = seq + 1
        return seq

    def heartbeat(self) -> None:
        """Refresh liveness while the sensor is idle; no payload change."""
        self.region.put_u64(OFF_HEARTBEAT, self._clock())

    def snapshot(self) -> DiagnosticsSnapshot:
        h = self.region
        return DiagnosticsSnapshot(
            last_seq=h.latest_seq(),
            heartbeat_ns=h.u64(OFF_HEARTBEAT),
            max_interpublish_ns=h.u64(OFF_MAX_INTERPUBLISH),
            checksum_enabled=self.checksum_enabled,
        )

    def close(self) -> None:
        h = self.region
        if h.mm is None:
            return
        if h.u64(OFF_WRITER_LOCK) == os.getpid():
            h.put_u64(OFF_WRITER_LOCK, 0)
        for b in self._bufs:
            b.release()
        h.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def writer_init(name: str, kind: FrameKind, **kwargs) -> Writer:
    """Create or reattach the region and take the writer role."""
    return Writer(name, kind, **kwargs)
