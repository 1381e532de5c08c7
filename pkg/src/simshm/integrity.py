"""Frame checksums and the diagnostics surface.

Checksums are CRC-32C (Castagnoli). The C extension carries the hardware
path; the pure-Python table below keeps the package importable if the
extension failed to build, at a large speed penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import region as _region

_POLY = 0x82F63B78
_TABLE: list[int] = []
for _i in range(256):
    _c = _i
    for _ in range(8):
        _c = (_c >> 1) ^ _POLY if _c & 1 else _c >> 1
    _TABLE.append(_c)


def _crc32c_py(payload, prev: int = 0) -> int:
    """Table-driven CRC-32C; slow, but has no build-time dependencies."""
    crc = prev ^ 0xFFFFFFFF
    for b in bytes(payload):
        crc = _TABLE[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF


try:
    from ._crc32c import crc32c as _crc32c_ext
    from ._crc32c import hardware_accelerated

    def checksum(payload, prev: int = 0) -> int:
        """CRC-32C of ``payload``; pass a previous value to chain blocks."""
        return _crc32c_ext(payload, prev)

    USING_NATIVE_CRC = True
except ImportError:  # pragma: no cover - exercised only on broken builds
    USING_NATIVE_CRC = False
    checksum = _crc32c_py

    def hardware_accelerated() -> bool:
        return False


@dataclass(frozen=True)
class DiagnosticsSnapshot:
    last_seq: int
    heartbeat_ns: int
    max_interpublish_ns: int
    checksum_enabled: bool = False
    drops_observed: int = 0
    delivery_ratio: float = 1.0


def compute_delivery(observed_seqs, last_published: int) -> tuple[float, int]:
    """Delivery ratio and drop count from a reader's observed sequence list.

    ``observed_seqs`` must be strictly increasing. Skipped frames count as
    drops here even when the skip was a deliberate freshness overwrite; the
    two transports are accounted identically so their ratios compare.
    """
    prev = None
    for s in observed_seqs:
        if prev is not None and s <= prev:
            raise ValueError("observed_seqs must be strictly increasing")
        prev = s
    if prev is not None and prev > last_published:
        raise ValueError(f"observed seq {prev} beyond last published {last_published}")
    n = len(observed_seqs)
    if last_published == 0:
        return 1.0, 0
    return n / last_published, last_published - n


def region_snapshot(handle: _region.RegionHandle, observed_seqs=None) -> DiagnosticsSnapshot:
    """Assemble diagnostics from a live region (works on read-only handles)."""
    last = handle.latest_seq()
    if observed_seqs is not None:
        ratio, drops = compute_delivery(observed_seqs, last)
    else:
        ratio, drops = 1.0, 0
    return DiagnosticsSnapshot(
        last_seq=last,
        heartbeat_ns=handle.u64(_region.OFF_HEARTBEAT),
        max_interpublish_ns=handle.u64(_region.OFF_MAX_INTERPUBLISH),
        checksum_enabled=handle.checksum_enabled,
        drops_observed=drops,
        delivery_ratio=ratio,
    )
