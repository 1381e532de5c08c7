"""Serialize-and-copy transport over local stream sockets.

This is the comparison point for the shared-memory path: every frame is
serialized into a staging buffer, written once per subscriber, and copied
out of a staging buffer again on receipt. Those copies are deliberate; they
model the conversion cost that general-purpose middleware pays and the
shared-memory transport removes. Do not "optimize" them away.

Wire format, little-endian:

    magic "SIMBASE1" (8) | seq u64 | timestamp_ns u64 | length u32 |
    payload (length bytes) | crc32c u32   (CRC over the payload)

Queue depth is one frame in flight per subscriber, drop-oldest: a slow
subscriber gets the newest frame the sender could pick up, and overwritten
frames are counted as drops. An unloaded subscriber receives every frame
exactly once, in order.
"""

from __future__ import annotations

import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from .errors import ConfigError, IntegrityError, TransportError
from .integrity import checksum

WIRE_MAGIC = b"SIMBASE1"
_HEADER = struct.Struct("<8sQQI")
_CRC = struct.Struct("<I")
HEADER_BYTES = _HEADER.size  # 28
TRAILER_BYTES = _CRC.size


class EndOfStream(TransportError):
    """Publisher closed the connection; no more frames."""


class WireFormatError(TransportError):
    """Record did not parse; the connection is unusable afterwards."""


def encode_frame(seq: int, timestamp_ns: int, payload) -> bytes:
    """Serialize one frame record into a fresh staging buffer."""
    view = memoryview(payload)
    record = bytearray(HEADER_BYTES + view.nbytes + TRAILER_BYTES)
    _HEADER.pack_into(record, 0, WIRE_MAGIC, seq, timestamp_ns, view.nbytes)
    record[HEADER_BYTES : HEADER_BYTES + view.nbytes] = view  # staging copy
    _CRC.pack_into(record, HEADER_BYTES + view.nbytes, checksum(view))
    return bytes(record)


class _SubscriberPipe:
    """One send thread per subscriber with a one-slot drop-oldest mailbox."""

    def __init__(self, conn: socket.socket, index: int):
        self.conn = conn
        self.index = index
        self.alive = True
        self.dropped = 0
        self.sent = 0
        self._slot: bytes | None = None
        self._cv = threading.Condition()
        self._closing = False
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def offer(self, record: bytes) -> None:
        with self._cv:
            if not self.alive:
                self.dropped += 1
                return
            if self._slot is not None:
                self.dropped += 1  # overwrite the frame the sender never took
            self._slot = record
            self._cv.notify()

    def _run(self) -> None:
        while True:
            with self._cv:
                while self._slot is None and not self._closing:
                    self._cv.wait()
                if self._slot is None:
                    return
                record = self._slot
                self._slot = None
            try:
                self.conn.sendall(record)
                self.sent += 1
            except OSError:
                with self._cv:
                    self.alive = False
                return

    def close(self) -> None:
        with self._cv:
            self._closing = True
            self._cv.notify()
        self._thread.join(timeout=5)
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.conn.close()


@dataclass
class PublisherStats:
    published: int = 0
    dropped: int = 0
    per_subscriber_sent: list[int] = field(default_factory=list)


class BaselinePublisher:
    """Fan-out publisher; call ``accept_subscribers`` before publishing."""

    def __init__(self, address: str):
        self.address = address
        self._srv = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._srv.bind(address)
        self._srv.listen(64)
        self._pipes: list[_SubscriberPipe] = []
        self._published = 0

    def accept_subscribers(self, count: int, timeout: float = 30.0) -> None:
        self._srv.settimeout(timeout)
        for i in range(count):
            conn, _ = self._srv.accept()
            self._pipes.append(_SubscriberPipe(conn, i))

    def publish(self, seq: int, timestamp_ns: int, payload) -> None:
        """Serialize once, hand one copy to every connected subscriber."""
        record = encode_frame(seq, timestamp_ns, payload)
        self._published += 1
        for pipe in self._pipes:
            pipe.offer(record)

    def stats(self) -> PublisherStats:
        return PublisherStats(
            published=self._published,
            dropped=sum(p.dropped for p in self._pipes),
            per_subscriber_sent=[p.sent for p in self._pipes],
        )

    def close(self) -> None:
        for pipe in self._pipes:
            pipe.close()
        self._srv.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class BaselineSubscriber:
    """Blocking consumer of the frame stream."""

    def __init__(self, address: str, connect_timeout: float = 30.0):
        t0 = time.monotonic()
        while True:
            sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            try:
                sock.connect(address)
                break
            except (FileNotFoundError, ConnectionRefusedError):
                sock.close()
                if time.monotonic() - t0 > connect_timeout:
                    raise
                time.sleep(0.01)
        self._sock = sock
        self._head = bytearray(HEADER_BYTES)
        self._staging = bytearray()
        self._bad = False

    def _recv_exact(self, view: memoryview) -> None:
        need = view.nbytes
        got = 0
        while got < need:
            r = self._sock.recv_into(view[got:], need - got)
            if r == 0:
                raise EndOfStream("publisher closed the stream")
            got += r

    def receive(self, dest) -> tuple[int, int, int]:
        """Block for the next frame; returns (seq, timestamp_ns, length).

        The payload lands in a staging buffer first and is then copied into
        ``dest`` (the deserialization copy).
        """
        if self._bad:
            raise WireFormatError("connection marked bad by an earlier parse error")
        with memoryview(self._head) as head:
            self._recv_exact(head)
        magic, seq, ts, length = _HEADER.unpack(self._head)
        if magic != WIRE_MAGIC:
            self._bad = True
            raise WireFormatError(f"bad record magic {magic!r}")
        dv = memoryview(dest)
        if dv.format != "B":
            dv = dv.cast("B")
        if length > dv.nbytes:
            self._bad = True
            raise ConfigError(f"frame of {length} bytes exceeds dest capacity {dv.nbytes}")
        if length + TRAILER_BYTES > len(self._staging):
            self._staging = bytearray(length + TRAILER_BYTES)
        with memoryview(self._staging)[: length + TRAILER_BYTES] as body:
            self._recv_exact(body)
            (crc,) = _CRC.unpack_from(body, length)
            if checksum(body[:length]) != crc:
                self._bad = True
                raise IntegrityError(f"crc mismatch on seq {seq}")
            dv[:length] = body[:length]  # deserialization copy
        return seq, ts, length

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
