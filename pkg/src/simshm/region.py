"""Named shared-memory regions: binary layout, lifecycle, and raw access.

A region is a single file on a tmpfs (``/dev/shm`` by default) holding a
fixed control block followed by two payload buffers. The byte layout is the
compatibility contract between independently built writers and readers, so
every offset below is part of the public interface.

All multi-byte fields are little-endian. Control block layout::

    offset  size  field
    0       8     magic, ASCII "SIMREG01"
    8       4     kind tag (1 = point cloud, 2 = image)
    12      4     reserved
    16      8     max_points            (point cloud; 0 otherwise)
    24      4     width                 (image; 0 otherwise)
    28      4     height
    32      4     channels
    36      4     stride (bytes/row)
    40      4     depth (bytes/element)
    44      4     reserved
    48      8     capacity_bytes
    56      8     front_idx             (published buffer, 0 or 1)
    64      8x2   version[2]            (odd while a write is in progress)
    80      8x2   seq[2]                (0 = never published)
    96      8x2   timestamp_ns[2]
    112     8x2   published_len[2]      (points or bytes, per kind)
    128     4x2   checksum[2]
    136     4     checksum_enabled
    140     4     reserved
    144     8     heartbeat_ns
    152     8     drops (reserved word; drop accounting is derived from
                  sequence gaps, see integrity.compute_delivery)
    160     8     max_interpublish_ns
    168     8     writer_lock (holder pid, advisory)
    176..191      padding to 3 cache lines

Payload buffers start at the first cache-line multiple past the control
block; buffer slots are spaced at a cache-line multiple so both start
aligned. Publication ordering relies on the stores in ``writer`` appearing
in program order to other processes; this holds on total-store-order
hardware (x86-64), which is the supported platform.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import mmap
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    CorruptionError,
    LayoutError,
    LayoutMismatchError,
    RegionNotFoundError,
)

MAGIC = b"SIMREG01"
CACHE_LINE = 64
PAGE_SIZE = mmap.PAGESIZE
HEADER_SIZE = 192

KIND_POINTCLOUD = 1
KIND_IMAGE = 2

POINT_RECORD_BYTES = 16

# Control block offsets (see module docstring).
OFF_MAGIC = 0
OFF_KIND_TAG = 8
OFF_MAX_POINTS = 16
OFF_WIDTH = 24
OFF_HEIGHT = 28
OFF_CHANNELS = 32
OFF_STRIDE = 36
OFF_DEPTH = 40
OFF_CAPACITY = 48
OFF_FRONT_IDX = 56
OFF_VERSION = 64
OFF_SEQ = 80
OFF_TIMESTAMP = 96
OFF_PUBLISHED_LEN = 112
OFF_CHECKSUM = 128
OFF_CHECKSUM_ENABLED = 136
OFF_HEARTBEAT = 144
OFF_DROPS = 152
OFF_MAX_INTERPUBLISH = 160
OFF_WRITER_LOCK = 168

_NAME_RE = re.compile(r"^/[A-Za-z0-9_/]{1,63}$")

_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")


def shm_dir() -> Path:
    """Directory backing named regions; override with SIMSHM_DIR for tests."""
    env = os.environ.get("SIMSHM_DIR")
    if env:
        return Path(env)
    p = Path("/dev/shm")
    if p.is_dir():
        return p
    import tempfile

    return Path(tempfile.gettempdir())


def validate_stream_name(name: str) -> None:
    if not _NAME_RE.match(name) or len(name.encode()) > 64 or "//" in name or name.endswith("/"):
        raise LayoutError(f"invalid stream name {name!r}")


def _region_path(name: str) -> Path:
    validate_stream_name(name)
    return shm_dir() / name[1:]


@dataclass(frozen=True)
class ImageMeta:
    """Dense interleaved image geometry; stride defaults to the packed row."""

    width: int
    height: int
    channels: int
    stride: int = 0
    depth: int = 1

    def __post_init__(self):
        if self.stride == 0:
            object.__setattr__(self, "stride", self.width * self.channels * self.depth)
        if min(self.width, self.height, self.channels, self.stride, self.depth) < 1:
            raise LayoutError("image dimensions must all be >= 1")
        if self.stride < self.width * self.channels * self.depth:
            raise LayoutError("stride smaller than one packed row")

    @property
    def byte_size(self) -> int:
        return self.stride * self.height

    @property
    def row_data_bytes(self) -> int:
        return self.width * self.channels * self.depth


@dataclass(frozen=True)
class PointCloudKind:
    """Point-cloud stream provisioned for at most ``max_points`` records."""

    max_points: int

    def __post_init__(self):
        if self.max_points < 1:
            raise LayoutError("max_points must be >= 1")

    tag = KIND_POINTCLOUD
    elem_size = POINT_RECORD_BYTES

    @property
    def capacity_bytes(self) -> int:
        return self.max_points * POINT_RECORD_BYTES

    @property
    def capacity_units(self) -> int:
        """Capacity in published_len units (points)."""
        return self.max_points


@dataclass(frozen=True)
class ImageKind:
    """Image stream; published_len counts bytes."""

    meta: ImageMeta

    tag = KIND_IMAGE
    elem_size = 1

    @property
    def capacity_bytes(self) -> int:
        return self.meta.byte_size

    @property
    def capacity_units(self) -> int:
        return self.meta.byte_size


FrameKind = PointCloudKind | ImageKind


def _encode_kind(mm, kind: FrameKind) -> None:
    _U32.pack_into(mm, OFF_KIND_TAG, kind.tag)
    if isinstance(kind, PointCloudKind):
        _U64.pack_into(mm, OFF_MAX_POINTS, kind.max_points)
    else:
        m = kind.meta
        _U32.pack_into(mm, OFF_WIDTH, m.width)
        _U32.pack_into(mm, OFF_HEIGHT, m.height)
        _U32.pack_into(mm, OFF_CHANNELS, m.channels)
        _U32.pack_into(mm, OFF_STRIDE, m.stride)
        _U32.pack_into(mm, OFF_DEPTH, m.depth)
    _U64.pack_into(mm, OFF_CAPACITY, kind.capacity_bytes)


def _decode_kind(mm) -> FrameKind:
    tag = _U32.unpack_from(mm, OFF_KIND_TAG)[0]
    if tag == KIND_POINTCLOUD:
        return PointCloudKind(_U64.unpack_from(mm, OFF_MAX_POINTS)[0])
    if tag == KIND_IMAGE:
        w = _U32.unpack_from(mm, OFF_WIDTH)[0]
        h = _U32.unpack_from(mm, OFF_HEIGHT)[0]
        c = _U32.unpack_from(mm, OFF_CHANNELS)[0]
        s = _U32.unpack_from(mm, OFF_STRIDE)[0]
        d = _U32.unpack_from(mm, OFF_DEPTH)[0]
        return ImageKind(ImageMeta(w, h, c, s, d))
    raise CorruptionError(f"unknown kind tag {tag}")


def _align(n: int, a: int) -> int:
    return (n + a - 1) // a * a


@dataclass(frozen=True)
class LayoutDescriptor:
    """Deterministic offsets for one region; identical across processes."""

    header_offset: int
    buffer_offset: tuple[int, int]
    buffer_size: int
    total_size: int


def layout_for(kind: FrameKind) -> LayoutDescriptor:
    """Compute the region layout for a frame kind.

    Pure: the same kind always yields byte-identical offsets, which is what
    lets independently started processes agree on the mapping.
    """
    cap = kind.capacity_bytes
    if cap < 1:
        raise LayoutError("zero-capacity kind")
    slot = _align(cap, CACHE_LINE)
    off0 = HEADER_SIZE
    off1 = HEADER_SIZE + slot
    total = _align(off1 + cap, PAGE_SIZE)
    return LayoutDescriptor(
        header_offset=0,
        buffer_offset=(off0, off1),
        buffer_size=cap,
        total_size=total,
    )


class RegionHandle:
    """An open mapping of one region.

    Not thread-safe; one handle per thread. ``close()`` releases the mapping
    but leaves the named region in place (see :func:`destroy_region`).
    """

    def __init__(self, name: str, path: Path, mm: mmap.mmap, kind: FrameKind, writable: bool):
        self.name = name
        self.path = path
        self.mm = mm
        self.kind = kind
        self.layout = layout_for(kind)
        self.writable = writable
        self._mv = memoryview(mm)

    # -- raw word access -------------------------------------------------

    def u64(self, off: int) -> int:
        return _U64.unpack_from(self.mm, off)[0]

    def put_u64(self, off: int, value: int) -> None:
        _U64.pack_into(self.mm, off, value)

    def u32(self, off: int) -> int:
        return _U32.unpack_from(self.mm, off)[0]

    def put_u32(self, off: int, value: int) -> None:
        _U32.pack_into(self.mm, off, value)

    @property
    def buffer_views(self) -> tuple[memoryview, memoryview]:
        o0, o1 = self.layout.buffer_offset
        n = self.layout.buffer_size
        return self._mv[o0 : o0 + n], self._mv[o1 : o1 + n]

    @property
    def checksum_enabled(self) -> bool:
        return self.u32(OFF_CHECKSUM_ENABLED) != 0

    def latest_seq(self) -> int:
        return max(self.u64(OFF_SEQ), self.u64(OFF_SEQ + 8))

    def close(self) -> None:
        if self.mm is None:
            return
        self._mv.release()
        self.mm.close()
        self.mm = None  # type: ignore[assignment]

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __repr__(self):
        return f"RegionHandle({self.name!r}, kind={self.kind!r}, writable={self.writable})"


def _lock_pages(mm: mmap.mmap, length: int) -> None:
    # Best effort; needs CAP_IPC_LOCK or a permissive RLIMIT_MEMLOCK.
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6", use_errno=True)
        addr = ctypes.addressof(ctypes.c_char.from_buffer(mm))
        libc.mlock(ctypes.c_void_p(addr), ctypes.c_size_t(length))
    except Exception:
        pass


def _map_file(path: Path, writable: bool, size: int) -> mmap.mmap:
    flags = os.O_RDWR if writable else os.O_RDONLY
    fd = os.open(path, flags)
    try:
        prot = mmap.PROT_READ | (mmap.PROT_WRITE if writable else 0)
        return mmap.mmap(fd, size, prot=prot)
    finally:
        os.close(fd)


def _verify_existing(path: Path, kind: FrameKind) -> None:
    st = path.stat()
    if st.st_size < HEADER_SIZE:
        raise CorruptionError(f"region file {path} too small for a control block")
    with open(path, "rb") as f:
        head = f.read(HEADER_SIZE)
    if head[:8] != MAGIC:
        raise CorruptionError(f"bad magic in region {path}")
    existing = _decode_kind(head)
    if existing != kind:
        raise LayoutMismatchError(f"region holds {existing!r}, requested {kind!r}")
    if st.st_size != layout_for(kind).total_size:
        raise LayoutMismatchError(f"region size {st.st_size} != expected layout")


def create_region(
    name: str,
    kind: FrameKind,
    *,
    checksum_enabled: bool = False,
    lock_pages: bool = False,
) -> RegionHandle:
    """Create (or reattach to) the named region, mapped read-write.

    A fresh region comes up zeroed: front_idx 0, both sequence numbers 0
    meaning never published. If the name already exists with the same kind,
    the existing region is attached untouched so a restarted writer resumes
    where it left off.
    """
    path = _region_path(name)
    ld = layout_for(kind)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(path, os.O_RDWR | os.O_CREAT | os.O_EXCL, 0o600)
    except FileExistsError:
        _verify_existing(path, kind)
        mm = _map_file(path, True, ld.total_size)
        if lock_pages:
            _lock_pages(mm, ld.total_size)
        return RegionHandle(name, path, mm, kind, writable=True)
    try:
        os.ftruncate(fd, ld.total_size)
        mm = mmap.mmap(fd, ld.total_size)
    except BaseException:
        os.close(fd)
        path.unlink(missing_ok=True)
        raise
    os.close(fd)
    _encode_kind(mm, kind)
    _U32.pack_into(mm, OFF_CHECKSUM_ENABLED, 1 if checksum_enabled else 0)
    # Magic goes in last so a half-initialized file never looks valid.
    mm[OFF_MAGIC : OFF_MAGIC + 8] = MAGIC
    if lock_pages:
        _lock_pages(mm, ld.total_size)
    return RegionHandle(name, path, mm, kind, writable=True)


def attach_region(
    name: str,
    mode: str = "ro",
    expected_kind: FrameKind | None = None,
    *,
    lock_pages: bool = False,
) -> RegionHandle:
    """Attach to an existing region; ``mode`` is ``"ro"`` or ``"rw"``.

    Raises RegionNotFoundError when the name is absent and CorruptionError
    when the magic does not check out (the mapping must not be read then).
    """
    if mode not in ("ro", "rw"):
        raise ValueError(f"mode must be 'ro' or 'rw', got {mode!r}")
    path = _region_path(name)
    if not path.is_file():
        raise RegionNotFoundError(f"no region named {name}")
    st = path.stat()
    if st.st_size < HEADER_SIZE:
        raise CorruptionError(f"region file {path} too small for a control block")
    with open(path, "rb") as f:
        head = f.read(HEADER_SIZE)
    if head[:8] != MAGIC:
        raise CorruptionError(f"bad magic in region {path}")
    kind = _decode_kind(head)
    if expected_kind is not None and kind != expected_kind:
        raise LayoutMismatchError(f"region holds {kind!r}, expected {expected_kind!r}")
    ld = layout_for(kind)
    if st.st_size != ld.total_size:
        raise CorruptionError(f"region size {st.st_size} != layout {ld.total_size}")
    mm = _map_file(path, mode == "rw", ld.total_size)
    if lock_pages:
        _lock_pages(mm, ld.total_size)
    return RegionHandle(name, path, mm, kind, writable=mode == "rw")


def destroy_region(name: str) -> None:
    """Unlink the name. Idempotent; existing mappings stay valid until closed."""
    _region_path(name).unlink(missing_ok=True)


def region_exists(name: str) -> bool:
    return _region_path(name).is_file()
