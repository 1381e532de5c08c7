"""Native-layout frame payloads and deterministic synthetic generators.

Point records are 16 bytes (x, y, z float32 plus 4 reserved bytes) so arrays
stay cache-friendly and match common point-cloud library layouts. Images are
row-major interleaved bytes with an explicit stride.

The generators exist so readers can verify, from (seq, geometry) alone, that
a received payload is exactly what the writer produced; every record encodes
the sequence number, which is what makes a mixed-generation (torn) span
detectable. The mixing function is fixed and published via a test-vector
file (data/frame_test_vectors.json) so other implementations can
interoperate:

    mix(v)   = splitmix64 finalizer of v (see ``mix64``)
    seed     = mix(seq)
    point i  : x = float32(seq), y = float32(i),
               z = float32((mix(seed ^ i) >> 40) / 2**24)
    image    : data byte k (flat index over rows of width*channels*depth
               bytes, stride padding excluded) = mix(seed ^ k) & 0xFF;
               padding bytes are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .region import ImageKind, ImageMeta, PointCloudKind, FrameKind, POINT_RECORD_BYTES

POINT_DTYPE = np.dtype(
    {"names": ["x", "y", "z", "pad"], "formats": ["<f4", "<f4", "<f4", "<u4"]}
)
assert POINT_DTYPE.itemsize == POINT_RECORD_BYTES

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF


def mix64(value: int) -> int:
    """splitmix64 finalizer; the scalar reference for the vectorized path."""
    z = (value + _GOLDEN) & _MASK
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    z ^= z >> 31
    return z


def _mix64_array(values: np.ndarray) -> np.ndarray:
    z = (values + np.uint64(_GOLDEN)).astype(np.uint64)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


@dataclass(frozen=True)
class PointCloudFrame:
    points: np.ndarray  # structured POINT_DTYPE, contiguous
    count: int

    @property
    def payload(self) -> bytes:
        return self.points.tobytes()


@dataclass(frozen=True)
class ImageFrame:
    meta: ImageMeta
    pixels: np.ndarray  # uint8, length stride * height

    @property
    def payload(self) -> bytes:
        return self.pixels.tobytes()


def gen_pointcloud(seq: int, count: int) -> PointCloudFrame:
    """Deterministic point cloud for sequence ``seq``; bit-exact everywhere."""
    if count < 0:
        raise ValueError("count must be >= 0")
    pts = np.zeros(count, dtype=POINT_DTYPE)
    if count:
        seed = np.uint64(mix64(seq))
        idx = np.arange(count, dtype=np.uint64)
        h = _mix64_array(seed ^ idx)
        pts["x"] = np.float32(seq)
        pts["y"] = idx.astype(np.float32)
        pts["z"] = (h >> np.uint64(40)).astype(np.float32) / np.float32(2**24)
    return PointCloudFrame(points=pts, count=count)


def gen_image(seq: int, meta: ImageMeta) -> ImageFrame:
    """Deterministic image for sequence ``seq``; stride padding zeroed."""
    row_bytes = meta.row_data_bytes
    data_total = row_bytes * meta.height
    seed = np.uint64(mix64(seq))
    idx = np.arange(data_total, dtype=np.uint64)
    data = (_mix64_array(seed ^ idx) & np.uint64(0xFF)).astype(np.uint8)
    if meta.stride == row_bytes:
        pixels = data
    else:
        pixels = np.zeros(meta.byte_size, dtype=np.uint8)
        rows = pixels.reshape(meta.height, meta.stride)
        rows[:, :row_bytes] = data.reshape(meta.height, row_bytes)
        pixels = pixels.reshape(-1)
    return ImageFrame(meta=meta, pixels=pixels)


def expected_payload(kind: FrameKind, seq: int) -> bytes:
    """Full-capacity payload bytes the generator produces for (kind, seq)."""
    if isinstance(kind, PointCloudKind):
        return gen_pointcloud(seq, kind.max_points).payload
    return gen_image(seq, kind.meta).payload


def validate_frame(kind: FrameKind, seq: int, payload, effective_len: int) -> bool:
    """True iff ``payload`` is the generator output for (kind, seq).

    ``effective_len`` counts points for point clouds and bytes for images;
    only that prefix is checked. A span that mixes two generations fails as
    long as it covers at least one full record.
    """
    view = memoryview(payload)
    if isinstance(kind, PointCloudKind):
        if effective_len > kind.max_points:
            return False
        nbytes = effective_len * POINT_RECORD_BYTES
        if len(view) < nbytes:
            return False
        expect = gen_pointcloud(seq, effective_len).payload
        return view[:nbytes] == expect
    if effective_len > kind.meta.byte_size:
        return False
    if len(view) < effective_len:
        return False
    expect = gen_image(seq, kind.meta).payload
    return view[:effective_len] == expect[:effective_len]
