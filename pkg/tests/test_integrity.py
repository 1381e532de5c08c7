"""Checksum vectors and delivery accounting."""

import os
import zlib

import pytest

from simshm.integrity import checksum, compute_delivery

# Published CRC-32C (Castagnoli) vectors, including the iSCSI test patterns.
VECTORS = [
    (b"", 0x00000000),
    (b"123456789", 0xE3069283),
    (b"\x00" * 32, 0x8A9136AA),
    (b"\xff" * 32, 0x62A8AB43),
    (bytes(range(32)), 0x46DD794E),
    (bytes(range(31, -1, -1)), 0x113FDB5C),
    (b"The quick brown fox jumps over the lazy dog", 0x22620404),
]


class TestChecksum:
    @pytest.mark.parametrize("data,expect", VECTORS)
    def test_published_vectors(self, data, expect):
        assert checksum(data) == expect

    def test_castagnoli_not_ieee(self):
        # same width, different polynomial than zlib.crc32
        data = b"123456789"
        assert checksum(data) != zlib.crc32(data)

    def test_chaining(self):
        a, b, c = b"hello, ", b"wor", b"ld"
        whole = checksum(a + b + c)
        assert checksum(c, checksum(b, checksum(a))) == whole
        assert checksum(b"", whole) == whole

    def test_native_matches_pure_python(self):
        # the C extension against the table-driven fallback, random buffers
        from simshm.integrity import _crc32c_py

        for size in (1, 7, 63, 64, 65, 4096, 70_000):
            buf = os.urandom(size)
            assert checksum(buf) == _crc32c_py(buf)

    def test_matches_bit_serial_reference(self):
        # independent bit-by-bit implementation straight from the definition
        def ref(data, crc=0):
            c = crc ^ 0xFFFFFFFF
            for b in data:
                c ^= b
                for _ in range(8):
                    c = (c >> 1) ^ (0x82F63B78 if c & 1 else 0)
            return c ^ 0xFFFFFFFF

        for size in (0, 1, 5, 64, 300):
            buf = os.urandom(size)
            assert checksum(buf) == ref(buf)

    def test_bit_flip_always_detected_small(self):
        base = os.urandom(64)
        ref = checksum(base)
        raw = bytearray(base)
        for byte in range(0, 64, 5):
            for bit in range(8):
                raw[byte] ^= 1 << bit
                assert checksum(raw) != ref
                raw[byte] ^= 1 << bit

    def test_accepts_memoryview_and_bytearray(self):
        data = b"123456789"
        assert checksum(bytearray(data)) == 0xE3069283
        assert checksum(memoryview(data)) == 0xE3069283
        assert checksum(memoryview(data)[1:4]) == checksum(data[1:4])


class TestDelivery:
    def test_perfect(self):
        ratio, dropped = compute_delivery(list(range(1, 1001)), 1000)
        assert ratio == 1.0
        assert dropped == 0

    def test_every_other(self):
        ratio, dropped = compute_delivery(list(range(2, 1001, 2)), 1000)
        assert ratio == 0.5
        assert dropped == 500

    def test_partial(self):
        # 980 observed out of 1000 published
        seqs = [s for s in range(1, 1001) if s % 50 != 0]
        ratio, dropped = compute_delivery(seqs, 1000)
        assert ratio == 0.98
        assert dropped == 20

    def test_nothing_published(self):
        assert compute_delivery([], 0) == (1.0, 0)

    def test_nothing_observed(self):
        assert compute_delivery([], 10) == (0.0, 10)

    def test_rejects_nonmonotonic(self):
        with pytest.raises(ValueError):
            compute_delivery([1, 3, 3], 5)
        with pytest.raises(ValueError):
            compute_delivery([2, 1], 5)

    def test_rejects_beyond_published(self):
        with pytest.raises(ValueError):
            compute_delivery([1, 2, 7], 5)
