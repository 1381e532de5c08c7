"""Single-process protocol behavior of the writer/reader pair."""

import multiprocessing as mp
import os
import threading
import time

import pytest

from simshm.errors import CapacityError, ExclusivityError, IntegrityError
from simshm.frames import expected_payload, validate_frame
from simshm.reader import LivenessStatus, Reader, ReadStatus
from simshm.region import (
    OFF_FRONT_IDX,
    OFF_SEQ,
    OFF_VERSION,
    OFF_WRITER_LOCK,
    PointCloudKind,
    attach_region,
    create_region,
    layout_for,
)
from simshm.writer import Writer

KIND = PointCloudKind(64)
CAP = layout_for(KIND).buffer_size


def make_pair(name, **writer_kw):
    w = Writer(name, KIND, **writer_kw)
    r = Reader(name, KIND)
    return w, r


class TestRoundTrip:
    def test_fresh_then_no_new(self, region_name):
        w, r = make_pair(region_name)
        buf = bytearray(CAP)
        payload = expected_payload(KIND, 1)
        assert w.write_frame(payload) == 1
        out = r.try_read_latest(buf)
        assert out.status is ReadStatus.FRESH
        assert out.seq == 1
        assert out.effective_len == 64
        assert bytes(buf) == payload
        assert r.try_read_latest(buf).status is ReadStatus.NO_NEW_DATA
        w.close(), r.close()

    def test_reader_joins_late_and_gets_latest(self, region_name):
        w = Writer(region_name, KIND)
        for seq in range(1, 6):
            w.write_frame(expected_payload(KIND, seq))
        r = Reader(region_name, KIND)
        buf = bytearray(CAP)
        out = r.try_read_latest(buf)
        assert (out.status, out.seq) == (ReadStatus.FRESH, 5)
        assert validate_frame(KIND, 5, buf, 64)
        w.close(), r.close()

    def test_overwrite_skips_intermediate(self, region_name):
        w, r = make_pair(region_name)
        buf = bytearray(CAP)
        w.write_frame(expected_payload(KIND, 1))
        assert r.try_read_latest(buf).seq == 1
        for seq in range(2, 9):
            w.write_frame(expected_payload(KIND, seq))
        out = r.try_read_latest(buf)
        assert out.seq == 8  # 2..7 overwritten, newest wins
        assert validate_frame(KIND, 8, buf, 64)
        assert r.try_read_latest(buf).status is ReadStatus.NO_NEW_DATA
        w.close(), r.close()

    def test_two_readers_independent_cursors(self, region_name):
        w = Writer(region_name, KIND)
        r1, r2 = Reader(region_name, KIND), Reader(region_name, KIND)
        buf = bytearray(CAP)
        w.write_frame(expected_payload(KIND, 1))
        assert r1.try_read_latest(buf).seq == 1
        w.write_frame(expected_payload(KIND, 2))
        assert r1.try_read_latest(buf).seq == 2
        assert r2.try_read_latest(buf).seq == 2  # r2 only ever sees the newest
        for x in (w, r1, r2):
            x.close()

    def test_partial_frame(self, region_name):
        w, r = make_pair(region_name)
        buf = bytearray(CAP)
        small = expected_payload(KIND, 1)[: 10 * 16]
        w.write_frame(small, 10)
        out = r.try_read_latest(buf)
        assert out.effective_len == 10
        assert bytes(buf[:160]) == small
        w.close(), r.close()

    def test_empty_frame(self, region_name):
        w, r = make_pair(region_name)
        buf = bytearray(CAP)
        w.write_frame(b"", 0)
        out = r.try_read_latest(buf)
        assert (out.status, out.seq, out.effective_len) == (ReadStatus.FRESH, 1, 0)
        w.close(), r.close()

    def test_explicit_timestamp(self, region_name):
        w, r = make_pair(region_name)
        buf = bytearray(CAP)
        w.write_frame(expected_payload(KIND, 1), timestamp_ns=123456789)
        assert r.try_read_latest(buf).timestamp_ns == 123456789
        w.close(), r.close()


class TestWriteValidation:
    def test_oversized_rejected_region_untouched(self, region_name):
        w = Writer(region_name, KIND)
        w.write_frame(expected_payload(KIND, 1))
        h = w.region
        front, seq = h.u64(OFF_FRONT_IDX), h.latest_seq()
        versions = (h.u64(OFF_VERSION), h.u64(OFF_VERSION + 8))
        with pytest.raises(CapacityError):
            w.write_frame(bytes((KIND.max_points + 1) * 16))
        assert h.u64(OFF_FRONT_IDX) == front
        assert h.latest_seq() == seq
        assert (h.u64(OFF_VERSION), h.u64(OFF_VERSION + 8)) == versions
        assert w.write_frame(expected_payload(KIND, 2)) == 2  # still usable
        w.close()

    def test_ragged_payload_rejected(self, region_name):
        w = Writer(region_name, KIND)
        with pytest.raises(ValueError):
            w.write_frame(b"\x00" * 17)
        with pytest.raises(ValueError):
            w.write_frame(b"\x00" * 32, 3)  # length/count disagreement
        w.close()

    def test_seq_monotone_across_kinds_of_writes(self, region_name):
        w = Writer(region_name, KIND)
        assert w.write_frame(b"", 0) == 1
        assert w.write_frame(expected_payload(KIND, 2)) == 2
        assert w.write_frame(expected_payload(KIND, 3)[:16], 1) == 3
        w.close()


class TestSeqlockStates:
    def test_versions_even_after_publish(self, region_name):
        w = Writer(region_name, KIND)
        for seq in range(1, 5):
            w.write_frame(expected_payload(KIND, seq))
            h = w.region
            assert h.u64(OFF_VERSION) % 2 == 0
            assert h.u64(OFF_VERSION + 8) % 2 == 0
        w.close()

    def test_front_flips_each_publish(self, region_name):
        w = Writer(region_name, KIND)
        seen = []
        for seq in range(1, 5):
            w.write_frame(expected_payload(KIND, seq))
            seen.append(w.region.u64(OFF_FRONT_IDX))
        assert seen == [1, 0, 1, 0]
        w.close()

    def test_odd_version_returns_contended(self, region_name):
        w, r = make_pair(region_name)
        buf = bytearray(CAP)
        w.write_frame(expected_payload(KIND, 1))
        rw = attach_region(region_name, "rw")
        # force both buffers to look mid-write
        rw.put_u64(OFF_VERSION, rw.u64(OFF_VERSION) + 1)
        rw.put_u64(OFF_VERSION + 8, rw.u64(OFF_VERSION + 8) + 1)
        assert r.try_read_latest(buf).status is ReadStatus.CONTENDED
        # restore and the frame is readable again
        rw.put_u64(OFF_VERSION, rw.u64(OFF_VERSION) + 1)
        rw.put_u64(OFF_VERSION + 8, rw.u64(OFF_VERSION + 8) + 1)
        assert r.try_read_latest(buf).seq == 1
        rw.close(), w.close(), r.close()

    def test_checksum_mismatch_discards_frame(self, region_name):
        w = Writer(region_name, KIND, checksum_enabled=True)
        r = Reader(region_name, KIND)
        buf = bytearray(CAP)
        w.write_frame(expected_payload(KIND, 1))
        assert r.try_read_latest(buf).seq == 1
        w.write_frame(expected_payload(KIND, 2))
        rw = attach_region(region_name, "rw")
        front = rw.u64(OFF_FRONT_IDX)
        off = layout_for(KIND).buffer_offset[front]
        rw._mv[off] ^= 0xFF  # silent corruption, version left stable
        with pytest.raises(IntegrityError):
            r.try_read_latest(buf)
        assert r.last_seq == 1  # damaged frame was not delivered
        w.write_frame(expected_payload(KIND, 3))
        assert r.try_read_latest(buf).seq == 3  # next good frame recovers
        rw.close(), w.close(), r.close()


class TestExclusivity:
    def test_second_writer_rejected(self, region_name):
        w = Writer(region_name, KIND)
        with pytest.raises(ExclusivityError):
            Writer(region_name, KIND)
        w.close()
        w2 = Writer(region_name, KIND)  # released cleanly, so acquirable
        w2.close()

    def test_dead_pid_lock_stolen(self, region_name):
        create_region(region_name, KIND).close()

        def crashing_writer():
            w = Writer(region_name, KIND)
            w.write_frame(expected_payload(KIND, 1))
            os._exit(0)  # simulated crash: no close, lock left behind

        p = mp.get_context("fork").Process(target=crashing_writer)
        p.start()
        p.join(10)
        h = attach_region(region_name, "ro")
        assert h.u64(OFF_WRITER_LOCK) == p.pid  # stale lock really is there
        h.close()
        w2 = Writer(region_name, KIND)  # steals from the dead pid
        assert w2.next_seq == 2
        w2.close()


class TestCrashRecovery:
    def test_reattach_continues_sequence(self, region_name):
        w = Writer(region_name, KIND)
        for seq in range(1, 42):
            w.write_frame(expected_payload(KIND, seq))
        w.close()
        w2 = Writer(region_name, KIND)
        assert w2.next_seq == 42
        assert w2.write_frame(expected_payload(KIND, 42)) == 42
        w2.close()

    def test_reattach_normalizes_interrupted_write(self, region_name):
        w = Writer(region_name, KIND)
        w.write_frame(expected_payload(KIND, 1))
        w.close()
        rw = attach_region(region_name, "rw")
        back = 1 - rw.u64(OFF_FRONT_IDX)
        rw.put_u64(OFF_VERSION + 8 * back, rw.u64(OFF_VERSION + 8 * back) + 1)
        rw.put_u64(OFF_WRITER_LOCK, 0)
        rw.close()
        w2 = Writer(region_name, KIND)  # must not trip on the odd version
        h = w2.region
        assert h.u64(OFF_VERSION) % 2 == 0
        assert h.u64(OFF_VERSION + 8) % 2 == 0
        w2.write_frame(expected_payload(KIND, 2))
        r = Reader(region_name, KIND)
        buf = bytearray(CAP)
        assert r.try_read_latest(buf).seq == 2
        w2.close(), r.close()

    def test_reader_survives_writer_restart(self, region_name):
        w = Writer(region_name, KIND)
        r = Reader(region_name, KIND)
        buf = bytearray(CAP)
        w.write_frame(expected_payload(KIND, 1))
        assert r.try_read_latest(buf).seq == 1
        w.close()
        w2 = Writer(region_name, KIND)
        w2.write_frame(expected_payload(KIND, 2))
        assert r.try_read_latest(buf).seq == 2  # same mapping, no reattach
        w2.close(), r.close()


class TestLiveness:
    def test_unstarted_region_is_stale(self, region_name):
        create_region(region_name, KIND).close()
        r = Reader(region_name, KIND)
        assert r.check_liveness() is LivenessStatus.WRITER_STALE
        r.close()

    def test_heartbeat_keeps_alive_without_publishing(self, region_name):
        w = Writer(region_name, KIND)
        r = Reader(region_name, KIND, deadline_ns=200_000_000)
        assert r.check_liveness() is LivenessStatus.ALIVE  # init heartbeats
        time.sleep(0.05)
        w.heartbeat()
        assert r.check_liveness() is LivenessStatus.ALIVE
        w.close(), r.close()

    def test_silence_goes_stale_then_recovers(self, region_name):
        w = Writer(region_name, KIND)
        r = Reader(region_name, KIND, deadline_ns=30_000_000)
        w.write_frame(expected_payload(KIND, 1))
        time.sleep(0.08)
        assert r.check_liveness() is LivenessStatus.WRITER_STALE
        w.write_frame(expected_payload(KIND, 2))
        assert r.check_liveness() is LivenessStatus.ALIVE
        w.close(), r.close()


class TestThreadedStress:
    def test_no_torn_frames_in_process(self, region_name):
        # writer thread races a polling reader; every delivered frame must
        # validate against its generator output
        w, r = make_pair(region_name)
        frames = 2000
        errors = []

        def pump():
            for seq in range(1, frames + 1):
                w.write_frame(expected_payload(KIND, seq))

        t = threading.Thread(target=pump)
        buf = bytearray(CAP)
        seen = 0
        last = 0

        def record(out):
            nonlocal seen, last
            seen += 1
            if out.seq <= last:
                errors.append(f"seq regressed {last} -> {out.seq}")
            last = out.seq
            if not validate_frame(KIND, out.seq, buf, out.effective_len):
                errors.append(f"torn frame at seq {out.seq}")

        t.start()
        while True:
            out = r.try_read_latest(buf)
            if out.status is ReadStatus.FRESH:
                record(out)
                continue
            if t.is_alive():
                continue
            # writer finished: one more look drains the final frame
            out = r.try_read_latest(buf)
            if out.status is ReadStatus.FRESH:
                record(out)
            break
        t.join()
        assert not errors
        assert last == frames  # final frame always observable
        assert seen >= 1
        w.close(), r.close()
