"""Benchmark runner integration at miniature scale."""

import hashlib
from pathlib import Path

import pytest

from simshm.bench.config import BenchConfig, CameraWorkload, LidarWorkload
from simshm.bench.runner import digest_table, run_benchmark, run_once
from simshm.frames import expected_payload
from simshm.region import ImageMeta


def tiny_cfg(**kw):
    base = dict(
        transport="sim",
        workload=LidarWorkload(count=128, rate_hz=200.0),
        readers=1,
        runs=1,
        frames_per_run=30,
        warmup_discard=3,
    )
    base.update(kw)
    return BenchConfig(**base)


class TestDigestTable:
    def test_matches_generator(self):
        kind = LidarWorkload(count=32).kind
        table = digest_table(kind, 4)
        assert len(table) == 5
        assert table[0] is None
        for seq in (1, 4):
            assert table[seq] == hashlib.sha256(expected_payload(kind, seq)).digest()

    def test_cached(self):
        kind = CameraWorkload(meta=ImageMeta(8, 8, 3)).kind
        assert digest_table(kind, 3) is digest_table(kind, 3)


class TestRunOnce:
    @pytest.mark.parametrize("transport", ["sim", "baseline"])
    def test_merges_reader_output(self, transport, tmp_path):
        cfg = tiny_cfg(transport=transport, readers=2)
        digests = digest_table(cfg.workload.kind, cfg.frames_per_run)
        res = run_once(cfg, 0, Path(tmp_path), digests)
        assert not res.invalid, res.invalid_reason
        assert res.published == 30
        assert res.validation_failures == 0
        assert set(res.per_reader_observed) == {0, 1}
        assert all(1 <= n <= 30 for n in res.per_reader_observed.values())
        readers_seen = {rid for rid, *_ in res.rows}
        assert readers_seen == {0, 1}
        for _, seq, pub, recv in res.rows:
            assert 1 <= seq <= 30
            assert pub > 0 and recv > 0


class TestRunBenchmark:
    def test_full_report_small(self):
        rep = run_benchmark(tiny_cfg(runs=2))
        assert len(rep.run_stats) == 2
        assert rep.pooled.n > 0
        assert rep.meta["validation_failures"] == 0
        assert rep.host["page_size"] > 0
        lo, hi = rep.ci95
        assert lo <= hi

    def test_camera_workload_small(self):
        cfg = tiny_cfg(
            workload=CameraWorkload(meta=ImageMeta(32, 24, 3), rate_fps=200.0),
            frames_per_run=20,
            warmup_discard=2,
        )
        rep = run_benchmark(cfg)
        assert rep.pooled.n > 0
        assert rep.meta["validation_failures"] == 0
