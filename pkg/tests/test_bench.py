import gc
import itertools
import json
import os
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chunkpack import bench
from chunkpack.bench import (
    CSV_COLUMNS,
    BenchConfig,
    aggregate,
    generate_dataset,
    make_serializer,
    read_csv,
    run_matrix,
    time_once,
)
from chunkpack.errors import EmptySamples

TINY = {"small": 2000, "mid": 6000}


def tiny_config(tmp_path, **kw):
    cfg = dict(size_elements=TINY, repeats={"small": (1, 1), "mid": (1, 2)},
               storage=[str(tmp_path / "store")], csv_path=str(tmp_path / "out.csv"))
    cfg.update(kw)
    return BenchConfig.from_dict(cfg)


# -- datasets ------------------------------------------------------------------

def test_low_entropy_is_arange():
    a = generate_dataset("low", 4)
    assert a.dtype == np.dtype("<i8") and a.tolist() == [0, 1, 2, 3]


def test_medium_entropy():
    a = generate_dataset("medium", 5000, seed=7)
    assert a.dtype == np.dtype("<f8")
    assert np.array_equal(a, generate_dataset("medium", 5000, seed=7))
    clean = np.sin(2 * np.pi * np.arange(5000) / 1000)
    assert np.all(np.abs(a - clean) <= 0.1)
    assert not np.array_equal(a, generate_dataset("medium", 5000, seed=8))


def test_high_entropy():
    a = generate_dataset("high", 10_000, seed=1)
    assert a.nbytes == 80_000
    assert np.array_equal(a, generate_dataset("high", 10_000, seed=1))
    # every bit position is used
    bits = np.unpackbits(a.view(np.uint8)).reshape(-1, 64).mean(axis=0)
    assert np.all(np.abs(bits - 0.5) < 0.05)


def test_unknown_entropy():
    with pytest.raises(ValueError):
        generate_dataset("extreme", 10)


def test_high_entropy_ratio_near_one(tmp_path):
    data = generate_dataset("high", 10**6, seed=3)
    path = tmp_path / "h.blp"
    make_serializer("chunkpack", 7).write(data, path)
    ratio = data.nbytes / path.stat().st_size
    assert 0.95 <= ratio <= 1.05


# -- timing --------------------------------------------------------------------

def test_time_once_clock():
    t = time_once(lambda: time.sleep(0.05))
    assert 0.045 <= t <= 0.2


def test_time_once_excludes_hooks():
    t = time_once(lambda: None, pre_hook=lambda: time.sleep(1.0),
                  post_hook=lambda: time.sleep(0.2))
    assert t < 0.1


def test_time_once_disables_gc():
    seen = []
    gc.enable()
    time_once(lambda: seen.append(gc.isenabled()))
    assert seen == [False] and gc.isenabled()
    gc.disable()
    try:
        time_once(lambda: None)
        assert not gc.isenabled()
    finally:
        gc.enable()


def test_sync_counts_inside_timing(tmp_path, monkeypatch):
    real = os.fsync

    def slow_fsync(fd):
        time.sleep(0.05)
        real(fd)
    monkeypatch.setattr(bench.os, "fsync", slow_fsync)
    data = generate_dataset("low", 1000)
    ser = make_serializer("plain", 0)
    path = tmp_path / "x"
    with_sync = time_once(lambda: ser.write(data, path, sync=True))
    without = time_once(lambda: ser.write(data, path, sync=False))
    assert with_sync >= 0.05 > without


def test_real_sync_not_faster(tmp_path):
    data = generate_dataset("high", 2 * 10**6, seed=0)
    ser = make_serializer("plain", 0)
    path = tmp_path / "x"

    def timed(sync):
        return bench.measure(lambda: ser.write(data, path, sync), 3, 3,
                             pre_hook=lambda: path.unlink(missing_ok=True))
    assert timed(True) >= timed(False)


# -- aggregation ---------------------------------------------------------------

def test_aggregate_examples():
    assert aggregate([[1, 2], [3, 5]]) == 1.5
    assert aggregate([[7]]) == 7
    assert aggregate([[2, 2], [1, 9]]) == 2


def test_aggregate_empty():
    with pytest.raises(EmptySamples):
        aggregate([])
    with pytest.raises(EmptySamples):
        aggregate([[1.0], []])


@given(st.lists(st.lists(st.floats(0, 1e3), min_size=1, max_size=5), min_size=1, max_size=5),
       st.randoms())
def test_aggregate_permutation_invariant(samples, rnd):
    shuffled = [rnd.sample(s, len(s)) for s in samples]
    rnd.shuffle(shuffled)
    assert aggregate(shuffled) == pytest.approx(aggregate(samples), rel=1e-12)
    assert aggregate(samples) == pytest.approx(min(np.mean(s) for s in samples))


# -- matrix --------------------------------------------------------------------

def test_default_grid():
    cfg = BenchConfig()
    assert cfg.sizes == ["small", "mid"]
    assert cfg.size_elements == {"small": 10**4, "mid": 10**7, "large": 2 * 10**8}
    assert cfg.repeats == {"small": (10, 10), "mid": (5, 5), "large": (3, 3)}
    assert len(cfg.serializers) == 8
    assert sorted(lvl for s, lvl in cfg.serializers if s == "chunkpack") == [1, 3, 7, 9]
    assert sorted(lvl for s, lvl in cfg.serializers if s == bench.WHOLE_BUFFER_ID) == [1, 3, 7]


def test_matrix_rows_and_csv(tmp_path):
    records = run_matrix(tiny_config(tmp_path))
    assert len(records) == 2 * 3 * 8
    keys = {(r.serializer, r.level, r.size_class, r.entropy) for r in records}
    assert len(keys) == 48
    assert all(r.error is None for r in records)
    assert all(r.t_compress > 0 and r.t_decompress_hot > 0 and r.ratio > 0 for r in records)
    assert all(r.t_decompress_cold is None for r in records)
    for r in records:
        if r.serializer == "plain":
            assert r.ratio == pytest.approx(1.0, abs=0.01)
            assert r.beats_plain is False
        else:
            assert isinstance(r.beats_plain, bool)
    rows = read_csv(tmp_path / "out.csv")
    with open(tmp_path / "out.csv") as f:
        assert f.readline().strip().split(",") == list(CSV_COLUMNS)
    assert len(rows) == 48
    assert {row["t_decomp_cold_s"] for row in rows} == {""}
    assert {row["seed"] for row in rows} == {"42"}
    assert {(row["sets"], row["runs"]) for row in rows} == {("1", "1"), ("1", "2")}
    # no leftovers in the storage directory
    assert list((tmp_path / "store").iterdir()) == []


def test_matrix_records_failures(tmp_path, monkeypatch):
    def broken(self, data, path, sync=True):
        raise OSError("disk on fire")
    monkeypatch.setattr(bench.WholeBufferSerializer, "write", broken)
    cfg = tiny_config(tmp_path, sizes=["small"], entropies=["low"])
    records = run_matrix(cfg)
    assert len(records) == 8
    failed = [r for r in records if r.error]
    assert len(failed) == 3 and all("disk on fire" in r.error for r in failed)
    assert all(r.t_compress is None for r in failed)
    row = [r for r in read_csv(cfg.csv_path) if r["serializer"] == bench.WHOLE_BUFFER_ID][0]
    assert row["t_compress_s"] == "" and row["ratio"] == ""


def test_matrix_detects_bad_round_trip(tmp_path, monkeypatch):
    real = bench.PlainSerializer.read

    def lossy(self, path, nbytes):
        out = real(self, path, nbytes)
        out[0] ^= 1
        return out
    monkeypatch.setattr(bench.PlainSerializer, "read", lossy)
    records = run_matrix(tiny_config(tmp_path, sizes=["small"], entropies=["high"]))
    bad = [r for r in records if r.error]
    assert [r.serializer for r in bad] == ["plain"]
    assert "round trip" in bad[0].error


def test_cold_cache_mode(tmp_path):
    cfg = tiny_config(tmp_path, sizes=["small"], entropies=["medium"], cold=True,
                      serializers=[("chunkpack", 1), ("plain", 0)])
    records = run_matrix(cfg)
    for r in records:
        if hasattr(os, "posix_fadvise"):
            assert r.t_decompress_cold > 0
        else:
            assert r.t_decompress_cold is None


def test_multiple_storage_targets(tmp_path):
    cfg = tiny_config(tmp_path, sizes=["small"], entropies=["low"],
                      storage=[str(tmp_path / "a"), str(tmp_path / "b")])
    records = run_matrix(cfg)
    assert len(records) == 16
    assert {r.storage for r in records} == {str(tmp_path / "a"), str(tmp_path / "b")}


@pytest.mark.parametrize("bad", [
    {"repeats": {"small": (0, 1), "mid": (1, 1)}},
    {"entropies": ["low", "cosmic"]},
    {"serializers": [["npz", 1]]},
    {"sizes": ["huge"]},
    {"colour": "blue"},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        BenchConfig.from_dict(bad)


def test_bench_cli(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"size_elements": TINY,
                               "serializers": [["chunkpack", 3], ["plain", 0]]}))
    out = tmp_path / "r.csv"
    code = bench.main(["--config", str(cfg), "--sizes", "small", "--entropies", "low,high",
                       "--storage", str(tmp_path), "--sets", "1", "--runs", "1",
                       "-o", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 4
    assert {r["entropy"] for r in rows} == {"low", "high"}
    assert "wrote 4 rows" in capsys.readouterr().out


def test_record_csv_row():
    r = bench.BenchRecord("plain", 0, "small", "low", ".", 0.5, None, 0.25, 1.0, 2, 3, 42)
    row = r.csv_row()
    assert list(row) == list(CSV_COLUMNS)
    assert row["t_decomp_cold_s"] == "" and row["t_compress_s"] == "0.5"


def test_serializers_round_trip(tmp_path):
    data = generate_dataset("medium", 50_000, seed=2)
    for name, level in itertools.chain(bench.DEFAULT_GRID):
        ser = make_serializer(name, level)
        path = tmp_path / f"{name}{level}"
        ser.write(data, path)
        back = ser.read(path, data.nbytes)
        assert bytes(back) == data.tobytes(), (name, level)
