"""Telemetry store tests: validation, replay protection, querying, export."""

from __future__ import annotations

import csv
from dataclasses import replace

import pytest

from ndtwin.simcluster import ClusterConfig, RegimeKey, TelemetryRecord, WorkloadSpec, run_regime
from ndtwin.telemetry import CSV_COLUMNS, TelemetryStore, read_ndjson, write_ndjson


def _record(t=0.0, users=100, pods=2, latency=12.0, **overrides):
    base = dict(
        timestamp_ms=t,
        current_users=users,
        pods=pods,
        avg_depth_on_enqueue=3.0,
        avg_backlog_sec_est=0.01,
        avg_cpu_process_pct=40.0,
        avg_cpu_system_pct=12.0,
        avg_mem_system_pct=35.0,
        avg_total_infer_ms=latency,
    )
    base.update(overrides)
    return TelemetryRecord(**base)


def test_ingest_accepts_valid_and_rejects_invalid(tmp_path):
    store = TelemetryStore.open(tmp_path / "store")
    good = [_record(t=float(i)) for i in range(5)]
    bad = [
        _record(t=-1.0),
        _record(avg_cpu_system_pct=120.0),
        _record(latency=-5.0),
        _record(avg_depth_on_enqueue=-1.0),
    ]
    summary = store.ingest(good + bad)
    assert summary.accepted == 5
    assert summary.rejected == 4
    assert all(r.startswith("schema-violation") for r in summary.reasons)
    assert store.total_records == 5


def test_ingest_is_replay_protected(tmp_path):
    store = TelemetryStore.open(tmp_path / "store")
    batch = [_record(t=float(i)) for i in range(10)]
    first = store.ingest(batch)
    assert first.accepted == 10 and not first.duplicate_batch
    again = store.ingest(batch)
    assert again.duplicate_batch
    assert again.accepted == 0
    assert store.total_records == 10


def test_store_reopens_with_same_contents(tmp_path):
    root = tmp_path / "store"
    TelemetryStore.open(root).ingest([_record(t=float(i)) for i in range(7)])
    reopened = TelemetryStore.open(root)
    assert reopened.total_records == 7
    assert reopened.regimes() == [RegimeKey(100, 2)]


def test_query_by_regime_and_window(tmp_path):
    store = TelemetryStore.open(tmp_path / "store")
    store.ingest(
        [_record(t=float(i), users=100, pods=2) for i in range(10)]
        + [_record(t=float(i), users=200, pods=4) for i in range(10)]
    )
    only_small = store.query(regime=RegimeKey(100, 2))
    assert len(only_small) == 10
    assert all(r.regime == RegimeKey(100, 2) for r in only_small)

    windowed = store.query(window=(3.0, 5.0))
    assert len(windowed) == 6  # inclusive on both ends, two regimes
    assert all(3.0 <= r.timestamp_ms <= 5.0 for r in windowed)

    with pytest.raises(ValueError):
        store.query(window=(5.0, 3.0))

    missing = store.query(regime=RegimeKey(999, 9))
    assert missing == []


def test_query_sorts_within_regime(tmp_path):
    store = TelemetryStore.open(tmp_path / "store")
    store.ingest([_record(t=5.0), _record(t=1.0), _record(t=3.0)])
    assert [r.timestamp_ms for r in store.query()] == [1.0, 3.0, 5.0]


def test_export_csv(tmp_path):
    store = TelemetryStore.open(tmp_path / "store")
    store.ingest([_record(t=0.0), _record(t=1.0, latency=None)])
    out = tmp_path / "dump.csv"
    rows = store.export_csv(out)
    assert rows == 2  # header excluded from the count
    with out.open() as f:
        parsed = list(csv.reader(f))
    assert tuple(parsed[0]) == CSV_COLUMNS
    assert len(parsed) == 3
    assert parsed[2][-1] == ""  # missing latency exported as empty cell


def test_ndjson_roundtrip(tmp_path):
    records = run_regime(WorkloadSpec(users=30), ClusterConfig(pods=1), ticks=40, seed=6)
    path = tmp_path / "telemetry.ndjson"
    assert write_ndjson(records, path) == 40
    assert read_ndjson(path) == records


def test_ingest_from_simulator_partitions_per_regime(tmp_path):
    store = TelemetryStore.open(tmp_path / "store")
    a = run_regime(WorkloadSpec(users=50), ClusterConfig(pods=1), ticks=30, seed=1)
    b = run_regime(WorkloadSpec(users=50), ClusterConfig(pods=2), ticks=30, seed=1)
    summary = store.ingest(a + b)
    assert summary.accepted == 60
    assert summary.per_regime == {RegimeKey(50, 1): 30, RegimeKey(50, 2): 30}
    assert store.regimes() == [RegimeKey(50, 1), RegimeKey(50, 2)]
