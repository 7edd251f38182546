"""File-backed telemetry data layer.

Records are appended per regime as line-delimited JSON under one store
directory, next to a small JSON index holding counts, time bounds, and the
content hashes of already-ingested batches (replay protection). Single
writer, any number of readers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .simcluster import RegimeKey, TelemetryRecord

INDEX_FILE = "index.json"

CSV_COLUMNS = (
    "users",
    "pods",
    "timestamp_ms",
    "current_users",
    "avg_depth_on_enqueue",
    "avg_backlog_sec_est",
    "avg_cpu_process_pct",
    "avg_cpu_system_pct",
    "avg_mem_system_pct",
    "avg_total_infer_ms",
)


class StoreError(Exception):
    pass


class StorageFailure(StoreError):
    pass


@dataclass
class IngestSummary:
    accepted: int = 0
    rejected: int = 0
    per_regime: dict = field(default_factory=dict)
    reasons: list = field(default_factory=list)
    duplicate_batch: bool = False


def _validate(rec: TelemetryRecord) -> Optional[str]:
    """Return a rejection reason, or None when the record is schema-valid."""
    if rec.pods < 1:
        return "schema-violation: pods < 1"
    if rec.current_users < 0:
        return "schema-violation: current_users < 0"
    if rec.timestamp_ms < 0:
        return "schema-violation: negative timestamp"
    if rec.avg_total_infer_ms is not None and rec.avg_total_infer_ms < 0:
        return "schema-violation: negative latency"
    if rec.avg_depth_on_enqueue < 0 or rec.avg_backlog_sec_est < 0:
        return "schema-violation: negative queue metric"
    for name in ("avg_cpu_process_pct", "avg_cpu_system_pct", "avg_mem_system_pct"):
        v = getattr(rec, name)
        if not 0.0 <= v <= 100.0:
            return f"schema-violation: {name} outside [0, 100]"
    return None


def _batch_hash(records: Sequence[TelemetryRecord]) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(json.dumps(rec.to_dict(), sort_keys=True).encode())
        h.update(b"\n")
    return h.hexdigest()


class TelemetryStore:
    """Append-only per-regime NDJSON store with an index sidecar."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._index_path = self.root / INDEX_FILE
        if self._index_path.exists():
            self._index = json.loads(self._index_path.read_text())
        else:
            self.root.mkdir(parents=True, exist_ok=True)
            self._index = {"regimes": {}, "batches": []}
            self._write_index()

    @classmethod
    def open(cls, root) -> "TelemetryStore":
        return cls(Path(root))

    def _write_index(self):
        tmp = self._index_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self._index, indent=2, sort_keys=True))
        os.replace(tmp, self._index_path)

    def _regime_file(self, key: RegimeKey) -> Path:
        return self.root / f"regime_{key.label()}.ndjson"

    @property
    def total_records(self) -> int:
        return sum(e["count"] for e in self._index["regimes"].values())

    def regimes(self) -> list:
        keys = []
        for name in self._index["regimes"]:
            users, pods = name.split(",")
            keys.append(RegimeKey(int(users), int(pods)))
        return sorted(keys)

    def ingest(self, records: Sequence[TelemetryRecord]) -> IngestSummary:
        summary = IngestSummary()
        records = list(records)
        batch = _batch_hash(records)
        if batch in self._index["batches"]:
            summary.duplicate_batch = True
            summary.rejected = 0
            return summary
        per_regime = {}
        for rec in records:
            reason = _validate(rec)
            if reason is not None:
                summary.rejected += 1
                summary.reasons.append(reason)
                continue
            per_regime.setdefault(rec.regime, []).append(rec)
        try:
            for key in sorted(per_regime):
                recs = sorted(per_regime[key], key=lambda r: r.timestamp_ms)
                with self._regime_file(key).open("a") as f:
                    for rec in recs:
                        f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
                name = f"{key.users},{key.pods}"
                entry = self._index["regimes"].setdefault(
                    name, {"count": 0, "t_min": None, "t_max": None}
                )
                entry["count"] += len(recs)
                lo, hi = recs[0].timestamp_ms, recs[-1].timestamp_ms
                entry["t_min"] = lo if entry["t_min"] is None else min(entry["t_min"], lo)
                entry["t_max"] = hi if entry["t_max"] is None else max(entry["t_max"], hi)
                summary.accepted += len(recs)
                summary.per_regime[key] = len(recs)
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        self._index["batches"].append(batch)
        self._write_index()
        return summary

    def query(
        self,
        regime: Optional[RegimeKey] = None,
        window: Optional[tuple] = None,
    ) -> list:
        if window is not None:
            t0, t1 = window
            if t0 > t1:
                raise ValueError(f"window start {t0} exceeds end {t1}")
        keys = [regime] if regime is not None else self.regimes()
        out = []
        for key in keys:
            path = self._regime_file(key)
            if not path.exists():
                continue
            with path.open() as f:
                for line in f:
                    rec = TelemetryRecord.from_dict(json.loads(line))
                    if window is not None and not (t0 <= rec.timestamp_ms <= t1):
                        continue
                    out.append(rec)
        out.sort(key=lambda r: (r.current_users, r.pods, r.timestamp_ms))
        return out

    def export_csv(self, destination) -> int:
        destination = Path(destination)
        rows = 0
        try:
            with destination.open("w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(CSV_COLUMNS)
                for rec in self.query():
                    writer.writerow(
                        [
                            rec.current_users,
                            rec.pods,
                            rec.timestamp_ms,
                            rec.current_users,
                            rec.avg_depth_on_enqueue,
                            rec.avg_backlog_sec_est,
                            rec.avg_cpu_process_pct,
                            rec.avg_cpu_system_pct,
                            rec.avg_mem_system_pct,
                            "" if rec.avg_total_infer_ms is None else rec.avg_total_infer_ms,
                        ]
                    )
                    rows += 1
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        return rows


def read_ndjson(path) -> list:
    """Parse a line-delimited JSON telemetry file (the `simulate` output format)."""
    records = []
    with Path(path).open() as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(TelemetryRecord.from_dict(json.loads(line)))
    return records


def write_ndjson(records: Sequence[TelemetryRecord], path) -> int:
    with Path(path).open("w") as f:
        for rec in records:
            f.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    return len(records)
