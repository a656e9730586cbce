"""CSV metrics schemas shared by the harness and the plotting component."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

SCHEMA_VERSION = 1

RUN_COLUMNS = [
    "schema_version", "block_height", "engine", "wall_clock_ms",
    "committed_tx", "aborted_tx", "batches", "node_db_reads",
    "node_db_writes", "direct_db_reads", "early_hash_waste", "final_root",
]

BENCH_COLUMNS = [
    "schema_version", "workers", "zipf_theta", "blocks", "committed_tx",
    "wall_clock_ms", "throughput_tps", "abort_rate", "early_hash_waste",
    "speedup",
]


@dataclass
class RunMetrics:
    block_height: int
    engine: str
    wall_clock_ms: float
    committed_tx: int
    aborted_tx: int
    batches: int
    node_db_reads: int
    node_db_writes: int
    direct_db_reads: int
    early_hash_waste: int
    final_root: str

    def row(self) -> list:
        return [SCHEMA_VERSION] + [getattr(self, f.name) for f in fields(self)]


class CsvWriter:
    def __init__(self, path: str, columns: list):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(columns)

    def write(self, row: list) -> None:
        self.writer.writerow(row)
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()
