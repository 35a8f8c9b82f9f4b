"""CSV emission for run records."""

from __future__ import annotations

import csv
import io
from pathlib import Path

__all__ = ["HEADER", "format_row", "write_csv", "CsvSink"]

HEADER = ("env", "algorithm", "seed", "iteration", "episodes", "return_raw", "return_normalized")


def format_row(row) -> list[str]:
    env, algorithm, seed, it, ep, raw, norm = row
    # repr round-trips floats exactly, which keeps the bytes stable
    return [env, algorithm, str(int(seed)), str(int(it)), str(int(ep)), repr(float(raw)), repr(float(norm))]


def _sorted_rows(records):
    rows = [r for rec in records for r in rec.rows()]
    return sorted(rows, key=lambda r: (r[2], r[1], r[3]))


def write_csv(records, path) -> Path:
    """Write every record's rows, ordered by seed, then algorithm, then iteration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for row in _sorted_rows(records):
        w.writerow(format_row(row))
    path.write_text(buf.getvalue())
    return path


class CsvSink:
    """Serialized writer for a seed sweep.

    Records may finish out of order; rows are flushed as soon as every
    earlier seed is complete, so an interrupted sweep leaves a valid prefix.
    """

    def __init__(self, path, seeds):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._order = list(seeds)
        self._pending: dict = {}
        self._next = 0
        self._fh = self.path.open("w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(HEADER)
        self._fh.flush()

    def add(self, seed, records) -> None:
        self._pending[seed] = list(records)
        while self._next < len(self._order) and self._order[self._next] in self._pending:
            for row in _sorted_rows(self._pending.pop(self._order[self._next])):
                self._writer.writerow(format_row(row))
            self._next += 1
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
