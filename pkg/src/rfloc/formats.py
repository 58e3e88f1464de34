"""CSV and raw binary serialization for batches, trajectories, amplifiers and metrics.

Every CSV starts with one comment line

    # rfloc-csv v1 kind=<kind> config=<hash>

followed by a header row. Readers reject files whose version they do not know.
The binary format is the 8-byte magic ``RFLOCBIN``, a little-endian uint64
``ndim``, ``ndim`` uint64 dimensions, then the float64 payload in C order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

CSV_VERSION = 1
CSV_TAG = "rfloc-csv"
MAGIC = b"RFLOCBIN"


class FormatError(ValueError):
    pass


def config_hash(config) -> str:
    """Stable 16-hex-digit digest of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fmt_value(v) -> str:
    """Deterministic text for a cell: shortest round-trip repr for floats."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def csv_text(kind: str, columns, rows, config: str = "-") -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_TAG} v{CSV_VERSION} kind={kind} config={config}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(c, "") for c in columns]
        w.writerow([fmt_value(v) for v in row])
    return buf.getvalue()


class CsvWriter:
    """Incremental CSV writer; rows are flushed as they are appended."""

    def __init__(self, path, kind: str, columns, config: str = "-"):
        self.path = Path(path)
        self.columns = list(columns)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(csv_text(kind, self.columns, [], config))
        self._fh.flush()
        self._w = csv.writer(self._fh, lineterminator="\n")

    def write(self, row):
        if isinstance(row, dict):
            row = [row.get(c, "") for c in self.columns]
        self._w.writerow([fmt_value(v) for v in row])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_header(line: str) -> dict:
    parts = line.strip().lstrip("#").split()
    if len(parts) < 2 or parts[0] != CSV_TAG:
        raise FormatError("missing rfloc-csv header line")
    try:
        version = int(parts[1].lstrip("v"))
    except ValueError:
        raise FormatError(f"bad version field {parts[1]!r}") from None
    if version != CSV_VERSION:
        raise FormatError(f"unsupported CSV schema version {version}")
    meta = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
    meta["version"] = version
    return meta


def read_csv(path):
    """Return ``(meta, columns, rows)`` with rows as lists of strings."""
    with open(path, newline="") as fh:
        meta = parse_header(fh.readline())
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [r for r in reader]
    return meta, columns, rows


def read_numeric_csv(path):
    meta, columns, rows = read_csv(path)
    return meta, columns, np.array([[float(x) for x in r] for r in rows], dtype=float)


# --- typed exports ---------------------------------------------------------

def batch_csv(batch, config: str = "-") -> str:
    n = batch.inputs.shape[1]
    cols = [f"x{i}" for i in range(n)] + ["y"]
    rows = [list(x) + [int(y)] for x, y in zip(batch.inputs, batch.labels)]
    return csv_text("batch", cols, rows, config)


def trajectory_csv(traj, config: str = "-") -> str:
    """Rows ``time, unit, w_0..w_{N-1}``, one per (snapshot, hidden unit)."""
    S, M, N = traj.weights.shape
    cols = ["time", "unit"] + [f"w_{i}" for i in range(N)]
    rows = [[float(traj.times[s]), m] + list(traj.weights[s, m]) for s in range(S) for m in range(M)]
    return csv_text("trajectory", cols, rows, config)


def read_trajectory_csv(path):
    from .nets import WeightTrajectory
    meta, cols, data = read_numeric_csv(path)
    if meta.get("kind") != "trajectory":
        raise FormatError("not a trajectory CSV")
    times = np.unique(data[:, 0])
    M = int(data[:, 1].max()) + 1
    W = data[:, 2:].reshape(len(times), M, -1)
    return WeightTrajectory(np.arange(len(times)), times, W, {"config": meta.get("config")})


def amplifier_csv(table, config: str = "-") -> str:
    return csv_text("amplifier", ["a", "phi", "taylor3"], table.tolist(), config)


METRIC_COLUMNS = ["seed", "config_id", "ipr", "excess_kurtosis", "fit_k", "fit_rel_residual", "peak"]


# --- binary ------------------------------------------------------------------

def to_binary(array) -> bytes:
    a = np.asarray(array, dtype="<f8")      # keeps 0-d arrays 0-d
    head = MAGIC + np.array([a.ndim, *a.shape], dtype="<u8").tobytes()
    return head + a.tobytes(order="C")


def from_binary(blob: bytes) -> np.ndarray:
    if blob[:8] != MAGIC:
        raise FormatError("bad magic")
    ndim = int(np.frombuffer(blob, "<u8", 1, 8)[0])
    shape = tuple(int(d) for d in np.frombuffer(blob, "<u8", ndim, 16))
    off = 16 + 8 * ndim
    count = int(np.prod(shape)) if shape else 1
    if len(blob) != off + 8 * count:
        raise FormatError("payload size does not match header")
    return np.frombuffer(blob, "<f8", count, off).reshape(shape).copy()


def write_binary(path, array):
    Path(path).write_bytes(to_binary(array))


def read_binary(path) -> np.ndarray:
    return from_binary(Path(path).read_bytes())
