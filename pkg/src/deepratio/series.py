"""Labeled time series, dataset partitioning and windowed energy features.

A series is stored as a ``T x d`` float array. Change-point labels and sample
rates live in a JSON sidecar (``metadata.json``) next to the CSV files so the
same reader handles unlabeled data.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

METADATA_FILENAME = "metadata.json"


class DataFormatError(ValueError):
    """Raised when a series file or its metadata cannot be used."""


@dataclass(frozen=True)
class TimeSeriesRecord:
    id: str
    samples: np.ndarray
    true_change_point: int | None = None
    sample_rate: float | None = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataFormatError(f"{self.id}: samples must be a T x d matrix")
        if x.shape[0] < 2 or x.shape[1] < 1:
            raise DataFormatError(f"{self.id}: need T >= 2 and d >= 1, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataFormatError(f"{self.id}: non-finite sample values")
        if self.true_change_point is not None:
            tau = int(self.true_change_point)
            if not 0 < tau < x.shape[0]:
                raise DataFormatError(
                    f"{self.id}: change point out of range ({tau} not in (0, {x.shape[0]}))"
                )
            object.__setattr__(self, "true_change_point", tau)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class Dataset:
    records: tuple[TimeSeriesRecord, ...]
    role: str = "train"

    def __post_init__(self):
        recs = tuple(self.records)
        if not recs:
            raise DataFormatError("dataset has no records")
        dims = {r.dim for r in recs}
        if len(dims) != 1:
            raise DataFormatError(f"records disagree on dimensionality: {sorted(dims)}")
        ids = [r.id for r in recs]
        if len(set(ids)) != len(ids):
            raise DataFormatError("duplicate series ids in dataset")
        if self.role not in ("train", "test"):
            raise DataFormatError(f"unknown dataset role {self.role!r}")
        object.__setattr__(self, "records", recs)

    @property
    def dim(self) -> int:
        return self.records[0].dim

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self, series_id: str) -> TimeSeriesRecord:
        for r in self.records:
            if r.id == series_id:
                return r
        raise KeyError(series_id)


@dataclass(frozen=True)
class SplitSpec:
    """Reference/evaluation boundaries per series.

    ``boundaries[id]`` is the index of the first evaluation sample of that
    series; everything before it is reference (known pre-change) data.
    """

    reference_count: int
    evaluation_count: int
    boundaries: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.reference_count < 1 or self.evaluation_count < 1:
            raise ValueError("split needs at least one reference and one evaluation sample")

    def reference_indices(self, record: TimeSeriesRecord) -> np.ndarray:
        return np.arange(self.boundaries[record.id])

    def evaluation_indices(self, record: TimeSeriesRecord) -> np.ndarray:
        return np.arange(self.boundaries[record.id], record.length)


@dataclass(frozen=True)
class FeatureSeries:
    source_id: str
    windows: np.ndarray
    window_length: int
    hop: int
    channel_names: tuple[str, ...] = ()


def _parse_csv(path: Path, has_header: bool) -> tuple[np.ndarray, list[str] | None]:
    rows: list[list[float]] = []
    header = None
    ncols = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if has_header and header is None:
                header = [c.strip() for c in row]
                ncols = len(header)
                continue
            if ncols is None:
                ncols = len(row)
            elif len(row) != ncols:
                raise DataFormatError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {ncols}"
                )
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no rows")
    return np.asarray(rows, dtype=np.float64), header


def load_metadata(path: str | Path) -> dict[str, dict]:
    path = Path(path)
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(meta, dict):
        raise DataFormatError(f"{path}: metadata must map series id to an object")
    allowed = {"change_point", "sample_rate"}
    for sid, entry in meta.items():
        if not isinstance(entry, dict):
            raise DataFormatError(f"{path}: entry for {sid!r} must be an object")
        unknown = set(entry) - allowed
        if unknown:
            raise DataFormatError(f"{path}: unknown keys for {sid!r}: {sorted(unknown)}")
    return meta


def load_csv_dataset(
    path: str | Path,
    has_header: bool = False,
    metadata: str | Path | None = None,
    role: str = "train",
) -> Dataset:
    """Read one CSV file or a directory of CSV files into a :class:`Dataset`.

    The series id is the file stem. Labels come from ``metadata`` if given,
    otherwise from ``metadata.json`` beside the data if it exists.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"{path}: no such file or directory")
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise DataFormatError(f"{path}: no CSV files found")
    if metadata is None:
        candidate = (path if path.is_dir() else path.parent) / METADATA_FILENAME
        metadata = candidate if candidate.exists() else None
    meta = load_metadata(metadata) if metadata is not None else {}

    records = []
    for f in files:
        samples, _ = _parse_csv(f, has_header)
        entry = meta.get(f.stem, {})
        tau = entry.get("change_point")
        if tau is not None and not 0 < int(tau) < samples.shape[0]:
            raise DataFormatError(
                f"{f}: change point out of range ({tau} not in (0, {samples.shape[0]}))"
            )
        records.append(
            TimeSeriesRecord(
                id=f.stem,
                samples=samples,
                true_change_point=tau,
                sample_rate=entry.get("sample_rate"),
            )
        )
    return Dataset(tuple(records), role=role)


def write_csv_dataset(dataset: Dataset | Iterable[TimeSeriesRecord], directory: str | Path) -> Path:
    """Write each record to ``<id>.csv`` plus a metadata sidecar; returns the directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {}
    for rec in dataset:
        np.savetxt(directory / f"{rec.id}.csv", rec.samples, delimiter=",", fmt="%.17g")
        entry = {}
        if rec.true_change_point is not None:
            entry["change_point"] = rec.true_change_point
        if rec.sample_rate is not None:
            entry["sample_rate"] = rec.sample_rate
        meta[rec.id] = entry
    (directory / METADATA_FILENAME).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def split_reference_evaluation(dataset: Dataset | Sequence[TimeSeriesRecord], ref_fraction: float) -> SplitSpec:
    """Label the first ``floor(ref_fraction * T)`` samples of every series as reference."""
    if not 0.0 < ref_fraction < 1.0:
        raise ValueError(f"ref_fraction must lie in (0, 1), got {ref_fraction}")
    boundaries = {}
    n_r = n_e = 0
    for rec in dataset:
        # tolerance keeps e.g. 0.29 * 100 from flooring to 28
        cut = math.floor(ref_fraction * rec.length + 1e-9)
        if cut < 1:
            raise ValueError(f"{rec.id}: series too short for ref_fraction={ref_fraction}")
        if cut >= rec.length:
            raise ValueError(f"{rec.id}: no evaluation samples left")
        boundaries[rec.id] = cut
        n_r += cut
        n_e += rec.length - cut
    return SplitSpec(n_r, n_e, boundaries)


def train_test_partition(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Shuffle series ids with ``seed`` and hold out ``round(test_fraction * N)`` for testing."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(dataset)
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n_test >= n:
        raise ValueError(f"test_fraction={test_fraction} leaves an empty partition for N={n}")
    order = np.random.default_rng(seed).permutation(n)
    test_idx = set(order[:n_test].tolist())
    train = [r for i, r in enumerate(dataset.records) if i not in test_idx]
    test = [r for i, r in enumerate(dataset.records) if i in test_idx]
    return Dataset(tuple(train), "train"), Dataset(tuple(test), "test")


def window_count(length: int, window_length: int, hop: int) -> int:
    return (length - window_length) // hop + 1


def window_features(record: TimeSeriesRecord, window_length: int, hop: int) -> FeatureSeries:
    """Average energy, Teager-Kaiser energy and line-length per window and channel.

    Columns are grouped by measure: the first ``d`` columns hold average
    energy, the next ``d`` Teager-Kaiser energy, the last ``d`` line-length.
    """
    if window_length < 3:
        raise ValueError("window_length must be >= 3")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    x = record.samples
    if window_length > record.length:
        raise ValueError(f"{record.id}: window longer than series ({window_length} > {record.length})")
    n_win = window_count(record.length, window_length, hop)
    starts = np.arange(n_win) * hop
    idx = starts[:, None] + np.arange(window_length)[None, :]
    w = x[idx]  # (n_win, window_length, d)
    energy = np.mean(w**2, axis=1)
    teager = np.mean(w[:, 1:-1] ** 2 - w[:, :-2] * w[:, 2:], axis=1)
    line_length = np.sum(np.abs(np.diff(w, axis=1)), axis=1)
    names = tuple(
        f"{m}_{c}" for m in ("energy", "teager", "linelength") for c in range(record.dim)
    )
    return FeatureSeries(
        source_id=record.id,
        windows=np.hstack([energy, teager, line_length]),
        window_length=window_length,
        hop=hop,
        channel_names=names,
    )
