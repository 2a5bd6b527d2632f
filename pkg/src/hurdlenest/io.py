"""Dataset files, run configuration, and trace persistence.

Dataset CSV formats (complete grids required; imputation is upstream):

* long: columns subject_id, process, time, count; one row per cell.
* wide: columns subject_id, time, then one column per process; one row per
  (subject, time).

Subjects, processes, and times are ordered by first appearance in the file.
Traces persist as a directory holding trace.jsonl (one iteration per line)
plus manifest.json with everything needed to reproduce the run.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import CountDataset
from .errors import DataFormatError
from .hyperparams import Hyperparams
from .trace import ChainTrace

_MAX_REPORTED_ROWS = 20


@dataclass
class RunConfig:
    """Settings of one sampler run; JSON round-trippable, every field
    overridable by a CLI flag of the same name."""

    algorithm: str = "conditional"
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    iters: int = 2000
    burnin: int = 500
    thin: int = 1
    seed: int = 0
    m_nb_mode: str = "truncated"
    m_nb_samples: int = 100
    fixed_outer: str | None = None
    chains: int = 1

    def validate(self) -> list[str]:
        problems = []
        if self.algorithm not in ("conditional", "marginal"):
            problems.append(f"algorithm must be conditional|marginal, got "
                            f"{self.algorithm!r}")
        if not self.iters > self.burnin >= 0:
            problems.append("need iters > burnin >= 0")
        if self.thin < 1:
            problems.append("thin must be >= 1")
        if self.m_nb_mode not in ("truncated", "monte_carlo"):
            problems.append(f"m_nb_mode must be truncated|monte_carlo, got "
                            f"{self.m_nb_mode!r}")
        if self.m_nb_samples < 1:
            problems.append("m_nb_samples must be >= 1")
        if self.chains < 1:
            problems.append("chains must be >= 1")
        problems.extend(self.hyperparams.validate())
        return problems

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hyperparams"] = self.hyperparams.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        hp = raw.pop("hyperparams", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise DataFormatError(f"unknown config fields: {sorted(unknown)}")
        return cls(hyperparams=Hyperparams.from_dict(hp), **raw)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"config {path} is not valid JSON: {exc}")
        return cls.from_dict(raw)


# ---------------------------------------------------------------------------
# dataset CSV


def load_dataset(path, format: str = "long") -> CountDataset:
    """Parse a CSV file into a dense count tensor; see the module docstring
    for the two layouts. Errors carry row-level diagnostics."""
    if format == "long":
        return _load_long(path)
    if format == "wide":
        return _load_wide(path)
    raise ValueError(f"unknown format {format!r}")


def _parse_count(text: str, row: int, problems: list[str]):
    try:
        value = int(text)
    except ValueError:
        problems.append(f"row {row}: count {text!r} is not an integer")
        return None
    if value < 0:
        problems.append(f"row {row}: negative count {value}")
        return None
    return value


def _report(problems: list[str], path):
    if problems:
        head = problems[:_MAX_REPORTED_ROWS]
        more = len(problems) - len(head)
        suffix = f" (+{more} more)" if more > 0 else ""
        raise DataFormatError(f"{path}: " + "; ".join(head) + suffix)


class _Index:
    """Stable first-appearance indexing of string keys."""

    def __init__(self):
        self.order: dict[str, int] = {}

    def __call__(self, key: str) -> int:
        return self.order.setdefault(key, len(self.order))

    def __len__(self):
        return len(self.order)


def _load_long(path) -> CountDataset:
    cells: dict[tuple[int, int, int], int] = {}
    subjects, processes, times = _Index(), _Index(), _Index()
    problems: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != [
                "subject_id", "process", "time", "count"]:
            raise DataFormatError(
                f"{path}: expected header subject_id,process,time,count")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                problems.append(f"row {row_num}: expected 4 fields, got {len(row)}")
                continue
            value = _parse_count(row[3], row_num, problems)
            if value is None:
                continue
            key = (subjects(row[0]), processes(row[1]), times(row[2]))
            if key in cells:
                problems.append(f"row {row_num}: duplicate cell "
                                f"(subject {row[0]}, process {row[1]}, time {row[2]})")
                continue
            cells[key] = value
    _report(problems, path)
    n, d, T = len(subjects), len(processes), len(times)
    if n == 0:
        raise DataFormatError(f"{path}: no data rows")
    if len(cells) != n * d * T:
        raise DataFormatError(
            f"{path}: incomplete grid, found {len(cells)} cells for "
            f"{n} subjects x {d} processes x {T} times")
    counts = np.zeros((n, d, T), dtype=np.int64)
    for (i, j, t), value in cells.items():
        counts[i, j, t] = value
    return CountDataset(counts)


def _load_wide(path) -> CountDataset:
    subjects, times = _Index(), _Index()
    rows: dict[tuple[int, int], list[int]] = {}
    problems: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or \
                [h.strip() for h in header[:2]] != ["subject_id", "time"]:
            raise DataFormatError(
                f"{path}: expected header subject_id,time,<process columns>")
        d = len(header) - 2
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                problems.append(f"row {row_num}: expected {d + 2} fields, "
                                f"got {len(row)}")
                continue
            values = [_parse_count(v, row_num, problems) for v in row[2:]]
            if any(v is None for v in values):
                continue
            key = (subjects(row[0]), times(row[1]))
            if key in rows:
                problems.append(f"row {row_num}: duplicate (subject {row[0]}, "
                                f"time {row[1]})")
                continue
            rows[key] = values
    _report(problems, path)
    n, T = len(subjects), len(times)
    if n == 0:
        raise DataFormatError(f"{path}: no data rows")
    if len(rows) != n * T:
        raise DataFormatError(f"{path}: incomplete grid, found {len(rows)} "
                              f"rows for {n} subjects x {T} times")
    counts = np.zeros((n, d, T), dtype=np.int64)
    for (i, t), values in rows.items():
        counts[i, :, t] = values
    return CountDataset(counts)


def save_dataset(dataset: CountDataset, path, format: str = "long") -> None:
    """Write a dataset in the canonical CSV layout (integer ids from 1)."""
    counts = dataset.counts.astype(np.int64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if format == "long":
            writer.writerow(["subject_id", "process", "time", "count"])
            for i in range(dataset.n):
                for j in range(dataset.d):
                    for t in range(dataset.T):
                        writer.writerow([i + 1, j + 1, t + 1, counts[i, j, t]])
        elif format == "wide":
            writer.writerow(["subject_id", "time"]
                            + [f"p{j + 1}" for j in range(dataset.d)])
            for i in range(dataset.n):
                for t in range(dataset.T):
                    writer.writerow([i + 1, t + 1] + counts[i, :, t].tolist())
        else:
            raise ValueError(f"unknown format {format!r}")


# ---------------------------------------------------------------------------
# hashes, manifest, trace persistence


def dataset_sha256(dataset: CountDataset) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(dataset.counts.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(dataset.counts).tobytes())
    return h.hexdigest()


def config_sha256(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_trace(trace: ChainTrace, directory, manifest_extra: dict | None = None
                ) -> Path:
    """Persist a trace directory: trace.jsonl + manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "trace.jsonl", "w") as fh:
        for rec in trace.records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
    manifest = trace.to_meta_dict()
    manifest["version"] = _package_version()
    manifest["iterations_kept"] = len(trace)
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def read_trace(directory) -> ChainTrace:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    trace_path = directory / "trace.jsonl"
    if not manifest_path.exists() or not trace_path.exists():
        raise DataFormatError(f"{directory}: not a trace directory "
                              "(missing manifest.json or trace.jsonl)")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    records = []
    with open(trace_path) as fh:
        for line_num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataFormatError(
                    f"{trace_path}: bad record on line {line_num}: {exc}")
    meta = {k: v for k, v in manifest.items()
            if k not in ("algorithm", "n", "d", "T")}
    return ChainTrace(
        algorithm=manifest["algorithm"], n=manifest["n"], d=manifest["d"],
        T=manifest["T"], meta=meta, records=records,
    )


def _package_version() -> str:
    from . import __version__

    return __version__


def default_out_dir() -> Path:
    """Output directory default, overridable via HURDLENEST_OUT."""
    return Path(os.environ.get("HURDLENEST_OUT", "."))
