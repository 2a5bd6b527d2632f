"""Per-iteration chain records enabling summaries and diagnostics.

A trace is a list of plain-dict records (one per kept iteration) plus run
metadata. Records are JSON-serializable as-is; io.py streams them as
JSON-lines. Allocation vectors use 0-based labels.

Common record keys: "K", "c", "z", "Km". Conditional traces additionally
carry "M", "S", "u_bar", "gamma", "p_star", "delta", "r_star",
"theta_star", "loglik" and (optionally) "log_marglik"; marginal traces
carry "log_marglik".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ChainTrace:
    algorithm: str
    n: int
    d: int
    T: int
    meta: dict = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def series(self, key: str) -> np.ndarray:
        """Per-iteration scalar series, e.g. "K" or "loglik"."""
        return np.array([rec[key] for rec in self.records], dtype=np.float64)

    def k_series(self) -> np.ndarray:
        return self.series("K").astype(np.int64)

    def total_inner_series(self) -> np.ndarray:
        """Per-iteration total number of inner clusters, sum over outer."""
        return np.array([sum(rec["Km"]) for rec in self.records],
                        dtype=np.int64)

    def outer_labels(self) -> np.ndarray:
        """(iterations, n) matrix of outer allocations."""
        return np.array([rec["c"] for rec in self.records], dtype=np.int64)

    def inner_labels(self) -> np.ndarray:
        return np.array([rec["z"] for rec in self.records], dtype=np.int64)

    def to_meta_dict(self) -> dict:
        return {"algorithm": self.algorithm, "n": self.n, "d": self.d,
                "T": self.T, **self.meta}
