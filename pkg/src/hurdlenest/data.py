"""Count data containers and input validation helpers.

The basic object is a dense (n, d, T) tensor of non-negative integer counts:
n subjects, d count processes, T replicates per subject/process (T=1 for
non-replicated data).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def as_count_array(X, allow_2d: bool = True) -> np.ndarray:
    """Validate and coerce raw input into an (n, d, T) uint64 count tensor.

    Accepts (n, d) arrays (treated as T=1) or (n, d, T) arrays. Rejects
    negative, non-finite, and non-integer entries.
    """
    arr = np.asarray(X)
    if arr.ndim == 2 and allow_2d:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2-d or 3-d count array, got ndim={arr.ndim}")
    if arr.size == 0:
        raise ValueError("empty count array")
    if np.issubdtype(arr.dtype, np.floating):
        if not np.all(np.isfinite(arr)):
            raise ValueError("counts must be finite")
        if np.any(arr != np.floor(arr)):
            raise ValueError("counts must be integers")
    elif not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"counts must be numeric, got dtype {arr.dtype}")
    if np.any(np.asarray(arr, dtype=np.float64) < 0):
        raise ValueError("counts must be non-negative")
    return arr.astype(np.uint64)


@dataclass(frozen=True)
class CountDataset:
    """Dense (n, d, T) tensor of counts, indexed (subject, process, replicate)."""

    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", as_count_array(self.counts))

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def d(self) -> int:
        return self.counts.shape[1]

    @property
    def T(self) -> int:
        return self.counts.shape[2]

    def subject(self, i: int) -> np.ndarray:
        """The (d, T) count block of subject i."""
        return self.counts[i]


@dataclass(frozen=True)
class ZeroIndicators:
    """Binary tensor marking the non-zero cells of a CountDataset."""

    indicators: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return self.indicators.shape


def compute_zero_indicators(dataset: CountDataset) -> ZeroIndicators:
    """Indicator tensor: 1 where the count is positive, 0 where it is zero."""
    return ZeroIndicators((dataset.counts > 0).astype(np.uint8))
