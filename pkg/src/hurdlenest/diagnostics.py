"""Chain-quality metrics: effective sample size and integrated
autocorrelation time.

IAT = 1 + 2 sum_k rho_k with Geyer's initial-positive-sequence truncation:
autocorrelations are summed in adjacent pairs (rho_0 + rho_1), (rho_2 +
rho_3), ... and the sum stops at the first non-positive pair. ESS = N / IAT.
Both are undefined (None) for constant series.
"""

from __future__ import annotations

import numpy as np


def _autocorrelations(x: np.ndarray) -> np.ndarray:
    """Biased (1/N) empirical autocorrelations via FFT, lags 0..N-1."""
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n] / n
    return acov / acov[0]


def iat(series) -> float | None:
    """Integrated autocorrelation time with initial-positive-sequence
    truncation; None for constant input."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 10:
        raise ValueError("need a 1-d series of length >= 10")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    if np.ptp(x) == 0.0:
        return None
    rho = _autocorrelations(x)
    total = 0.0
    for t in range(0, x.size - 1, 2):
        pair = rho[t] + rho[t + 1]
        if t > 0 and pair <= 0.0:
            break
        total += pair
    return float(2.0 * total - 1.0)


def ess(series) -> float | None:
    """Effective sample size N / IAT; None when the IAT is undefined or
    non-positive (constant or pathologically antithetic series)."""
    x = np.asarray(series, dtype=np.float64)
    value = iat(x)
    if value is None or value <= 1e-12:
        return None
    return float(x.size / value)
