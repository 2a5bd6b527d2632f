"""Hurdle / shifted Negative Binomial probability kernels.

All evaluations are carried in log space; probabilities are exponentiated
only by callers at output boundaries. Factorial terms use log-gamma, never
literal factorials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import CountDataset


@dataclass(frozen=True)
class HurdleParams:
    """Parameters of a single hurdle component: P(zero) = 1 - p, positive
    part shifted-NB(r, theta)."""

    p: float
    r: int
    theta: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {self.p}")
        _check_nb_params(self.r, self.theta)


@dataclass(frozen=True)
class ComponentParams:
    """Per-process hurdle parameters of one mixture component (d processes)."""

    p_star: np.ndarray
    r_star: np.ndarray
    theta_star: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p_star, dtype=np.float64))
        r = np.atleast_1d(np.asarray(self.r_star, dtype=np.int64))
        th = np.atleast_1d(np.asarray(self.theta_star, dtype=np.float64))
        if not (p.shape == r.shape == th.shape) or p.ndim != 1:
            raise ValueError("p_star, r_star, theta_star must be equal-length vectors")
        if np.any(p <= 0) or np.any(p >= 1):
            raise ValueError("p_star entries must be in (0, 1)")
        if np.any(r < 1):
            raise ValueError("r_star entries must be >= 1")
        if np.any(th <= 0) or np.any(th >= 1):
            raise ValueError("theta_star entries must be in (0, 1)")
        object.__setattr__(self, "p_star", p)
        object.__setattr__(self, "r_star", r)
        object.__setattr__(self, "theta_star", th)

    @property
    def d(self) -> int:
        return self.p_star.shape[0]


def _check_nb_params(r, theta):
    r = np.asarray(r)
    theta = np.asarray(theta)
    if np.any(r < 1) or np.any(r != np.floor(r)):
        raise ValueError("r must be a positive integer")
    if np.any(theta <= 0.0) or np.any(theta >= 1.0):
        raise ValueError("theta must be in (0, 1)")


def log_shifted_nb_pmf(y, r, theta):
    """Log pmf of the shifted Negative Binomial on {1, 2, ...}.

    g(y | r, theta) = C(y+r-2, y-1) theta^(y-1) (1-theta)^r, evaluated via
    log-gamma. Broadcasts over array arguments.
    """
    y = np.asarray(y)
    _check_nb_params(r, theta)
    if np.any(y < 1):
        raise ValueError("shifted NB support is {1, 2, ...}")
    y = y.astype(np.float64)
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    out = (
        gammaln(y + r - 1.0)
        - gammaln(r)
        - gammaln(y)
        + (y - 1.0) * np.log(theta)
        + r * np.log1p(-theta)
    )
    return out if out.ndim else float(out)


def log_hurdle_pmf(y, params: HurdleParams):
    """Log pmf of the hurdle model: log(1-p) at zero, log p + log g(y) above."""
    y = np.asarray(y)
    if np.any(y < 0):
        raise ValueError("counts must be non-negative")
    pos = y > 0
    out = np.full(y.shape, np.log1p(-params.p), dtype=np.float64)
    if np.any(pos):
        out[pos] = np.log(params.p) + log_shifted_nb_pmf(
            y[pos], params.r, params.theta
        )
    return out if out.ndim else float(out)


def subject_component_loglik(
    dataset: CountDataset, i: int, comp: ComponentParams
) -> float:
    """Log-likelihood of subject i under one component: the hurdle log pmf
    summed over all d processes and T replicates."""
    if comp.d != dataset.d:
        raise ValueError(f"component dimension {comp.d} != dataset d {dataset.d}")
    block = dataset.counts[i].astype(np.int64)  # (d, T)
    total = 0.0
    for j in range(dataset.d):
        total += log_hurdle_pmf(
            block[j],
            HurdleParams(
                p=float(comp.p_star[j]),
                r=int(comp.r_star[j]),
                theta=float(comp.theta_star[j]),
            ),
        ).sum()
    return float(total)
