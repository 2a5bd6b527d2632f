"""Forward simulator of the generative model, with named presets carrying
known nested ground truth for recovery tests.

Ground-truth zero probabilities may sit on the boundary {0, 1} to build
sharply separated test scenarios; the samplers themselves never produce
boundary values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CountDataset


@dataclass(frozen=True)
class GroundTruth:
    """Complete specification of one simulated scenario."""

    outer_weights: np.ndarray          # (K,)
    p_star: np.ndarray                 # (K, d), entries in [0, 1]
    inner_weights: list                # per outer: (S_m,)
    r_star: list                       # per outer: (S_m, d) positive ints
    theta_star: list                   # per outer: (S_m, d) in (0, 1)
    n: int
    d: int
    T: int

    def __post_init__(self):
        w = np.asarray(self.outer_weights, dtype=np.float64)
        p = np.asarray(self.p_star, dtype=np.float64)
        if not np.isclose(w.sum(), 1.0):
            raise ValueError("outer weights must sum to 1")
        if p.shape != (w.size, self.d):
            raise ValueError("p_star must be (num outer, d)")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("p_star entries must lie in [0, 1]")
        if not (len(self.inner_weights) == len(self.r_star)
                == len(self.theta_star) == w.size):
            raise ValueError("per-outer lists must have one entry per cluster")
        object.__setattr__(self, "outer_weights", w)
        object.__setattr__(self, "p_star", p)
        object.__setattr__(
            self, "inner_weights",
            [np.asarray(q, dtype=np.float64) for q in self.inner_weights])
        object.__setattr__(
            self, "r_star", [np.asarray(r, dtype=np.int64) for r in self.r_star])
        object.__setattr__(
            self, "theta_star",
            [np.asarray(t, dtype=np.float64) for t in self.theta_star])
        for m, q in enumerate(self.inner_weights):
            if not np.isclose(q.sum(), 1.0):
                raise ValueError(f"inner weights of cluster {m} must sum to 1")
            if self.r_star[m].shape != (q.size, self.d):
                raise ValueError(f"r_star[{m}] must be (S_m, d)")
            if self.theta_star[m].shape != (q.size, self.d):
                raise ValueError(f"theta_star[{m}] must be (S_m, d)")

    @property
    def num_outer(self) -> int:
        return self.outer_weights.size


def sample_hurdle_counts(p: np.ndarray, r: np.ndarray, theta: np.ndarray,
                         T: int, rng: np.random.Generator) -> np.ndarray:
    """Draw (n, d, T) counts given per-subject hurdle parameter matrices
    (each (n, d)): zero w.p. 1 - p, otherwise 1 + NB(r, theta)."""
    n, d = p.shape
    nonzero = rng.random((n, d, T)) < p[:, :, None]
    r_full = np.broadcast_to(r[:, :, None], (n, d, T))
    th_full = np.broadcast_to(theta[:, :, None], (n, d, T))
    # negative_binomial rejects p=1 style degeneracies only via r/theta
    # bounds; theta in (0,1) and r >= 1 always hold here
    positive = 1 + rng.negative_binomial(r_full, 1.0 - th_full)
    return np.where(nonzero, positive, 0).astype(np.int64)


def generate(truth: GroundTruth, rng: np.random.Generator
             ) -> tuple[CountDataset, np.ndarray, np.ndarray]:
    """Simulate one dataset; returns (dataset, outer labels, inner labels),
    labels 0-based."""
    n, d, T = truth.n, truth.d, truth.T
    c = rng.choice(truth.num_outer, size=n, p=truth.outer_weights)
    z = np.empty(n, dtype=np.int64)
    for m in range(truth.num_outer):
        members = np.flatnonzero(c == m)
        z[members] = rng.choice(truth.inner_weights[m].size,
                                size=members.size, p=truth.inner_weights[m])
    p = truth.p_star[c]
    r = np.stack([truth.r_star[c[i]][z[i]] for i in range(n)])
    theta = np.stack([truth.theta_star[c[i]][z[i]] for i in range(n)])
    # clamp the NB draw away from the boundary; cells with p = 0 never use it
    safe_theta = np.clip(theta, 1e-12, 1 - 1e-12)
    counts = sample_hurdle_counts(p, r, safe_theta, T, rng)
    return CountDataset(counts), c.astype(np.int64), z


def standard_scenarios() -> dict[str, GroundTruth]:
    """Named presets used by the recovery tests and the CLI simulator."""
    three_outer = GroundTruth(
        outer_weights=[0.4, 0.35, 0.25],
        p_star=[
            [0.15, 0.10, 0.15, 0.10, 0.15, 0.10, 0.15],
            [0.85, 0.90, 0.85, 0.90, 0.85, 0.90, 0.85],
            [0.85, 0.90, 0.85, 0.60, 0.60, 0.60, 0.85],
        ],
        inner_weights=[[0.6, 0.4], [1.0], [1.0]],
        r_star=[
            [[2] * 7, [3] * 7],
            [[4] * 7],
            [[1] * 7],
        ],
        theta_star=[
            [[0.25] * 7, [0.75] * 7],
            [[0.5] * 7],
            [[0.4] * 7],
        ],
        n=150, d=7, T=7,
    )
    single_cluster = GroundTruth(
        outer_weights=[1.0],
        p_star=[[0.5, 0.5, 0.5, 0.5]],
        inner_weights=[[1.0]],
        r_star=[[[2] * 4]],
        theta_star=[[[0.5] * 4]],
        n=100, d=4, T=4,
    )
    nested_heavy = GroundTruth(
        outer_weights=[1.0],
        p_star=[[0.7, 0.7, 0.7, 0.7, 0.7]],
        inner_weights=[[0.3, 0.3, 0.2, 0.2]],
        r_star=[[[1] * 5, [2] * 5, [4] * 5, [8] * 5]],
        theta_star=[[[0.1] * 5, [0.4] * 5, [0.7] * 5, [0.9] * 5]],
        n=120, d=5, T=5,
    )
    return {
        "three-outer": three_outer,
        "single-cluster": single_cluster,
        "nested-heavy": nested_heavy,
    }
