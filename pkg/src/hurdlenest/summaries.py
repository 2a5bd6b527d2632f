"""Posterior partition summaries: co-clustering matrices, Binder-loss point
estimates, cluster-count posteriors, and per-cluster pmf estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import average, leaves_list
from scipy.spatial.distance import squareform

from .kernels import log_shifted_nb_pmf
from .trace import ChainTrace


@dataclass(frozen=True)
class CoClusteringMatrix:
    """Pairwise posterior same-cluster frequencies (symmetric, unit
    diagonal). level is "outer" or "inner" (same inner cluster within the
    same outer cluster)."""

    psm: np.ndarray
    level: str


@dataclass(frozen=True)
class NestedPartition:
    """Point-estimate partition with 1-based contiguous labels; inner labels
    are contiguous within each outer block."""

    outer: np.ndarray
    inner: np.ndarray

    def __post_init__(self):
        outer = np.asarray(self.outer, dtype=np.int64)
        inner = np.asarray(self.inner, dtype=np.int64)
        if outer.shape != inner.shape or outer.ndim != 1:
            raise ValueError("outer and inner must be equal-length vectors")
        if set(np.unique(outer)) != set(range(1, outer.max() + 1)):
            raise ValueError("outer labels must be contiguous from 1")
        for m in np.unique(outer):
            block = inner[outer == m]
            if set(np.unique(block)) != set(range(1, block.max() + 1)):
                raise ValueError("inner labels must be contiguous from 1 "
                                 "within each outer block")
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "inner", inner)

    @classmethod
    def from_zero_based(cls, outer: np.ndarray, inner: np.ndarray
                        ) -> "NestedPartition":
        return cls(np.asarray(outer) + 1, np.asarray(inner) + 1)


def _pair_labels(c: np.ndarray, z: np.ndarray) -> np.ndarray:
    return c.astype(np.int64) * (int(z.max()) + 1) + z


def coclustering(trace: ChainTrace, level: str = "outer") -> CoClusteringMatrix:
    """Fraction of kept iterations in which each pair of subjects shares a
    cluster at the given level."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    if level not in ("outer", "inner"):
        raise ValueError(f"unknown level {level!r}")
    n = trace.n
    acc = np.zeros((n, n))
    for rec in trace.records:
        labels = np.asarray(rec["c"], dtype=np.int64)
        if level == "inner":
            labels = _pair_labels(labels, np.asarray(rec["z"], dtype=np.int64))
        acc += labels[:, None] == labels[None, :]
    return CoClusteringMatrix(psm=acc / len(trace), level=level)


def binder_loss(labels: np.ndarray, psm: np.ndarray) -> float:
    """Sum over subject pairs of |1{same cluster} - psm| (equal costs)."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    diff = np.abs(same.astype(np.float64) - psm)
    iu = np.triu_indices(psm.shape[0], k=1)
    return float(diff[iu].sum())


def binder_estimate(psm: np.ndarray, candidates) -> np.ndarray:
    """The candidate partition with minimal posterior-expected Binder loss;
    ties broken by earliest position in the candidate list."""
    best = None
    best_loss = np.inf
    for labels in candidates:
        loss = binder_loss(labels, psm)
        if loss < best_loss - 1e-12:
            best_loss = loss
            best = np.asarray(labels).copy()
    if best is None:
        raise ValueError("no candidate partitions supplied")
    return best


def visited_partitions(trace: ChainTrace, level: str = "outer") -> list[np.ndarray]:
    """Distinct partitions visited by the chain, in first-appearance order."""
    seen = set()
    out = []
    for rec in trace.records:
        labels = np.asarray(rec["c"], dtype=np.int64)
        if level == "inner":
            labels = _pair_labels(labels, np.asarray(rec["z"], dtype=np.int64))
        key = tuple(labels.tolist())
        if key not in seen:
            seen.add(key)
            out.append(labels)
    return out


def cluster_count_posterior(trace: ChainTrace) -> dict[str, dict[int, float]]:
    """Empirical posterior pmfs of the cluster/component counts.

    Keys: "K" always; "M" when the trace records it (conditional chains);
    "total_inner" for the summed inner cluster count.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    out = {"K": _pmf(trace.k_series()),
           "total_inner": _pmf(trace.total_inner_series())}
    if "M" in trace.records[0]:
        out["M"] = _pmf(trace.series("M").astype(np.int64))
    return out


def _pmf(values: np.ndarray) -> dict[int, float]:
    uniq, counts = np.unique(values, return_counts=True)
    return {int(v): float(cnt) / values.size for v, cnt in zip(uniq, counts)}


def cluster_pmf_estimate(trace: ChainTrace, outer_cluster: int, process: int,
                         y_grid: np.ndarray,
                         ci: tuple[float, float] = (2.5, 97.5)):
    """Posterior of the within-cluster pmf of positive counts for one
    process: the inner mixture of shifted-NB components, weighted by the
    allocated inner weights. Returns (mean, lower, upper) over y_grid.

    `outer_cluster` is a 0-based cluster index; iterations in which that
    cluster does not exist are skipped.
    """
    y_grid = np.asarray(y_grid, dtype=np.int64)
    curves = []
    for rec in trace.records:
        if "delta" not in rec:
            raise ValueError("trace does not record component parameters "
                             "(marginal chain?)")
        if outer_cluster >= rec["K"]:
            continue
        delta = np.asarray(rec["delta"][outer_cluster], dtype=np.float64)
        weights = delta / delta.sum()
        pmf = np.zeros(y_grid.shape)
        for s, w in enumerate(weights):
            r = rec["r_star"][outer_cluster][s][process]
            theta = rec["theta_star"][outer_cluster][s][process]
            pmf += w * np.exp(log_shifted_nb_pmf(y_grid, r, theta))
        curves.append(pmf)
    if not curves:
        raise ValueError(f"outer cluster {outer_cluster} absent from trace")
    curves = np.stack(curves)
    return curves.mean(axis=0), np.percentile(curves, ci[0], axis=0), \
        np.percentile(curves, ci[1], axis=0)


def heatmap_order(psm: np.ndarray) -> np.ndarray:
    """Subject ordering for co-clustering heatmaps: leaves of an
    average-linkage hierarchical clustering of 1 - psm."""
    n = psm.shape[0]
    if n == 1:
        return np.array([0])
    dist = 1.0 - psm
    np.fill_diagonal(dist, 0.0)
    dist = np.clip((dist + dist.T) / 2.0, 0.0, None)
    return leaves_list(average(squareform(dist, checks=False)))


def all_partitions(n: int, limit: int = 12):
    """All set partitions of n items as canonical 0-based label vectors
    (restricted-growth strings). Guarded to small n: Bell(12) ~ 4.2e6."""
    if n > limit:
        raise ValueError(f"refusing to enumerate partitions of n={n} > {limit}")
    labels = np.zeros(n, dtype=np.int64)
    maxes = np.zeros(n, dtype=np.int64)
    while True:
        yield labels.copy()
        i = n - 1
        while i > 0 and labels[i] == maxes[i - 1] + 1:
            i -= 1
        if i == 0:
            return
        labels[i] += 1
        maxes[i] = max(maxes[i - 1], labels[i])
        for k in range(i + 1, n):
            labels[k] = 0
            maxes[k] = maxes[i]


def binder_nested(trace: ChainTrace) -> tuple[NestedPartition, float, float]:
    """Nested Binder point estimate from one trace: outer partition first,
    then a blockwise inner minimization within each outer block. Returns
    (partition, outer loss, inner loss)."""
    psm_out = coclustering(trace, "outer").psm
    outer = binder_estimate(psm_out, visited_partitions(trace, "outer"))
    outer_loss = binder_loss(outer, psm_out)

    psm_in = coclustering(trace, "inner").psm
    inner = np.zeros_like(outer)
    inner_loss = 0.0
    inner_visited = visited_partitions(trace, "inner")
    for m in np.unique(outer):
        idx = np.flatnonzero(outer == m)
        sub_psm = psm_in[np.ix_(idx, idx)]
        sub_candidates = [_canonical(lab[idx]) for lab in inner_visited]
        best = binder_estimate(sub_psm, sub_candidates)
        inner_loss += binder_loss(best, sub_psm)
        inner[idx] = best
    return NestedPartition.from_zero_based(_canonical(outer), inner), \
        outer_loss, inner_loss


def _canonical(labels: np.ndarray) -> np.ndarray:
    out = np.empty_like(labels)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out
