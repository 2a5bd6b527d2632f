"""Marginal MCMC sampler over nested allocations only.

Component parameters and mixture weights are integrated out; the state is
the nested allocation (c, z) plus one global latent and one latent per
outer cluster. Per-subject updates draw c_i jointly over outer clusters
(with the inner level mixed in), then z_i within the chosen cluster;
latents are refreshed by slice sampling at the end of each sweep and
whenever an inner cluster is created.

Two allocation rules are available for c_i:

* "exact" (default): the cell weights are the exact joint conditional of
  (c_i, z_i) under the augmented model, in which each existing cluster m
  carries the factor u_m / (n_m (1 + u_m)).
* "paper": the normalised-bracket variant in which the inner mixture term
  of cluster m is divided by L_m = n_m + gamma_s + (new-inner weight)
  instead. Kept for comparison; it is not exact (see tests).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from math import lgamma, log, log1p, exp

import numpy as np

from .data import CountDataset
from .errors import NumericError
from .hyperparams import Hyperparams
from .marglik import MarginalLikCalculator
from .trace import ChainTrace
from .conditional import canonicalize_labels

_SLICE_MAX_STEPS = 1000


@dataclass
class MarginalState:
    c: np.ndarray  # (n,) outer allocations, 0-based
    z: np.ndarray  # (n,) inner allocations, 0-based
    u_bar: float = 1.0
    u: list[float] = field(default_factory=list)  # one latent per outer cluster

    @property
    def K(self) -> int:
        return int(self.c.max()) + 1

    def K_m(self, m: int) -> int:
        members = self.c == m
        return int(self.z[members].max()) + 1 if members.any() else 0


class ClusterSuffStats:
    """Incrementally maintained sufficient statistics per cluster.

    Outer level: per (cluster, process) counts of non-zero and zero cells.
    Inner level: per (inner cluster, process) histogram of positive counts,
    from which the positive-count block count and the sum of (y - 1) derive.
    Removal then reinsertion of a subject restores the stats exactly
    (integer arithmetic throughout).
    """

    def __init__(self, dataset: CountDataset):
        counts = dataset.counts.astype(np.int64)
        pos = counts > 0
        self.n, self.d, self.T = counts.shape
        self.sub_n1 = pos.sum(axis=2).astype(np.int64)  # (n, d)
        self.sub_n0 = self.T - self.sub_n1
        self.sub_pos: list[list[dict[int, int]]] = [
            [dict(Counter(counts[i, j, pos[i, j]].tolist())) for j in range(self.d)]
            for i in range(self.n)
        ]
        # canonical multiset keys of each subject's positives, per process
        self.sub_key: list[list[tuple]] = [
            [tuple(sorted(h.items())) for h in row] for row in self.sub_pos
        ]
        self.sizes: list[int] = []
        self.n1: list[np.ndarray] = []
        self.n0: list[np.ndarray] = []
        self.inner_sizes: list[list[int]] = []
        self.inner_hist: list[list[list[dict[int, int]]]] = []
        self.inner_key: list[list[list[tuple]]] = []

    @property
    def K(self) -> int:
        return len(self.sizes)

    def K_m(self, m: int) -> int:
        return len(self.inner_sizes[m])

    @classmethod
    def from_allocations(cls, dataset: CountDataset, c: np.ndarray,
                         z: np.ndarray) -> "ClusterSuffStats":
        stats = cls(dataset)
        c = np.asarray(c)
        z = np.asarray(z)
        for m in range(int(c.max()) + 1):
            members = np.flatnonzero(c == m)
            for s in range(int(z[members].max()) + 1):
                for i in members[z[members] == s]:
                    stats.insert(int(i), m, s)
        return stats

    def insert(self, i: int, m: int, s: int) -> None:
        """Add subject i to outer cluster m / inner cluster s; m == K opens
        a new outer cluster, s == K_m a new inner one."""
        if m == self.K:
            self.sizes.append(0)
            self.n1.append(np.zeros(self.d, dtype=np.int64))
            self.n0.append(np.zeros(self.d, dtype=np.int64))
            self.inner_sizes.append([])
            self.inner_hist.append([])
            self.inner_key.append([])
        if s == len(self.inner_sizes[m]):
            self.inner_sizes[m].append(0)
            self.inner_hist[m].append([{} for _ in range(self.d)])
            self.inner_key[m].append([() for _ in range(self.d)])
        self.sizes[m] += 1
        self.n1[m] += self.sub_n1[i]
        self.n0[m] += self.sub_n0[i]
        self.inner_sizes[m][s] += 1
        for j in range(self.d):
            extra = self.sub_pos[i][j]
            if not extra:
                continue
            hist = self.inner_hist[m][s][j]
            for y, cnt in extra.items():
                hist[y] = hist.get(y, 0) + cnt
            self.inner_key[m][s][j] = tuple(sorted(hist.items()))

    def remove(self, i: int, m: int, s: int) -> tuple[bool, bool]:
        """Remove subject i; returns (inner cluster emptied, outer cluster
        emptied). Emptied slots are deleted (labels above shift down)."""
        self.sizes[m] -= 1
        self.n1[m] -= self.sub_n1[i]
        self.n0[m] -= self.sub_n0[i]
        self.inner_sizes[m][s] -= 1
        for j in range(self.d):
            extra = self.sub_pos[i][j]
            if not extra:
                continue
            hist = self.inner_hist[m][s][j]
            for y, cnt in extra.items():
                left = hist[y] - cnt
                if left:
                    hist[y] = left
                else:
                    del hist[y]
            self.inner_key[m][s][j] = tuple(sorted(hist.items()))
        inner_empty = self.inner_sizes[m][s] == 0
        if inner_empty:
            del self.inner_sizes[m][s]
            del self.inner_hist[m][s]
            del self.inner_key[m][s]
        outer_empty = self.sizes[m] == 0
        if outer_empty:
            del self.sizes[m]
            del self.n1[m]
            del self.n0[m]
            del self.inner_sizes[m]
            del self.inner_hist[m]
            del self.inner_key[m]
        return inner_empty, outer_empty


# ---------------------------------------------------------------------------
# latent full conditionals


def latent_log_density(u: float, n: int, k: int, gamma: float,
                       lam: float) -> float:
    """Unnormalised log density of a cluster latent given n subjects split
    into k clusters (used for both the global latent and per-cluster ones)."""
    if u <= 0:
        return -np.inf
    psi = (1.0 + u) ** -gamma
    return (
        log(lam * psi + k)
        + lam * psi
        + (n - 1) * log(u)
        - (n + k * gamma) * log1p(u)
    )


def slice_sample_log(logf, x0: float, rng: np.random.Generator,
                     width: float = 2.0) -> float:
    """One step-out slice-sampling update of a univariate log density."""
    fx0 = logf(x0)
    if not np.isfinite(fx0):
        raise NumericError("slice sampler started outside the support")
    log_y = fx0 + log(rng.random())
    r = rng.random()
    lo = x0 - r * width
    hi = x0 + (1.0 - r) * width
    steps = 0
    while logf(lo) > log_y:
        lo -= width
        steps += 1
        if steps > _SLICE_MAX_STEPS:
            raise NumericError("slice expansion cap exceeded")
    steps = 0
    while logf(hi) > log_y:
        hi += width
        steps += 1
        if steps > _SLICE_MAX_STEPS:
            raise NumericError("slice expansion cap exceeded")
    for _ in range(_SLICE_MAX_STEPS):
        x1 = lo + rng.random() * (hi - lo)
        if logf(x1) > log_y:
            return x1
        if x1 < x0:
            lo = x1
        else:
            hi = x1
    raise NumericError("slice shrinkage cap exceeded")


def sample_latents(state: MarginalState, h: Hyperparams,
                   rng: np.random.Generator) -> None:
    """Refresh the global latent and every per-cluster latent by slice
    sampling on the log scale."""
    n = state.c.shape[0]
    K = state.K
    state.u_bar = _slice_latent(state.u_bar, n, K, h.gamma_m, h.lambda_m, rng)
    sizes = np.bincount(state.c, minlength=K)
    for m in range(K):
        state.u[m] = _slice_latent(state.u[m], int(sizes[m]), state.K_m(m),
                                   h.gamma_s, h.lambda_s, rng)


def _slice_latent(u0: float, n: int, k: int, gamma: float, lam: float,
                  rng: np.random.Generator) -> float:
    def logf(x):
        return latent_log_density(exp(x), n, k, gamma, lam) + x

    return exp(slice_sample_log(logf, log(u0), rng))


def sample_singleton_latent(gamma: float, lam: float,
                            rng: np.random.Generator) -> float:
    """Exact draw of the latent of a freshly created singleton cluster.

    Under v = (1 + u)^(-gamma) the density becomes (1 + lam v) e^(lam v) on
    (0, 1); rejection-sample it with e^(lam v) as the envelope.
    """
    norm = np.expm1(lam)
    while True:
        v = np.log1p(rng.random() * norm) / lam
        if rng.random() * (1.0 + lam) <= 1.0 + lam * v:
            return float(v ** (-1.0 / gamma) - 1.0)


# ---------------------------------------------------------------------------
# allocation tables


def _betaln(a: float, b: float) -> float:
    return lgamma(a) + lgamma(b) - lgamma(a + b)


def _new_cluster_logweight(u: float, k: int, gamma: float, lam: float) -> float:
    """Log predictive weight of opening a fresh cluster, given the latent u
    and k existing clusters."""
    grow = (1.0 + u) ** gamma
    return (
        log(lam + (k + 1) * grow)
        - log(lam + k * grow)
        + log(lam * gamma)
        - gamma * log1p(u)
    )


def _merged_key(hist: dict[int, int], extra: dict[int, int]) -> tuple:
    merged = dict(hist)
    for y, cnt in extra.items():
        merged[y] = merged.get(y, 0) + cnt
    return tuple(sorted(merged.items()))


def _bern_delta(calc: MarginalLikCalculator, n1: int, n0: int,
                e1: int, e0: int) -> float:
    """Log ratio of Bernoulli-block marginals after adding (e1, e0)."""
    a, b = calc.alpha, calc.beta
    return _betaln(a + n1 + e1, b + n0 + e0) - _betaln(a + n1, b + n0)


def _single_nb(i: int, stats: ClusterSuffStats, calc: MarginalLikCalculator,
               rng) -> float:
    total = 0.0
    for j in range(stats.d):
        key = stats.sub_key[i][j]
        if key:
            total += calc.nb_key(key, rng=rng)
    return total


def _inner_cells(i: int, m: int, state: MarginalState,
                 stats: ClusterSuffStats, calc: MarginalLikCalculator,
                 h: Hyperparams, rng) -> tuple[np.ndarray, float]:
    """Log weights of the inner cells of cluster m for subject i: one per
    existing inner cluster plus the new-inner cell (last). Also returns the
    new-inner predictive weight on the log scale."""
    K_m = stats.K_m(m)
    single = _single_nb(i, stats, calc, rng)
    cells = np.empty(K_m + 1)
    for s in range(K_m):
        delta = 0.0
        for j in range(stats.d):
            extra = stats.sub_pos[i][j]
            if not extra:
                continue
            hist = stats.inner_hist[m][s][j]
            delta += calc.nb_key(_merged_key(hist, extra), rng=rng) \
                - calc.nb_key(stats.inner_key[m][s][j], rng=rng)
        cells[s] = log(stats.inner_sizes[m][s] + h.gamma_s) + delta
    log_new = _new_cluster_logweight(state.u[m], K_m, h.gamma_s, h.lambda_s)
    cells[K_m] = log_new + single
    return cells, log_new


def _subject_tables(i: int, state: MarginalState, stats: ClusterSuffStats,
                    h: Hyperparams, calc: MarginalLikCalculator,
                    rng=None, rule: str = "exact"
                    ) -> tuple[np.ndarray, list[np.ndarray]]:
    """c_i log-weight table plus the per-cluster inner-cell tables it was
    built from (reused for the subsequent z_i draw)."""
    K = stats.K
    out = np.empty(K + 1)
    single_bern = 0.0
    for j in range(stats.d):
        single_bern += _bern_delta(calc, 0, 0, int(stats.sub_n1[i, j]),
                                   int(stats.sub_n0[i, j]))
    single_nb = _single_nb(i, stats, calc, rng)
    inner_tables = []
    for m in range(K):
        bern = 0.0
        for j in range(stats.d):
            bern += _bern_delta(calc, int(stats.n1[m][j]), int(stats.n0[m][j]),
                                int(stats.sub_n1[i, j]), int(stats.sub_n0[i, j]))
        cells, log_new = _inner_cells(i, m, state, stats, calc, h, rng)
        inner_tables.append(cells)
        mix = _logsumexp(cells)
        n_m = stats.sizes[m]
        u_m = state.u[m]
        if rule == "exact":
            mix_scale = log(u_m) - log(n_m) - log1p(u_m)
        elif rule == "paper":
            mix_scale = -np.logaddexp(log_new, log(n_m + h.gamma_s))
        else:
            raise ValueError(f"unknown allocation rule {rule!r}")
        out[m] = log(n_m + h.gamma_m) + bern + mix + mix_scale
    out[K] = (
        _new_cluster_logweight(state.u_bar, K, h.gamma_m, h.lambda_m)
        + single_bern
        + single_nb
    )
    return out, inner_tables


def c_allocation_table(i: int, state: MarginalState, stats: ClusterSuffStats,
                       h: Hyperparams, calc: MarginalLikCalculator,
                       rng=None, rule: str = "exact") -> np.ndarray:
    """Unnormalised log weights for c_i: one entry per existing cluster
    plus the new-cluster cell (last). `stats` must exclude subject i."""
    return _subject_tables(i, state, stats, h, calc, rng=rng, rule=rule)[0]


def z_allocation_table(i: int, m: int, state: MarginalState,
                       stats: ClusterSuffStats, h: Hyperparams,
                       calc: MarginalLikCalculator, rng=None) -> np.ndarray:
    """Unnormalised log weights for z_i within cluster m (last cell = new
    inner cluster). `stats` must exclude subject i."""
    cells, _ = _inner_cells(i, m, state, stats, calc, h, rng)
    return cells


def _logsumexp(a: np.ndarray) -> float:
    top = a.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(a - top).sum()))


def _draw_from_log_table(logw: np.ndarray, rng: np.random.Generator) -> int:
    top = logw.max()
    if not np.isfinite(top):
        raise NumericError("allocation table underflowed")
    prob = np.exp(logw - top)
    cdf = np.cumsum(prob)
    return int((cdf < rng.random() * cdf[-1]).sum())


def sample_c_i(i: int, state: MarginalState, stats: ClusterSuffStats,
               h: Hyperparams, calc: MarginalLikCalculator,
               rng: np.random.Generator, rule: str = "exact") -> int:
    """Draw c_i (subject i detached). On a new-cluster draw, a fresh latent
    is appended to the state."""
    logw = c_allocation_table(i, state, stats, h, calc, rng=rng, rule=rule)
    m = _draw_from_log_table(logw, rng)
    if m == stats.K:
        state.u.append(sample_singleton_latent(h.gamma_s, h.lambda_s, rng))
    return m


def sample_z_i(i: int, m: int, state: MarginalState, stats: ClusterSuffStats,
               h: Hyperparams, calc: MarginalLikCalculator,
               rng: np.random.Generator) -> int:
    """Draw z_i within cluster m (subject i detached)."""
    logw = z_allocation_table(i, m, state, stats, h, calc, rng=rng)
    return _draw_from_log_table(logw, rng)


# ---------------------------------------------------------------------------
# sweep and chain driver


def _detach_subject(state: MarginalState, stats: ClusterSuffStats,
                    i: int) -> None:
    m, s = int(state.c[i]), int(state.z[i])
    inner_empty, outer_empty = stats.remove(i, m, s)
    if inner_empty:
        mask = (state.c == m) & (state.z > s)
        state.z[mask] -= 1
    if outer_empty:
        state.c[state.c > m] -= 1
        del state.u[m]
    state.c[i] = -1
    state.z[i] = -1


def sweep(state: MarginalState, stats: ClusterSuffStats, h: Hyperparams,
          calc: MarginalLikCalculator, rng: np.random.Generator,
          rule: str = "exact") -> MarginalState:
    """One pass of per-subject (c_i, z_i) updates followed by the latent
    refresh. Latents of a cluster are also refreshed whenever a new inner
    cluster is created inside it."""
    n = state.c.shape[0]
    for i in range(n):
        _detach_subject(state, stats, i)
        logw, inner_tables = _subject_tables(i, state, stats, h, calc,
                                             rng=rng, rule=rule)
        m = _draw_from_log_table(logw, rng)
        if m == stats.K:
            s = 0
            created_inner = False
            state.u.append(sample_singleton_latent(h.gamma_s, h.lambda_s, rng))
        else:
            s = _draw_from_log_table(inner_tables[m], rng)
            created_inner = s == stats.K_m(m)
        stats.insert(i, m, s)
        state.c[i] = m
        state.z[i] = s
        if created_inner:
            state.u[m] = _slice_latent(state.u[m], stats.sizes[m],
                                       stats.K_m(m), h.gamma_s, h.lambda_s,
                                       rng)
    sample_latents(state, h, rng)
    return state


def log_marglik_from_stats(stats: ClusterSuffStats,
                           calc: MarginalLikCalculator, rng=None) -> float:
    """log M(y | c, z) assembled from the current cluster statistics."""
    total = 0.0
    for m in range(stats.K):
        for j in range(stats.d):
            total += calc.bern(int(stats.n1[m][j]), int(stats.n0[m][j]))
        for s in range(stats.K_m(m)):
            for j in range(stats.d):
                hist = stats.inner_hist[m][s][j]
                if hist:
                    total += calc.nb(hist, rng=rng)
    return total


def init_state(dataset: CountDataset, h: Hyperparams,
               rng: np.random.Generator) -> MarginalState:
    groups = min(dataset.n, int(np.ceil(h.lambda_m)) + 1)
    c = canonicalize_labels(rng.integers(0, groups, size=dataset.n))
    K = int(c.max()) + 1
    return MarginalState(
        c=c,
        z=np.zeros(dataset.n, dtype=np.int64),
        u_bar=1.0,
        u=[1.0] * K,
    )


def run_chain(dataset: CountDataset, h: Hyperparams, iters: int,
              burnin: int = 0, thin: int = 1, seed: int = 0,
              m_nb_mode: str = "truncated", m_nb_samples: int = 100,
              rule: str = "exact") -> ChainTrace:
    """Run the marginal sampler and collect an allocation trace."""
    h.require_valid()
    if not iters > burnin >= 0:
        raise ValueError("need iters > burnin >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = np.random.default_rng(seed)
    state = init_state(dataset, h, rng)
    stats = ClusterSuffStats.from_allocations(dataset, state.c, state.z)
    calc = MarginalLikCalculator(h.eta, h.lam, h.zeta, h.alpha, h.beta,
                                 mode=m_nb_mode, nsamples=m_nb_samples)
    trace = ChainTrace(
        algorithm="marginal", n=dataset.n, d=dataset.d, T=dataset.T,
        meta={"iters": iters, "burnin": burnin, "thin": thin, "seed": seed,
              "m_nb_mode": m_nb_mode, "m_nb_samples": m_nb_samples,
              "rule": rule, "hyperparams": h.to_dict()},
    )
    try:
        for it in range(1, iters + 1):
            sweep(state, stats, h, calc, rng, rule=rule)
            if it > burnin and (it - burnin) % thin == 0:
                K = state.K
                trace.records.append({
                    "K": K,
                    "Km": [state.K_m(m) for m in range(K)],
                    "c": state.c.tolist(),
                    "z": state.z.tolist(),
                    "u_bar": state.u_bar,
                    "u": list(state.u),
                    "log_marglik": log_marglik_from_stats(stats, calc, rng=rng),
                })
    except KeyboardInterrupt:
        trace.meta["interrupted"] = True
    return trace
