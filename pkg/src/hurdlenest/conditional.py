"""Conditional MCMC sampler for the enriched hurdle mixture.

One sweep cycles through the full conditionals of the complete parameter
state: joint (outer, inner) allocations, relabeling so that allocated
components come first, the global latent, the number of outer components,
unnormalised weights, and component parameters, with unallocated components
refreshed from their priors.

Outer/inner labels are 0-based internally; serialization keeps that
convention (see the trace schema in the README).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import CountDataset
from .errors import NumericError
from .hyperparams import (
    Hyperparams,
    log_shifted_poisson_pmf,
    sample_p_from_prior,
    sample_r_from_prior,
    sample_shifted_poisson,
    sample_theta_from_prior,
)
from .trace import ChainTrace

_NUM_COMP_TAIL = 1e-12
_NUM_COMP_CAP = 1_000_000
_R_TAIL = 1e-10
_R_CAP = 100_000


# ---------------------------------------------------------------------------
# state containers


@dataclass
class InnerComponent:
    delta: float
    r_star: np.ndarray  # (d,) positive ints
    theta_star: np.ndarray  # (d,) in (0, 1)


@dataclass
class OuterComponent:
    gamma_w: float
    p_star: np.ndarray  # (d,) in (0, 1)
    inner: list[InnerComponent]
    u_m: float | None = None  # latent, defined while the component is allocated

    @property
    def S(self) -> int:
        return len(self.inner)


@dataclass
class ConditionalState:
    components: list[OuterComponent]
    c: np.ndarray  # (n,) outer allocations, 0-based
    z: np.ndarray  # (n,) inner allocations, 0-based
    u_bar: float = 1.0

    @property
    def M(self) -> int:
        return len(self.components)

    @property
    def K(self) -> int:
        return int(self.c.max()) + 1

    def K_m(self, m: int) -> int:
        members = self.c == m
        if not members.any():
            return 0
        return int(self.z[members].max()) + 1

    def check_invariants(self):
        """Raise if the canonical-labeling invariants are violated."""
        K = self.K
        if K > self.M:
            raise AssertionError("K exceeds M")
        if set(np.unique(self.c)) != set(range(K)):
            raise AssertionError("outer labels not contiguous from 0")
        for m in range(K):
            members = self.c == m
            km = self.K_m(m)
            if km > self.components[m].S:
                raise AssertionError("K_m exceeds S_m")
            if set(np.unique(self.z[members])) != set(range(km)):
                raise AssertionError("inner labels not contiguous from 0")


# ---------------------------------------------------------------------------
# per-dataset precomputed features


class _Features:
    """Sufficient statistics of the dataset reused across sweeps."""

    def __init__(self, dataset: CountDataset):
        counts = dataset.counts.astype(np.int64)  # (n, d, T)
        pos = counts > 0
        self.n, self.d, self.T = counts.shape
        self.n_pos = pos.sum(axis=2)  # (n, d) positive replicates
        self.n_zero = self.T - self.n_pos
        self.sum_ym1 = np.where(pos, counts - 1, 0).sum(axis=2)  # (n, d)
        subj, proc, _ = np.nonzero(pos)
        self.pos_subj = subj
        self.pos_proc = proc
        self.pos_y = counts[pos].astype(np.float64)
        # per-subject constant of the positive part: -sum log((y-1)!)
        self.const = -np.bincount(
            subj, weights=gammaln(self.pos_y), minlength=self.n
        )

    def positives(self, members: np.ndarray, j: int) -> np.ndarray:
        """Positive counts of the given subjects for process j."""
        mask = np.isin(self.pos_subj, members) & (self.pos_proc == j)
        return self.pos_y[mask]


def _nb_cell_loglik(feats: _Features, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Per-subject log-likelihood of the positive parts under one inner
    component, excluding the per-subject constant. Returns (n,)."""
    a = -gammaln(r.astype(np.float64)) + r * np.log1p(-theta)  # (d,)
    out = feats.n_pos @ a + feats.sum_ym1 @ np.log(theta)
    lg = gammaln(feats.pos_y + r[feats.pos_proc] - 1.0)
    out += np.bincount(feats.pos_subj, weights=lg, minlength=feats.n)
    return out


def _bern_loglik_matrix(feats: _Features, p_star: np.ndarray) -> np.ndarray:
    """(n, M) matrix of zero/non-zero pattern log-likelihoods."""
    return feats.n_pos @ np.log(p_star).T + feats.n_zero @ np.log1p(-p_star).T


def total_loglik(state: ConditionalState, dataset: CountDataset,
                 feats: _Features | None = None) -> float:
    """Data log-likelihood under the current allocations and parameters."""
    if feats is None:
        feats = _Features(dataset)
    total = float(feats.const.sum())
    for m in range(state.K):
        members = np.flatnonzero(state.c == m)
        comp = state.components[m]
        total += float(
            (feats.n_pos[members] @ np.log(comp.p_star)).sum()
            + (feats.n_zero[members] @ np.log1p(-comp.p_star)).sum()
        )
        for s in range(state.K_m(m)):
            sub = members[state.z[members] == s]
            inner = comp.inner[s]
            r = inner.r_star.astype(np.float64)
            theta = inner.theta_star
            total += float(
                (feats.n_pos[sub] @ (-gammaln(r) + r * np.log1p(-theta))).sum()
                + (feats.sum_ym1[sub] @ np.log(theta)).sum()
            )
            mask = np.isin(feats.pos_subj, sub)
            total += float(
                gammaln(feats.pos_y[mask] + r[feats.pos_proc[mask]] - 1.0).sum()
            )
    return total


# ---------------------------------------------------------------------------
# full conditionals


def sample_allocations(state: ConditionalState, dataset: CountDataset,
                       rng: np.random.Generator,
                       feats: _Features | None = None) -> None:
    """Draw each (c_i, z_i) jointly from the normalised table over all
    (component, inner component) pairs, in log space.

    Cell weight: Gamma_m * (Delta_ms / sum_s' Delta_ms') * likelihood. The
    inner weights enter normalised per component -- their normaliser varies
    across components and does not cancel from the joint table.
    """
    if feats is None:
        feats = _Features(dataset)
    cells = [(m, s) for m, comp in enumerate(state.components)
             for s in range(comp.S)]
    p_star = np.stack([comp.p_star for comp in state.components])
    bern = _bern_loglik_matrix(feats, p_star)  # (n, M)
    delta_norm = [sum(ic.delta for ic in comp.inner)
                  for comp in state.components]
    table = np.empty((feats.n, len(cells)))
    for k, (m, s) in enumerate(cells):
        comp = state.components[m]
        inner = comp.inner[s]
        table[:, k] = (
            np.log(comp.gamma_w)
            + np.log(inner.delta)
            - np.log(delta_norm[m])
            + bern[:, m]
            + _nb_cell_loglik(feats, inner.r_star, inner.theta_star)
        )
    top = table.max(axis=1)
    if not np.all(np.isfinite(top)):
        raise NumericError("allocation table underflowed for some subject")
    prob = np.exp(table - top[:, None])
    cdf = np.cumsum(prob, axis=1)
    u = rng.random(feats.n) * cdf[:, -1]
    choice = (cdf < u[:, None]).sum(axis=1)
    cell_m = np.array([m for m, _ in cells])
    cell_s = np.array([s for _, s in cells])
    state.c = cell_m[choice]
    state.z = cell_s[choice]


def sample_inner_allocations(state: ConditionalState, dataset: CountDataset,
                             rng: np.random.Generator,
                             feats: _Features | None = None) -> None:
    """Redraw z only, keeping c fixed (fixed-outer mode)."""
    if feats is None:
        feats = _Features(dataset)
    new_z = state.z.copy()
    for m in range(state.K):
        members = np.flatnonzero(state.c == m)
        comp = state.components[m]
        table = np.empty((members.size, comp.S))
        for s, inner in enumerate(comp.inner):
            table[:, s] = np.log(inner.delta) + _nb_cell_loglik(
                feats, inner.r_star, inner.theta_star
            )[members]
        top = table.max(axis=1)
        if not np.all(np.isfinite(top)):
            raise NumericError("inner allocation table underflowed")
        prob = np.exp(table - top[:, None])
        cdf = np.cumsum(prob, axis=1)
        u = rng.random(members.size) * cdf[:, -1]
        new_z[members] = (cdf < u[:, None]).sum(axis=1)
    state.z = new_z


def relabel(state: ConditionalState) -> None:
    """Move allocated outer components to the front (preserving relative
    order), then allocated inner components within each; reindex c and z."""
    M = state.M
    used = np.zeros(M, dtype=bool)
    used[np.unique(state.c)] = True
    order = np.concatenate([np.flatnonzero(used), np.flatnonzero(~used)])
    inv = np.empty(M, dtype=np.int64)
    inv[order] = np.arange(M)
    state.components = [state.components[m] for m in order]
    state.c = inv[state.c]
    for m in range(int(used.sum())):
        comp = state.components[m]
        members = np.flatnonzero(state.c == m)
        used_s = np.zeros(comp.S, dtype=bool)
        used_s[np.unique(state.z[members])] = True
        order_s = np.concatenate([np.flatnonzero(used_s), np.flatnonzero(~used_s)])
        inv_s = np.empty(comp.S, dtype=np.int64)
        inv_s[order_s] = np.arange(comp.S)
        comp.inner = [comp.inner[s] for s in order_s]
        state.z[members] = inv_s[state.z[members]]


def sample_u_bar(state: ConditionalState, rng: np.random.Generator) -> float:
    """Global latent: Gamma(n, sum of outer weights)."""
    total = sum(comp.gamma_w for comp in state.components)
    return float(rng.gamma(state.c.shape[0], 1.0 / total))


def psi_gamma(u: float, gamma: float) -> float:
    """Laplace transform of the Gamma(gamma, 1) weight prior at u."""
    return float((1.0 + u) ** -gamma)


def sample_num_components(k: int, psi_u: float, lam: float,
                          rng: np.random.Generator) -> int:
    """Total number of components given k allocated ones: k + x with
    x ~ q_x propto (x+k)!/x! psi^x q(k+x), q the shifted-Poisson prior."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < psi_u <= 1.0:
        raise ValueError("psi_u must be in (0, 1]")
    log_psi = np.log(psi_u)
    logs = []
    total = -np.inf
    x_lo = 0
    block = 64
    while x_lo < _NUM_COMP_CAP:
        x = np.arange(x_lo, min(x_lo + block, _NUM_COMP_CAP), dtype=np.float64)
        lt = (
            gammaln(x + k + 1.0)
            - gammaln(x + 1.0)
            + x * log_psi
            + log_shifted_poisson_pmf(x + k, lam)
        )
        logs.append(lt)
        total = np.logaddexp(total, _logsumexp(lt))
        ratio = np.exp(lt[-1] - lt[-2]) if lt.size >= 2 else np.inf
        if ratio < 1.0:
            log_tail = lt[-1] + np.log(ratio) - np.log1p(-ratio)
            if log_tail < total + np.log(_NUM_COMP_TAIL):
                break
        x_lo += block
    else:
        raise NumericError("number-of-components series hit the term cap")
    lt = np.concatenate(logs)
    prob = np.exp(lt - lt.max())
    cdf = np.cumsum(prob)
    x = int((cdf < rng.random() * cdf[-1]).sum())
    return k + x


def _logsumexp(a: np.ndarray) -> float:
    top = a.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(a - top).sum()))


def sample_outer_weights(state: ConditionalState, u_bar: float,
                         h: Hyperparams, rng: np.random.Generator) -> None:
    """Gamma(gamma_m + n_m, 1 + u_bar) for every component (n_m = 0 beyond K)."""
    sizes = np.bincount(state.c, minlength=state.M)
    scale = 1.0 / (1.0 + u_bar)
    for m, comp in enumerate(state.components):
        comp.gamma_w = float(rng.gamma(h.gamma_m + sizes[m], scale))


def update_p_star(state: ConditionalState, dataset: CountDataset,
                  h: Hyperparams, rng: np.random.Generator, m: int,
                  feats: _Features | None = None) -> None:
    """Beta-Bernoulli conjugate update of the zero-pattern probabilities."""
    if feats is None:
        feats = _Features(dataset)
    members = np.flatnonzero(state.c == m)
    n1 = feats.n_pos[members].sum(axis=0)
    n0 = feats.n_zero[members].sum(axis=0)
    state.components[m].p_star = rng.beta(h.alpha + n1, h.beta + n0)


def update_theta_star(state: ConditionalState, dataset: CountDataset,
                      h: Hyperparams, rng: np.random.Generator,
                      m: int, s: int, feats: _Features | None = None) -> None:
    """Conjugate Beta update of theta given the current r."""
    if feats is None:
        feats = _Features(dataset)
    members = np.flatnonzero((state.c == m) & (state.z == s))
    a = feats.sum_ym1[members].sum(axis=0)
    n_plus = feats.n_pos[members].sum(axis=0)
    r = state.components[m].inner[s].r_star
    state.components[m].inner[s].theta_star = rng.beta(
        h.eta + a, h.lam + r * n_plus
    )


def _sample_r_conditional(ys: np.ndarray, n_plus: int, theta: float,
                          zeta: float, rng: np.random.Generator) -> int:
    """Exact draw of r from its discrete full conditional by adaptive
    enumeration (tail bound 1e-10, hard cap 1e5)."""
    c_geo = np.log1p(-zeta)
    c_th = n_plus * np.log1p(-theta)
    logs = []
    total = -np.inf
    r_lo = 1
    block = 64
    while r_lo <= _R_CAP:
        r = np.arange(r_lo, min(r_lo + block, _R_CAP + 1), dtype=np.float64)
        lt = (r - 1.0) * c_geo + r * c_th - ys.size * gammaln(r)
        if ys.size:
            lt += gammaln(ys[:, None] + r[None, :] - 1.0).sum(axis=0)
        logs.append(lt)
        total = np.logaddexp(total, _logsumexp(lt))
        ratio = np.exp(lt[-1] - lt[-2]) if lt.size >= 2 else np.inf
        if ratio < 1.0:
            log_tail = lt[-1] + np.log(ratio) - np.log1p(-ratio)
            if log_tail < total + np.log(_R_TAIL):
                break
        r_lo += block
    else:
        raise NumericError("r full conditional hit the enumeration cap")
    lt = np.concatenate(logs)
    prob = np.exp(lt - lt.max())
    cdf = np.cumsum(prob)
    return int((cdf < rng.random() * cdf[-1]).sum()) + 1


def update_r_star(state: ConditionalState, dataset: CountDataset,
                  h: Hyperparams, rng: np.random.Generator,
                  m: int, s: int, feats: _Features | None = None) -> None:
    """Exact discrete update of r, process by process."""
    if feats is None:
        feats = _Features(dataset)
    members = np.flatnonzero((state.c == m) & (state.z == s))
    inner = state.components[m].inner[s]
    n_plus = feats.n_pos[members].sum(axis=0)
    r_new = np.empty(feats.d, dtype=np.int64)
    for j in range(feats.d):
        ys = feats.positives(members, j)
        r_new[j] = _sample_r_conditional(
            ys, int(n_plus[j]), float(inner.theta_star[j]), h.zeta, rng
        )
    inner.r_star = r_new


def update_inner_block(state: ConditionalState, dataset: CountDataset,
                       h: Hyperparams, rng: np.random.Generator, m: int,
                       feats: _Features | None = None) -> None:
    """Latent, size, weights, and component parameters of the m-th inner
    mixture (m allocated): u_m, S_m, Delta, then (r*, theta*)."""
    if feats is None:
        feats = _Features(dataset)
    comp = state.components[m]
    members = np.flatnonzero(state.c == m)
    n_m = members.size
    K_m = state.K_m(m)

    comp.u_m = float(rng.gamma(n_m, 1.0 / sum(ic.delta for ic in comp.inner)))
    S_m = sample_num_components(K_m, psi_gamma(comp.u_m, h.gamma_s),
                                h.lambda_s, rng)
    sizes = np.bincount(state.z[members], minlength=S_m)
    scale = 1.0 / (1.0 + comp.u_m)
    inner = []
    for s in range(S_m):
        if s < K_m:
            keep = comp.inner[s]
            keep.delta = float(rng.gamma(h.gamma_s + sizes[s], scale))
            inner.append(keep)
        else:
            inner.append(InnerComponent(
                delta=float(rng.gamma(h.gamma_s, scale)),
                r_star=sample_r_from_prior(h, feats.d, rng),
                theta_star=sample_theta_from_prior(h, feats.d, rng),
            ))
    comp.inner = inner
    for s in range(K_m):
        update_r_star(state, dataset, h, rng, m, s, feats)
        update_theta_star(state, dataset, h, rng, m, s, feats)


def update_unallocated_outer(state: ConditionalState, h: Hyperparams,
                             rng: np.random.Generator, d: int) -> None:
    """Refresh components beyond K from their priors (weights excepted:
    those were drawn in the weight step)."""
    for m in range(state.K, state.M):
        comp = state.components[m]
        comp.p_star = sample_p_from_prior(h, d, rng)
        comp.u_m = None
        S_m = sample_shifted_poisson(h.lambda_s, rng)
        comp.inner = [
            InnerComponent(
                delta=float(rng.gamma(h.gamma_s, 1.0)),
                r_star=sample_r_from_prior(h, d, rng),
                theta_star=sample_theta_from_prior(h, d, rng),
            )
            for _ in range(S_m)
        ]


def sweep(state: ConditionalState, dataset: CountDataset, h: Hyperparams,
          rng: np.random.Generator, fixed_outer: bool = False,
          feats: _Features | None = None) -> ConditionalState:
    """One full pass of the conditional sampler, in place; returns state."""
    if feats is None:
        feats = _Features(dataset)
    if fixed_outer:
        sample_inner_allocations(state, dataset, rng, feats)
    else:
        sample_allocations(state, dataset, rng, feats)
    relabel(state)
    K = state.K
    if not fixed_outer:
        state.u_bar = sample_u_bar(state, rng)
        M = sample_num_components(K, psi_gamma(state.u_bar, h.gamma_m),
                                  h.lambda_m, rng)
        d = feats.d
        if M < state.M:
            state.components = state.components[:M]
        while state.M < M:
            state.components.append(OuterComponent(
                gamma_w=1.0,
                p_star=sample_p_from_prior(h, d, rng),
                inner=[InnerComponent(
                    delta=1.0,
                    r_star=sample_r_from_prior(h, d, rng),
                    theta_star=sample_theta_from_prior(h, d, rng),
                )],
            ))
        sample_outer_weights(state, state.u_bar, h, rng)
    for m in range(K):
        update_p_star(state, dataset, h, rng, m, feats)
        update_inner_block(state, dataset, h, rng, m, feats)
    if not fixed_outer:
        update_unallocated_outer(state, h, rng, feats.d)
    return state


# ---------------------------------------------------------------------------
# initialization and chain driver


def init_state(dataset: CountDataset, h: Hyperparams,
               rng: np.random.Generator,
               fixed_outer: np.ndarray | None = None) -> ConditionalState:
    """Overdispersed-but-valid start: uniform random outer partition into
    min(n, ceil(lambda_m) + 1) groups, all z = 0, parameters from priors."""
    n, d = dataset.n, dataset.d
    if fixed_outer is not None:
        c = canonicalize_labels(np.asarray(fixed_outer, dtype=np.int64))
        if c.shape[0] != n:
            raise ValueError("fixed outer partition length != n")
    else:
        groups = min(n, int(np.ceil(h.lambda_m)) + 1)
        c = canonicalize_labels(rng.integers(0, groups, size=n))
    M = int(c.max()) + 1
    components = []
    for _ in range(M):
        S_m = sample_shifted_poisson(h.lambda_s, rng)
        components.append(OuterComponent(
            gamma_w=float(rng.gamma(h.gamma_m, 1.0)),
            p_star=sample_p_from_prior(h, d, rng),
            inner=[InnerComponent(
                delta=float(rng.gamma(h.gamma_s, 1.0)),
                r_star=sample_r_from_prior(h, d, rng),
                theta_star=sample_theta_from_prior(h, d, rng),
            ) for _ in range(S_m)],
            u_m=1.0,
        ))
    return ConditionalState(
        components=components,
        c=c,
        z=np.zeros(n, dtype=np.int64),
        u_bar=1.0,
    )


def canonicalize_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel to 0..K-1 in order of first appearance."""
    out = np.empty_like(labels)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        out[i] = mapping.setdefault(int(lab), len(mapping))
    return out


def _record(state: ConditionalState, loglik: float,
            log_marglik: float | None) -> dict:
    K = state.K
    rec = {
        "M": state.M,
        "K": K,
        "S": [comp.S for comp in state.components],
        "Km": [state.K_m(m) for m in range(K)],
        "c": state.c.tolist(),
        "z": state.z.tolist(),
        "u_bar": state.u_bar,
        "gamma": [state.components[m].gamma_w for m in range(K)],
        "p_star": [state.components[m].p_star.tolist() for m in range(K)],
        "delta": [
            [state.components[m].inner[s].delta for s in range(state.K_m(m))]
            for m in range(K)
        ],
        "r_star": [
            [state.components[m].inner[s].r_star.tolist()
             for s in range(state.K_m(m))]
            for m in range(K)
        ],
        "theta_star": [
            [state.components[m].inner[s].theta_star.tolist()
             for s in range(state.K_m(m))]
            for m in range(K)
        ],
        "loglik": loglik,
    }
    if log_marglik is not None:
        rec["log_marglik"] = log_marglik
    return rec


def run_chain(dataset: CountDataset, h: Hyperparams, iters: int,
              burnin: int = 0, thin: int = 1, seed: int = 0,
              fixed_outer: np.ndarray | None = None,
              record_marglik: bool = True,
              m_nb_mode: str = "truncated",
              m_nb_samples: int = 100) -> ChainTrace:
    """Run the conditional sampler and collect a trace.

    Records every thin-th iteration after burn-in. When `fixed_outer` is
    given, outer allocations are pinned and the M / outer-weight updates are
    skipped. A KeyboardInterrupt yields the partial trace collected so far.
    """
    h.require_valid()
    if not iters > burnin >= 0:
        raise ValueError("need iters > burnin >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = np.random.default_rng(seed)
    feats = _Features(dataset)
    state = init_state(dataset, h, rng, fixed_outer=fixed_outer)
    fixed = fixed_outer is not None
    calc = None
    if record_marglik:
        from .marglik import MarginalLikCalculator

        calc = MarginalLikCalculator(h.eta, h.lam, h.zeta, h.alpha, h.beta,
                                     mode=m_nb_mode, nsamples=m_nb_samples)
    trace = ChainTrace(
        algorithm="conditional", n=dataset.n, d=dataset.d, T=dataset.T,
        meta={"iters": iters, "burnin": burnin, "thin": thin, "seed": seed,
              "fixed_outer": fixed, "hyperparams": h.to_dict()},
    )
    try:
        for it in range(1, iters + 1):
            sweep(state, dataset, h, rng, fixed_outer=fixed, feats=feats)
            if it > burnin and (it - burnin) % thin == 0:
                ll = total_loglik(state, dataset, feats)
                lml = None
                if calc is not None:
                    lml = log_marglik_of_allocation(
                        dataset, state.c, state.z, calc, rng=rng, feats=feats
                    )
                trace.records.append(_record(state, ll, lml))
    except KeyboardInterrupt:
        trace.meta["interrupted"] = True
    return trace


def log_marglik_of_allocation(dataset: CountDataset, c: np.ndarray,
                              z: np.ndarray, calc, rng=None,
                              feats: _Features | None = None) -> float:
    """log M(y | c, z): marginal likelihood of the data given the nested
    allocation, all component parameters integrated out."""
    if feats is None:
        feats = _Features(dataset)
    total = 0.0
    for m in np.unique(c):
        members = np.flatnonzero(c == m)
        n1 = feats.n_pos[members].sum(axis=0)
        n0 = feats.n_zero[members].sum(axis=0)
        for j in range(feats.d):
            total += calc.bern(int(n1[j]), int(n0[j]))
        for s in np.unique(z[members]):
            sub = members[z[members] == s]
            for j in range(feats.d):
                ys = feats.positives(sub, j)
                total += calc.nb(ys.astype(np.int64), rng=rng)
    return total
