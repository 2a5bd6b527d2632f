"""Independent oracles shared by the test suite.

Everything here deliberately avoids the library's computation paths:
exact integer combinatorics (math.comb, Fraction), mpmath Beta functions,
scipy quadrature, and brute-force enumeration.
"""

from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import logsumexp
from scipy.stats import beta as beta_dist


# ---------------------------------------------------------------------------
# exact pmf evaluations (integer factorials)


def shifted_nb_pmf_exact(y: int, r: int, theta: float) -> float:
    """Shifted NB pmf via exact integer binomial coefficients."""
    coef = math.comb(y + r - 2, y - 1)
    return coef * theta ** (y - 1) * (1.0 - theta) ** r


def hurdle_pmf_exact(y: int, p: float, r: int, theta: float) -> float:
    if y == 0:
        return 1.0 - p
    return p * shifted_nb_pmf_exact(y, r, theta)


# ---------------------------------------------------------------------------
# marginal likelihood oracles


def mbern_quad(n1: int, n0: int, alpha: float, beta: float) -> float:
    """Bernoulli-block marginal via quadrature against the Beta prior."""
    if n1 == 0 and n0 == 0:
        return 1.0
    val, _ = integrate.quad(
        lambda p: p ** n1 * (1 - p) ** n0 * beta_dist.pdf(p, alpha, beta),
        0.0, 1.0)
    return val


@lru_cache(maxsize=None)
def _mnb_brute_cached(key, eta, lam, zeta, rmax):
    ys = []
    for v, c in key:
        ys.extend([v] * c)
    n_pos = len(ys)
    a = sum(y - 1 for y in ys)
    log_terms = []
    for r in range(1, rmax + 1):
        coef = 1
        for y in ys:
            coef *= math.comb(y + r - 2, y - 1)
        lb = float(mpmath.log(mpmath.beta(eta + a, lam + r * n_pos))
                   - mpmath.log(mpmath.beta(eta, lam)))
        log_terms.append(lb + math.log(coef)
                         + (r - 1) * math.log1p(-zeta) + math.log(zeta))
    return float(logsumexp(log_terms))


def log_mnb_brute(positives, eta: float, lam: float, zeta: float,
                  rmax: int = 10_000) -> float:
    """Brute-force r-sum of the positive-count marginal: exact integer
    binomials, mpmath Beta ratios, fixed truncation point."""
    if len(positives) == 0:
        return 0.0
    counts = {}
    for y in positives:
        counts[int(y)] = counts.get(int(y), 0) + 1
    key = tuple(sorted(counts.items()))
    return _mnb_brute_cached(key, float(eta), float(lam), float(zeta), rmax)


# ---------------------------------------------------------------------------
# partition-prior oracles (series + quadrature, no closed forms)


def log_phi_series(u: float, k: int, gamma: float, lam: float,
                   terms: int = 500) -> float:
    """log sum_x (x+k)!/x! psi(u)^x q(k+x), q the shifted Poisson prior,
    psi the Gamma-weight Laplace transform, by explicit summation."""
    psi = (1.0 + u) ** -gamma
    out = []
    for x in range(terms):
        lt = (math.lgamma(x + k + 1) - math.lgamma(x + 1)
              + x * math.log(psi)
              + (k + x - 1) * math.log(lam) - lam - math.lgamma(k + x))
        out.append(lt)
    return float(logsumexp(out))


def log_eppf_quad(sizes, gamma: float, lam: float) -> float:
    """Log prior probability of an unordered partition with the given block
    sizes, by 1-d quadrature over the auxiliary variable."""
    sizes = list(sizes)
    n = sum(sizes)
    k = len(sizes)

    def log_f(u):
        if u <= 0:
            return -np.inf
        out = (n - 1) * math.log(u) - math.lgamma(n)
        out += log_phi_series(u, k, gamma, lam)
        for q in sizes:
            out += (math.lgamma(gamma + q) - math.lgamma(gamma)
                    - (gamma + q) * math.log1p(u))
        return out

    grid = np.geomspace(1e-6, 1e6, 200)
    shift = max(log_f(u) for u in grid)
    val, _ = integrate.quad(lambda u: math.exp(log_f(u) - shift), 0.0, np.inf,
                            limit=400)
    return math.log(val) + shift


# ---------------------------------------------------------------------------
# set partitions and nested partitions


def set_partitions(n: int):
    """All partitions of {0..n-1} as canonical label vectors, recursively."""
    def rec(i, labels, k):
        if i == n:
            yield labels.copy()
            return
        for lab in range(k + 1):
            labels[i] = lab
            yield from rec(i + 1, labels, max(k, lab + 1))

    yield from rec(0, np.zeros(n, dtype=np.int64), 0)


def nested_partitions(n: int):
    """All (outer labels, inner labels) pairs; inner labels are canonical
    within each outer block."""
    for outer in set_partitions(n):
        blocks = [np.flatnonzero(outer == m) for m in range(outer.max() + 1)]
        def rec(b, inner):
            if b == len(blocks):
                yield outer.copy(), inner.copy()
                return
            members = blocks[b]
            for sub in set_partitions(members.size):
                inner[members] = sub
                yield from rec(b + 1, inner)
        yield from rec(0, np.zeros(n, dtype=np.int64))


def nested_posterior_exact(counts: np.ndarray, h, rmax: int = 2000):
    """Exhaustive posterior over nested partitions of a tiny dataset.

    counts: (n, d, T) integer array. Returns (list of (outer, inner, log
    weight), pmf dict of the outer cluster count K).
    """
    counts = np.asarray(counts)
    n, d, T = counts.shape
    pos_mask = counts > 0

    @lru_cache(maxsize=None)
    def eppf_out(sizes):
        return log_eppf_quad(sizes, h.gamma_m, h.lambda_m)

    @lru_cache(maxsize=None)
    def eppf_in(sizes):
        return log_eppf_quad(sizes, h.gamma_s, h.lambda_s)

    @lru_cache(maxsize=None)
    def bern_block(n1, n0):
        return math.log(mbern_quad(n1, n0, h.alpha, h.beta))

    results = []
    k_weights: dict[int, list[float]] = {}
    for outer, inner in nested_partitions(n):
        logw = 0.0
        K = int(outer.max()) + 1
        logw += eppf_out(tuple(sorted(np.bincount(outer).tolist())))
        for m in range(K):
            members = np.flatnonzero(outer == m)
            z = inner[members]
            logw += eppf_in(tuple(sorted(np.bincount(z).tolist())))
            for j in range(d):
                n1 = int(pos_mask[members, j, :].sum())
                n0 = members.size * T - n1
                logw += bern_block(n1, n0)
            for s in range(int(z.max()) + 1):
                sub = members[z == s]
                for j in range(d):
                    ys = counts[sub, j, :][pos_mask[sub, j, :]]
                    if ys.size:
                        logw += log_mnb_brute([int(y) for y in ys],
                                              h.eta, h.lam, h.zeta, rmax=rmax)
        results.append((outer, inner, logw))
        k_weights.setdefault(K, []).append(logw)

    total = logsumexp([w for _, _, w in results])
    k_pmf = {k: float(np.exp(logsumexp(ws) - total))
             for k, ws in sorted(k_weights.items())}
    return results, k_pmf


# ---------------------------------------------------------------------------
# augmented-joint oracle for the marginal sampler's allocation tables


def _inner_cluster_log_factor(u: float, inner_sizes, h) -> float:
    """Log of the u-augmented inner-partition factor of one outer cluster."""
    n_m = sum(inner_sizes)
    k_m = len(inner_sizes)
    out = (n_m - 1) * math.log(u) - math.lgamma(n_m)
    out += log_phi_series(u, k_m, h.gamma_s, h.lambda_s)
    for q in inner_sizes:
        out += (math.lgamma(h.gamma_s + q) - math.lgamma(h.gamma_s)
                - (h.gamma_s + q) * math.log1p(u))
    return out


def _inner_cluster_log_factor_integrated(inner_sizes, h) -> float:
    """Same factor with the cluster latent integrated out by quadrature."""
    grid = np.geomspace(1e-6, 1e6, 120)
    shift = max(_inner_cluster_log_factor(u, inner_sizes, h) for u in grid)
    val, _ = integrate.quad(
        lambda u: math.exp(_inner_cluster_log_factor(u, inner_sizes, h) - shift),
        0.0, np.inf, limit=300)
    return math.log(val) + shift


def log_joint_augmented(counts, c, z, u_bar, u_by_cluster, h,
                        rmax: int = 2000) -> float:
    """Unnormalised log density of (c, z, latents, data) under the enriched
    model; u_by_cluster maps cluster label -> latent value, clusters absent
    from it have their latent integrated out by quadrature."""
    counts = np.asarray(counts)
    n, d, T = counts.shape
    pos_mask = counts > 0
    c = np.asarray(c)
    z = np.asarray(z)
    K = int(c.max()) + 1
    sizes = np.bincount(c, minlength=K)

    out = (n - 1) * math.log(u_bar)
    out += log_phi_series(u_bar, K, h.gamma_m, h.lambda_m)
    for m in range(K):
        out += (math.lgamma(h.gamma_m + sizes[m]) - math.lgamma(h.gamma_m)
                - (h.gamma_m + sizes[m]) * math.log1p(u_bar))
    for m in range(K):
        members = np.flatnonzero(c == m)
        inner_sizes = np.bincount(z[members]).tolist()
        if m in u_by_cluster:
            out += _inner_cluster_log_factor(u_by_cluster[m], inner_sizes, h)
        else:
            out += _inner_cluster_log_factor_integrated(inner_sizes, h)
        for j in range(d):
            n1 = int(pos_mask[members, j, :].sum())
            n0 = members.size * T - n1
            out += math.log(mbern_quad(n1, n0, h.alpha, h.beta))
        for s in range(int(z[members].max()) + 1):
            sub = members[z[members] == s]
            for j in range(d):
                ys = counts[sub, j, :][pos_mask[sub, j, :]]
                if ys.size:
                    out += log_mnb_brute([int(y) for y in ys],
                                         h.eta, h.lam, h.zeta, rmax=rmax)
    return out


def marginal_joint_table_oracle(counts, c, z, i, u_bar, u_existing, h,
                                rmax: int = 2000):
    """Exact joint conditional of (c_i, z_i) given everything else, by
    evaluating the augmented joint at every candidate cell.

    c, z: allocations with subject i detached (c[i] ignored); u_existing:
    latents of the existing clusters in label order. Returns (cells, probs)
    where cells are (m, s) pairs plus ("new", 0) for a fresh outer cluster.
    """
    counts = np.asarray(counts)
    others = [j for j in range(counts.shape[0]) if j != i]
    c_base = np.asarray(c).copy()
    z_base = np.asarray(z).copy()
    K = int(c_base[others].max()) + 1
    cells = []
    logs = []
    for m in range(K):
        members = [j for j in others if c_base[j] == m]
        k_m = int(z_base[members].max()) + 1
        for s in range(k_m + 1):  # existing inner clusters plus a new one
            c_try = c_base.copy()
            z_try = z_base.copy()
            c_try[i] = m
            z_try[i] = s
            u_map = {mm: u_existing[mm] for mm in range(K)}
            cells.append((m, s))
            logs.append(log_joint_augmented(counts, c_try, z_try, u_bar,
                                            u_map, h, rmax=rmax))
    c_try = c_base.copy()
    z_try = z_base.copy()
    c_try[i] = K
    z_try[i] = 0
    u_map = {mm: u_existing[mm] for mm in range(K)}  # new cluster integrated
    cells.append(("new", 0))
    logs.append(log_joint_augmented(counts, c_try, z_try, u_bar, u_map, h,
                                    rmax=rmax))
    logs = np.array(logs)
    probs = np.exp(logs - logsumexp(logs))
    return cells, probs


# ---------------------------------------------------------------------------
# misc statistical helpers


def tv_distance(pmf_a: dict, pmf_b: dict) -> float:
    keys = set(pmf_a) | set(pmf_b)
    return 0.5 * sum(abs(pmf_a.get(k, 0.0) - pmf_b.get(k, 0.0)) for k in keys)


def empirical_pmf(values) -> dict:
    values = np.asarray(values)
    uniq, cnt = np.unique(values, return_counts=True)
    return {int(v): float(c) / values.size for v, c in zip(uniq, cnt)}
