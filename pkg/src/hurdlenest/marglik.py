"""Marginal likelihoods of cluster blocks with component parameters
integrated out.

Two building blocks, each for one process within one cluster:

* the Bernoulli block (zero / non-zero indicators) integrated against the
  Beta(alpha, beta) prior on the non-zero probability, available in closed
  form through Beta functions;
* the positive-count block integrated against the Beta(eta, lam) prior on
  theta and the Geometric(zeta) prior on r, an infinite series over r that
  is evaluated either by adaptive truncation or by Monte Carlo importance
  sampling with the Geometric prior as proposal.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
from scipy.special import betaln, gammaln

from .errors import NumericError

_TAIL_REL_BOUND = 1e-10
_HARD_CAP = 100_000
_BLOCK = 128


def log_marg_bern(n1: int, n0: int, alpha: float, beta: float) -> float:
    """Log marginal likelihood of n1 successes / n0 failures under a
    Beta(alpha, beta) prior on the success probability."""
    if n1 < 0 or n0 < 0:
        raise ValueError("counts must be non-negative")
    if n1 == 0 and n0 == 0:
        return 0.0
    return float(betaln(alpha + n1, beta + n0) - betaln(alpha, beta))


def multiset_key(positives) -> tuple:
    """Canonical hashable key for a multiset of positive counts: sorted
    (value, multiplicity) pairs. Canonical keys pass through unchanged."""
    if isinstance(positives, tuple) and all(
            isinstance(item, tuple) and len(item) == 2 for item in positives):
        return positives
    if isinstance(positives, dict):
        items = positives.items()
    else:
        items = Counter(int(y) for y in positives).items()
    return tuple(sorted((int(v), int(c)) for v, c in items if c > 0))


def _series_log_terms(key: tuple, r: np.ndarray, eta: float, lam: float,
                      zeta: float) -> np.ndarray:
    """Log of the r-th series term of the positive-count marginal, for a
    vector of integer ranks r (the Geometric prior pmf included)."""
    values = np.array([v for v, _ in key], dtype=np.float64)
    counts = np.array([c for _, c in key], dtype=np.float64)
    n_pos = counts.sum()
    a = ((values - 1.0) * counts).sum()  # sum of (y - 1)
    r = r.astype(np.float64)
    # binomial-coefficient product over the multiset, via log-gamma
    lg = (counts[:, None] * gammaln(values[:, None] + r[None, :] - 1.0)).sum(axis=0)
    lg -= n_pos * gammaln(r)
    lg -= (counts * gammaln(values)).sum()
    out = (
        betaln(eta + a, lam + r * n_pos)
        - betaln(eta, lam)
        + lg
        + (r - 1.0) * np.log1p(-zeta)
        + np.log(zeta)
    )
    return out


def _log_marg_nb_truncated(key: tuple, eta: float, lam: float, zeta: float) -> float:
    """Adaptive truncation of the series over r, with a geometric bound on
    the neglected tail (relative bound 1e-10, hard cap 1e5 terms)."""
    total = -np.inf
    r_lo = 1
    block = 32
    log_bound = np.log(_TAIL_REL_BOUND)
    while r_lo <= _HARD_CAP:
        r = np.arange(r_lo, min(r_lo + block, _HARD_CAP + 1))
        lt = _series_log_terms(key, r, eta, lam, zeta)
        top = lt.max()
        total = np.logaddexp(total, top + np.log(np.exp(lt - top).sum()))
        # geometric tail bound from the last two terms of the block; the
        # term ratio is eventually < 1 and decreasing (1 - zeta beats the
        # polynomial growth of the binomial factors)
        if lt.size >= 2:
            ratio = np.exp(lt[-1] - lt[-2])
            if ratio < 1.0:
                log_tail = lt[-1] + np.log(ratio) - np.log1p(-ratio)
                if log_tail < total + log_bound:
                    return float(total)
        r_lo += block
        block = min(2 * block, _BLOCK)
    raise NumericError(
        "positive-count marginal series hit the hard cap before the tail "
        "bound was met"
    )


def _log_marg_nb_monte_carlo(key: tuple, eta: float, lam: float, zeta: float,
                             nsamples: int, rng: np.random.Generator):
    """Importance-sampling estimate with the Geometric(zeta) prior as
    proposal; returns (log estimate, standard error of the log estimate)."""
    r = rng.geometric(zeta, size=nsamples)
    lw = _series_log_terms(key, r, eta, lam, zeta)
    # divide out the proposal pmf
    lw -= (r - 1.0) * np.log1p(-zeta) + np.log(zeta)
    shift = lw.max()
    w = np.exp(lw - shift)
    mean = w.mean()
    se_log = w.std(ddof=1) / mean / np.sqrt(nsamples) if nsamples > 1 else np.inf
    return float(shift + np.log(mean)), float(se_log)


def log_marg_nb(positives, eta: float, lam: float, zeta: float,
                mode: str = "truncated", nsamples: int = 100,
                rng: np.random.Generator | None = None,
                return_se: bool = False):
    """Log marginal likelihood of a multiset of positive counts.

    `positives` may be a sequence of counts >= 1 or a {value: multiplicity}
    histogram. `mode` is "truncated" (deterministic) or "monte_carlo".
    """
    key = multiset_key(positives)
    if any(v < 1 for v, _ in key):
        raise ValueError("positive-count block requires counts >= 1")
    if not key:
        return (0.0, 0.0) if return_se else 0.0
    if mode == "truncated":
        value = _log_marg_nb_truncated(key, eta, lam, zeta)
        return (value, 0.0) if return_se else value
    if mode == "monte_carlo":
        if rng is None:
            rng = np.random.default_rng()
        value, se = _log_marg_nb_monte_carlo(key, eta, lam, zeta, nsamples, rng)
        return (value, se) if return_se else value
    raise ValueError(f"unknown mode {mode!r}")


class MarginalLikCalculator:
    """Caches truncated positive-count marginals keyed on the multiset of
    counts. Monte Carlo mode bypasses the cache (stochastic values)."""

    def __init__(self, eta: float, lam: float, zeta: float,
                 alpha: float, beta: float,
                 mode: str = "truncated", nsamples: int = 100,
                 max_cache: int = 1 << 18):
        self.eta = eta
        self.lam = lam
        self.zeta = zeta
        self.alpha = alpha
        self.beta = beta
        if mode not in ("truncated", "monte_carlo"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.nsamples = nsamples
        self.max_cache = max_cache
        self._cache: dict[tuple, float] = {}

    def bern(self, n1: int, n0: int) -> float:
        return log_marg_bern(n1, n0, self.alpha, self.beta)

    def nb(self, positives, rng: np.random.Generator | None = None) -> float:
        return self.nb_key(multiset_key(positives), rng=rng)

    def nb_key(self, key: tuple,
               rng: np.random.Generator | None = None) -> float:
        """Fast path for callers holding a canonical multiset key."""
        if not key:
            return 0.0
        if self.mode == "monte_carlo":
            if rng is None:
                rng = np.random.default_rng()
            value, _ = _log_marg_nb_monte_carlo(
                key, self.eta, self.lam, self.zeta, self.nsamples, rng
            )
            return value
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = _log_marg_nb_truncated(key, self.eta, self.lam, self.zeta)
        if len(self._cache) >= self.max_cache:
            self._cache.clear()
        self._cache[key] = value
        return value
