"""Fixed prior hyperparameters, their validation, and prior samplers.

Priors for one mixture component, independently per process j:
  p*_j     ~ Beta(alpha, beta)        probability of a non-zero count
  r*_j     ~ Geometric(zeta)          on {1, 2, ...}, mean 1/zeta
  theta*_j ~ Beta(eta, lam)
Unnormalised mixture weights are Gamma(gamma, 1); the number of components
at either level is shifted-Poisson (support {1, 2, ...}).
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import gammaln

from .kernels import ComponentParams


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 1.0
    beta: float = 1.0
    zeta: float = 0.5
    eta: float = 1.0
    lam: float = 1.0
    gamma_m: float = 1.0
    gamma_s: float = 1.0
    lambda_m: float = 3.0
    lambda_s: float = 3.0

    def validate(self) -> list[str]:
        """Return a report of violated constraints; empty means valid."""
        problems = []
        for name in ("alpha", "beta", "eta", "lam", "gamma_m", "gamma_s",
                     "lambda_m", "lambda_s"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                problems.append(f"{name} must be strictly positive, got {value}")
        if not (np.isfinite(self.zeta) and 0.0 < self.zeta < 1.0):
            problems.append(f"zeta must be in (0, 1), got {self.zeta}")
        return problems

    def require_valid(self) -> "Hyperparams":
        problems = self.validate()
        if problems:
            raise ValueError("invalid hyperparameters: " + "; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


def log_shifted_poisson_pmf(k, lam: float):
    """Log pmf of the shifted Poisson on {1, 2, ...}: k - 1 ~ Poisson(lam)."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("shifted Poisson support is {1, 2, ...}")
    if lam <= 0:
        raise ValueError("lam must be positive")
    k = k.astype(np.float64)
    out = (k - 1.0) * np.log(lam) - lam - gammaln(k)
    return out if out.ndim else float(out)


def sample_shifted_poisson(lam: float, rng: np.random.Generator) -> int:
    return int(rng.poisson(lam)) + 1


def sample_p_from_prior(h: Hyperparams, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.beta(h.alpha, h.beta, size=d)


def sample_r_from_prior(h: Hyperparams, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.geometric(h.zeta, size=d).astype(np.int64)


def sample_theta_from_prior(h: Hyperparams, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.beta(h.eta, h.lam, size=d)


def sample_component_from_prior(
    h: Hyperparams, d: int, rng: np.random.Generator
) -> ComponentParams:
    """Draw one full component (p*, r*, theta*) from the prior."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return ComponentParams(
        p_star=sample_p_from_prior(h, d, rng),
        r_star=sample_r_from_prior(h, d, rng),
        theta_star=sample_theta_from_prior(h, d, rng),
    )


def sample_weight_from_prior(gamma: float, rng: np.random.Generator) -> float:
    """One unnormalised mixture weight, Gamma(gamma, 1)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return float(rng.gamma(gamma, 1.0))
