"""Closed-form law of the total subpopulation size n_x(t).

Critical binary branching: each particle splits at rate beta and dies at rate
mu = beta.  The generating function solves d(phi)/dt = beta (phi - 1)^2,
phi(0, z) = z, giving

    phi(t, z) = 1 - (1 - z) / ((beta t + 1) - beta t z).

Conditioned on survival the size is geometric on {1, 2, ...} with success
probability 1 / (beta t + 1).
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class BranchingParams:
    """Birth rate ``beta`` and death rate ``mu``; only the critical case is allowed."""

    beta: float = 1.0
    mu: float | None = None

    def __post_init__(self):
        if not self.beta >= 0 or not math.isfinite(self.beta):
            raise ValueError(f"beta must be a finite nonnegative number, got {self.beta}")
        if self.mu is None:
            object.__setattr__(self, "mu", float(self.beta))
        elif self.mu != self.beta:
            raise ValueError(f"non-critical branching (mu={self.mu} != beta={self.beta})")


@dataclass(frozen=True)
class GWLaw:
    params: BranchingParams
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")

    @property
    def bt(self):
        return self.params.beta * self.t

    @property
    def survival_probability(self):
        return 1.0 / (self.bt + 1.0)

    @property
    def extinction_probability(self):
        return self.bt / (self.bt + 1.0)


class TailMode(Enum):
    EXACT = "exact"
    LIMIT = "limit"


def gf_total(law, z):
    """phi(t, z) = E z^{n_x(t)}; accepts scalars or arrays (complex allowed)."""
    bt = law.bt
    return 1.0 - (1.0 - z) / ((bt + 1.0) - bt * z)


def pmf_total(law, k):
    """P{n_x(t) = k}."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    bt = law.bt
    if k == 0:
        return bt / (bt + 1.0)
    if bt == 0.0:
        return 1.0 if k == 1 else 0.0
    if k > 50:
        return math.exp((k - 1) * math.log(bt) - (k + 1) * math.log1p(bt))
    return bt ** (k - 1) / (bt + 1.0) ** (k + 1)


def pmf_table(law, kmax):
    """Vector of P{n_x(t) = k} for k = 0..kmax."""
    return np.array([pmf_total(law, k) for k in range(kmax + 1)])


def conditional_mean_total(law):
    """E[n_x(t) | n_x(t) > 0] = beta t + 1."""
    return law.bt + 1.0


def conditional_pmf_total(law, k):
    """P{n_x(t) = k | n_x(t) > 0}: geometric with success probability 1/(beta t + 1)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    bt = law.bt
    if bt == 0.0:
        return 1.0 if k == 1 else 0.0
    return math.exp((k - 1) * (math.log(bt) - math.log1p(bt)) - math.log1p(bt))


def conditional_tail(law, s, mode=TailMode.EXACT):
    """P{n_x(t) / (beta t + 1) > s | n_x(t) > 0}.

    ``EXACT`` sums the conditional law from k = 1 to floor((beta t + 1) s),
    which collapses to ``r**K`` with ``r = beta t / (beta t + 1)``;
    ``LIMIT`` is the exponential law ``exp(-s)``.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    mode = TailMode(mode)
    if mode is TailMode.LIMIT:
        return math.exp(-s)
    bt = law.bt
    K = math.floor((bt + 1.0) * s)
    if bt == 0.0:
        return 1.0 if K == 0 else 0.0
    return math.exp(K * (math.log(bt) - math.log1p(bt)))


def tail_cutoff(law, tol=1e-12):
    """Smallest K with P{n_x(t) > K} < tol (the tail is geometric)."""
    bt = law.bt
    if bt == 0.0:
        return 1
    # P{n > K} = r^K / (bt + 1)
    log_r = math.log(bt) - math.log1p(bt)
    return max(1, math.ceil((math.log(tol) + math.log1p(bt)) / log_r))
