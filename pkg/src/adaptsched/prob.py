"""Distribution primitives, stochastic-dominance tests, and analytic curves.

Everything here is a pure function over finite discrete laws.  Tail and CDF
comparisons use an absolute tolerance of 1e-12 on probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TOL = 1e-12


# ---------------------------------------------------------------------------
# Finite discrete laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteLaw:
    """Finite discrete law with sorted support; values may be scaled reals."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        merged: dict[float, float] = {}
        for v, p in zip(self.values, self.probs):
            if p < -TOL:
                raise ValueError(f"negative probability {p}")
            if p > 0.0:
                merged[float(v)] = merged.get(float(v), 0.0) + float(p)
        vals = tuple(sorted(merged))
        probs = tuple(merged[v] for v in vals)
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"mass sums to {sum(probs)}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point(cls, v: float) -> "DiscreteLaw":
        return cls((v,), (1.0,))

    @classmethod
    def bernoulli(cls, p: float) -> "DiscreteLaw":
        return cls((0.0, 1.0), (1.0 - p, p))

    @classmethod
    def binomial(cls, n: int, p: float) -> "DiscreteLaw":
        return cls(tuple(range(n + 1)), tuple(binom_pmf(n, p, k) for k in range(n + 1)))

    def scale(self, x: float) -> "DiscreteLaw":
        return DiscreteLaw(tuple(x * v for v in self.values), self.probs)

    def convolve(self, other: "DiscreteLaw") -> "DiscreteLaw":
        sums: dict[float, float] = {}
        for v, p in zip(self.values, self.probs):
            for w, q in zip(other.values, other.probs):
                sums[v + w] = sums.get(v + w, 0.0) + p * q
        return DiscreteLaw(tuple(sums), tuple(sums.values()))

    def tail(self, z: float) -> float:
        """P(X >= z)."""
        return sum(p for v, p in zip(self.values, self.probs) if v >= z - TOL)

    def mean(self) -> float:
        return sum(v * p for v, p in zip(self.values, self.probs))


def stoch_dominates(a: DiscreteLaw, b: DiscreteLaw) -> bool:
    """True iff ``a`` is stochastically dominated by ``b``: P(a>=z) <= P(b>=z) for all z."""
    grid = sorted(set(a.values) | set(b.values))
    return all(a.tail(z) <= b.tail(z) + TOL for z in grid)


def weighted_bernoulli_sum_law(weights: list[float], probs: list[float]) -> DiscreteLaw:
    """Exact law of sum_i x_i * B_i with independent B_i ~ Bernoulli(p_i)."""
    law = DiscreteLaw.point(0.0)
    for x, p in zip(weights, probs):
        law = law.convolve(DiscreteLaw.bernoulli(p).scale(x))
    return law


# ---------------------------------------------------------------------------
# Geometric and binomial laws
# ---------------------------------------------------------------------------

def geom_pmf(q: float, g: int) -> float:
    """P(G = g) for G ~ Geom(q) counting trials up to the first success."""
    _check_q(q)
    if g < 1:
        return 0.0
    return (1.0 - q) ** (g - 1) * q


def geom_cdf(q: float, g: int) -> float:
    """P(G <= g)."""
    _check_q(q)
    if g < 1:
        return 0.0
    return 1.0 - (1.0 - q) ** int(g)


def geom_range_prob(q: float, a: float, b: float) -> float:
    """P(a <= G <= b) in closed form; ``b`` may be ``math.inf``."""
    _check_q(q)
    if a > b or b < 0:
        return 0.0
    if a <= 1:
        if math.isinf(b):
            return 1.0
        return 1.0 - (1.0 - q) ** int(b)
    if math.isinf(b):
        return (1.0 - q) ** (int(a) - 1)
    return (1.0 - q) ** (int(a) - 1) * (1.0 - (1.0 - q) ** (int(b) - int(a) + 1))


def _check_q(q: float) -> None:
    if not 0.0 < q <= 1.0:
        raise ValueError(f"geometric parameter must be in (0, 1], got {q}")


def binom_pmf(n: int, p: float, k: int) -> float:
    """Binomial pmf computed in log space so it stays finite for n up to ~1e6."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if k < 0 or k > n:
        return 0.0
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    logc = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(logc + k * math.log(p) + (n - k) * math.log1p(-p))


def binom_cdf(n: int, p: float, k: int) -> float:
    """P(X <= k) as a compensated sum of log-space pmf terms."""
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    return min(1.0, math.fsum(binom_pmf(n, p, j) for j in range(int(k) + 1)))


def min_geom_law(k: int, q: float) -> DiscreteLaw:
    """Law of min(k, G) for G ~ Geom(q); support {1..k} (point mass 0 when k=0)."""
    _check_q(q)
    if k <= 0:
        return DiscreteLaw.point(0.0)
    vals = tuple(range(1, k + 1))
    probs = [geom_pmf(q, g) for g in range(1, k)] + [(1.0 - q) ** (k - 1)]
    return DiscreteLaw(vals, tuple(probs))


def clipped_geom_law(k: int, q: float) -> DiscreteLaw:
    """Law of (k - G)+ for G ~ Geom(q); support {0..k-1}."""
    _check_q(q)
    if k <= 0:
        return DiscreteLaw.point(0.0)
    vals = tuple(range(k))
    probs = [(1.0 - q) ** (k - 1)] + [geom_pmf(q, k - j) for j in range(1, k)]
    return DiscreteLaw(vals, tuple(probs))


# ---------------------------------------------------------------------------
# Closed-form curves used next to empirical tails
# ---------------------------------------------------------------------------

def truncated_geom_mean(lambda0: float, N: int) -> float:
    """E[(1 - (G+1)/(lambda0*N))+] for G ~ Geom(1/N), as an exact finite sum."""
    if not 0.0 < lambda0 < 1.0:
        raise ValueError("lambda0 must be in (0, 1)")
    if N < 2:
        raise ValueError("N must be at least 2")
    top = math.floor(lambda0 * N) - 1
    if top < 1:
        return 0.0
    g = np.arange(1, top + 1, dtype=float)
    q = 1.0 / N
    pmf = np.exp((g - 1.0) * math.log1p(-q)) * q
    return float(np.sum((1.0 - (g + 1.0) / (lambda0 * N)) * pmf))


def concentration_reference(kind: str, **params: float) -> float:
    """Numeric value of a named tail bound, for plotting analytic curves.

    kinds: ``markov(E, zeta)``, ``hoeffding(m, zeta)``,
    ``chernoff_upper(mu, eta)`` (eta in (0,1)), ``chernoff_lower(mu, eta)``,
    ``chernoff_poisson(mu, zeta)`` (zeta > 0).
    """
    if kind == "markov":
        e, zeta = params["E"], params["zeta"]
        if zeta <= 0 or e < 0:
            raise ValueError("markov needs E >= 0 and zeta > 0")
        return e / zeta
    if kind == "hoeffding":
        m, zeta = params["m"], params["zeta"]
        if m < 1 or zeta <= 0:
            raise ValueError("hoeffding needs m >= 1 and zeta > 0")
        return math.exp(-2.0 * m * zeta * zeta)
    if kind == "chernoff_upper":
        mu, eta = params["mu"], params["eta"]
        if mu <= 0 or not 0 < eta < 1:
            raise ValueError("chernoff_upper needs mu > 0 and eta in (0, 1)")
        return math.exp(-mu * eta * eta / 3.0)
    if kind == "chernoff_lower":
        mu, eta = params["mu"], params["eta"]
        if mu <= 0 or not 0 < eta < 1:
            raise ValueError("chernoff_lower needs mu > 0 and eta in (0, 1)")
        return math.exp(-mu * eta * eta / 2.0)
    if kind == "chernoff_poisson":
        mu, zeta = params["mu"], params["zeta"]
        if mu <= 0 or zeta <= 0:
            raise ValueError("chernoff_poisson needs mu > 0 and zeta > 0")
        return math.exp(-mu * zeta * zeta / (2.0 + zeta))
    raise ValueError(f"unknown bound kind {kind!r}")


# ---------------------------------------------------------------------------
# Analytic constants of the reassignment-policy analysis
# ---------------------------------------------------------------------------

def kstar(m: int) -> int:
    """Number of scheduled reassignment checkpoints minus one: floor(log2((2/3)log2(m)+1))+2."""
    if m < 2:
        raise ValueError("kstar needs m >= 2")
    return int(math.floor(math.log2((2.0 / 3.0) * math.log2(m) + 1.0))) + 2


@dataclass(frozen=True)
class AnalysisConstants:
    alpha: float
    m: int
    kstar: int
    gamma: tuple[float, ...]  # gamma[k-1] = gamma_k for k = 1..kstar
    beta: tuple[float, ...]   # beta[k-2] = beta_k for k = 2..kstar
    beta_inf: float
    psi: float
    epsilon: float


def analysis_constants(alpha: float, m: int) -> AnalysisConstants:
    """Closed-form envelope sequences for the remaining-load/availability induction.

    gamma_1 = 1 and gamma_{k+1} = gamma_k^2 / 2 (so gamma_k = (1/2)^(2^(k-1)-1));
    beta_k = 3/4 - (2/alpha) * sum_{h<=k-2} gamma_h; psi = 1/(8 kstar + 16);
    epsilon = exp(-(alpha-32)^2 m^(1/3) / 768).
    """
    if alpha <= 32:
        raise ValueError("alpha must exceed 32")
    ks = kstar(m)
    gamma = [1.0]
    while len(gamma) < ks:
        gamma.append(0.5 * gamma[-1] ** 2)
    # beta_k for k = 2..kstar; the infinite sum of gamma converges in a few terms
    beta = []
    for k in range(2, ks + 1):
        beta.append(0.75 - (2.0 / alpha) * sum(gamma[: k - 2]))
    g, total = 1.0, 0.0
    while g > 0.0:
        total += g
        g = 0.5 * g * g
    beta_inf = 0.75 - (2.0 / alpha) * total
    psi = 1.0 / (8.0 * ks + 16.0)
    epsilon = math.exp(-((alpha - 32.0) ** 2) * m ** (1.0 / 3.0) / 768.0)
    return AnalysisConstants(alpha, m, ks, tuple(gamma), tuple(beta), beta_inf, psi, epsilon)
