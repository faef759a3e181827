"""Exact and Monte Carlo machinery for the Bernoulli instance.

The instance has N*m jobs with duration 1 w.p. 1/N (else 0).  A policy that
acts at integer times rebalances the not-yet-started jobs evenly over all
machines each round; the number of jobs left behind a machine that received k
jobs is distributed as (k - G)+ with G geometric.  This module computes that
remaining-count law exactly, solves the cost-to-go recursion, simulates the
fraction-remaining process, and checks the transfer/dominance lemma and the
decision-spacing identity that together show the recursion's balancing step
is optimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import bernoulli_instance, sample_realization, stream
from .prob import DiscreteLaw, clipped_geom_law, geom_range_prob, min_geom_law, stoch_dominates

PROB_EPS = 1e-12


def balanced_assignment(r: int, m: int) -> list[int]:
    """Split r jobs over m machines as evenly as possible, nonincreasing."""
    if r < 0 or m < 1:
        raise ValueError("need r >= 0 and m >= 1")
    base, extra = divmod(r, m)
    return [base + 1] * extra + [base] * (m - extra)


@dataclass(frozen=True)
class RemainingDist:
    """Exact pmf over the number of jobs remaining after one round."""

    pmf: tuple[float, ...]  # pmf[s] = P(remaining == s)

    def __post_init__(self):
        total = sum(self.pmf)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pmf sums to {total}")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.pmf)

    def mean(self) -> float:
        return float(sum(s * p for s, p in enumerate(self.pmf)))


def _clip_pmf(k: int, q: float) -> np.ndarray:
    # pmf of (k - G)+ over 0..max(k-1, 0)
    if k <= 0:
        return np.array([1.0])
    out = np.empty(k)
    out[0] = (1.0 - q) ** (k - 1)
    for j in range(1, k):
        out[j] = (1.0 - q) ** (k - j - 1) * q
    return out


def remaining_after_round(ks: Sequence[int], N: int) -> RemainingDist:
    """Convolution of independent (k_i - G_i)+ counts with G_i ~ Geom(1/N)."""
    if N < 1:
        raise ValueError("N must be positive")
    q = 1.0 / N
    pmf = np.array([1.0])
    for k in ks:
        pmf = np.convolve(pmf, _clip_pmf(int(k), q))
    return RemainingDist(tuple(pmf))


@dataclass(frozen=True)
class BellmanTable:
    """Cost-to-go J(r) for r = 0..r_max under the balancing round policy."""

    N: int
    m: int
    values: tuple[float, ...]

    def __post_init__(self):
        if self.values[0] != 0.0:
            raise ValueError("J(0) must be 0")
        if any(b < a - PROB_EPS for a, b in zip(self.values, self.values[1:])):
            raise ValueError("cost-to-go must be nondecreasing in r")

    def __getitem__(self, r: int) -> float:
        return self.values[r]


def bellman_opt1(N: int, m: int, r_max: int) -> BellmanTable:
    """Exact cost-to-go recursion, balancing each round.

    J(0) = 0 and, for r >= 1,
    J(r) = 1 - (1 - 1/N)^r + sum_s P(R = s) J(s)
    where R is the remaining count after a balanced round on r jobs.  The
    recursion is well founded because R < r almost surely.
    """
    if N < 1 or m < 1 or r_max < 0:
        raise ValueError("need N, m >= 1 and r_max >= 0")
    values = [0.0]
    for r in range(1, r_max + 1):
        pmf = remaining_after_round(balanced_assignment(r, m), N).as_array()
        assert len(pmf) <= r, "remaining count must drop below r"
        cont = float(np.dot(pmf, values[: len(pmf)]))
        values.append(1.0 - (1.0 - 1.0 / N) ** r + cont)
    return BellmanTable(N, m, tuple(values))


def _partitions_at_most(r: int, parts: int, cap: int | None = None):
    # nonincreasing integer partitions of r into at most `parts` parts
    if r == 0:
        yield ()
        return
    if parts == 0:
        return
    top = r if cap is None else min(cap, r)
    for first in range(top, 0, -1):
        for rest in _partitions_at_most(r - first, parts - 1, first):
            yield (first,) + rest


def brute_force_opt1(N: int, m: int, r: int, *, max_r: int = 9, max_m: int = 3) -> float:
    """Cost-to-go minimized over every assignment shape, as an independent oracle.

    Enumerates all partitions of s jobs over at most m machines for every
    s <= r instead of trusting that balancing attains the minimum.  Guarded to
    small inputs because the enumeration is combinatorial.
    """
    if r > max_r or m > max_m:
        raise ValueError(f"brute force limited to r <= {max_r}, m <= {max_m}")
    if N < 1 or m < 1 or r < 0:
        raise ValueError("need N, m >= 1 and r >= 0")
    memo: dict[int, float] = {0: 0.0}

    def solve(s: int) -> float:
        if s in memo:
            return memo[s]
        best = math.inf
        for shape in _partitions_at_most(s, m):
            pmf = remaining_after_round(shape, N).as_array()
            cont = sum(pmf[t] * solve(t) for t in range(len(pmf)))
            best = min(best, cont)
        val = 1.0 - (1.0 - 1.0 / N) ** s + best
        memo[s] = val
        return val

    return solve(r)


# ---------------------------------------------------------------------------
# Monte Carlo dynamics of the fraction of remaining jobs
# ---------------------------------------------------------------------------

def _geometric(gen: np.random.Generator, q: float, size: int) -> np.ndarray:
    """Inverse-CDF geometric draws (number of trials up to first success)."""
    if q >= 1.0:
        return np.ones(size, dtype=np.int64)
    u = gen.random(size)
    g = np.ceil(np.log1p(-u) / math.log1p(-q))
    g = np.minimum(np.maximum(g, 1.0), 1e18)
    return g.astype(np.int64)


def _balanced_counts(r: int, m: int) -> np.ndarray:
    base, extra = divmod(r, m)
    ks = np.full(m, base, dtype=np.int64)
    ks[:extra] += 1
    return ks


@dataclass(frozen=True)
class LambdaSim:
    """Per-trial trajectories of the remaining-job fraction at integer times."""

    N: int
    m: int
    lambdas: np.ndarray  # shape (trials, t_max + 1); lambdas[:, t] is Lambda_t
    makespans: np.ndarray  # shape (trials,); last round with a unit job, plus one

    def mean_at(self, t: int) -> float:
        return float(self.lambdas[:, t].mean())

    def tail_frequency(self, t: int, threshold: float) -> float:
        return float((self.lambdas[:, t] >= threshold).mean())


def simulate_lambda(
    N: int,
    m: int,
    t_max: int,
    trials: int,
    master_seed: int,
    lambda0: float = 1.0,
) -> LambdaSim:
    """Simulate the balanced-round dynamics forward from a given starting fraction.

    Each round balances the remaining jobs over all m machines and draws one
    geometric per machine; per-trial streams come from (master_seed, trial).
    """
    if trials < 1 or t_max < 0:
        raise ValueError("need trials >= 1 and t_max >= 0")
    q = 1.0 / N
    total = N * m
    r0 = int(round(lambda0 * total))
    lams = np.empty((trials, t_max + 1))
    mks = np.empty(trials, dtype=np.int64)
    for trial in range(trials):
        gen = stream(master_seed, trial)
        r = r0
        lams[trial, 0] = r / total
        last_long = -1
        t = 0
        # run to extinction so the makespan is always defined, filling the
        # trajectory columns up to t_max along the way
        while r > 0 or t < t_max:
            if r > 0:
                ks = _balanced_counts(r, m)
                g = _geometric(gen, q, m)
                if np.any(g <= ks):
                    last_long = t
                r = int(np.maximum(ks - g, 0).sum())
            t += 1
            if t <= t_max:
                lams[trial, t] = r / total
        mks[trial] = last_long + 1
    return LambdaSim(N, m, lams, mks)


def estimate_opt1(N: int, m: int, trials: int, master_seed: int) -> tuple[float, float]:
    """Monte Carlo mean and 95% half-width of the balanced-round makespan."""
    sim = simulate_lambda(N, m, 0, trials, master_seed)
    mks = sim.makespans.astype(float)
    mean = float(mks.mean())
    hw = 1.96 * float(mks.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
    return mean, hw


# ---------------------------------------------------------------------------
# Transfer lemma for clipped geometric sums
# ---------------------------------------------------------------------------

def dominance_clip_lemma_check(q: float, k1: int, k2: int) -> bool:
    """Exact CDF check that min(k1,G1)+min(k2,G2) is dominated by min(k1+1,G1)+min(k2-1,G2)."""
    if k1 >= k2:
        raise ValueError("need k1 < k2")
    lhs = min_geom_law(k1, q).convolve(min_geom_law(k2, q))
    rhs = min_geom_law(k1 + 1, q).convolve(min_geom_law(k2 - 1, q))
    return stoch_dominates(lhs, rhs)


def dominance_clip_corollary_check(q: float, k1: int, k2: int) -> bool:
    """Equivalent form on remaining counts: (k1-G1)+ + (k2-G2)+ dominates the transferred version."""
    if k1 >= k2:
        raise ValueError("need k1 < k2")
    lhs = clipped_geom_law(k1, q).convolve(clipped_geom_law(k2, q))
    rhs = clipped_geom_law(k1 + 1, q).convolve(clipped_geom_law(k2 - 1, q))
    return stoch_dominates(rhs, lhs)


def clip_lemma_case_probs(q: float, k1: int, k2: int, a: int) -> tuple[float, float, float, float]:
    """Closed forms of the four boundary-event probabilities at threshold ``a``.

    p1 = P(transferred sum >= a, G1 > k1, G2 < k2),
    p2 = P(original sum >= a, G1 > k1, G2 < k2),
    p3 = P(transferred sum >= a, G1 <= k1, G2 >= k2),
    p4 = P(original sum >= a, G1 <= k1, G2 >= k2).
    """
    r1 = (1.0 - q) ** k1
    r2 = (1.0 - q) ** (k2 - 1)
    p1 = r1 * geom_range_prob(q, a - k1 - 1, k2 - 1)
    p2 = r1 * geom_range_prob(q, a - k1, k2 - 1)
    p3 = r2 * geom_range_prob(q, a - k2 + 1, k1)
    p4 = r2 * geom_range_prob(q, a - k2, k1)
    return p1, p2, p3, p4


def clip_lemma_case_probs_enumerated(
    q: float, k1: int, k2: int, a: int
) -> tuple[float, float, float, float]:
    """The same four probabilities by direct enumeration over (G1, G2) buckets."""

    def buckets(k_cond: int):
        # values 1..k_cond+1 pointwise, then one lump for G >= k_cond + 2
        out = [(g, geom_range_prob(q, g, g)) for g in range(1, k_cond + 2)]
        out.append((k_cond + 2, geom_range_prob(q, k_cond + 2, math.inf)))
        return out

    p = [0.0, 0.0, 0.0, 0.0]
    for g1, w1 in buckets(k1):
        for g2, w2 in buckets(k2):
            w = w1 * w2
            upper1, lower2 = g1 >= k1 + 1, g2 <= k2 - 1
            lower1, upper2 = g1 <= k1, g2 >= k2
            trans = min(g1, k1 + 1) + min(g2, k2 - 1)
            orig = min(g1, k1) + min(g2, k2)
            if upper1 and lower2:
                if trans >= a:
                    p[0] += w
                if orig >= a:
                    p[1] += w
            if lower1 and upper2:
                if trans >= a:
                    p[2] += w
                if orig >= a:
                    p[3] += w
    return tuple(p)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Decision-spacing identity
# ---------------------------------------------------------------------------

def balancing_rounds_from_realization(p: Sequence[float], m: int) -> tuple[int | None, int]:
    """Run the balanced-round dynamics on a fixed 0/1 realization.

    Returns (index of the last round in which a unit job ran, total rounds).
    Jobs are dealt to machines in index order, the widest chunks first, which
    matches the engine's balancing policy exactly.
    """
    remaining = [j for j in range(len(p))]
    last_long: int | None = None
    t = 0
    while remaining:
        counts = balanced_assignment(len(remaining), m)
        nxt: list[int] = []
        any_long = False
        pos = 0
        for c in counts:
            chunk = remaining[pos : pos + c]
            pos += c
            for idx, j in enumerate(chunk):
                if p[j] > 0:
                    any_long = True
                    nxt.extend(chunk[idx + 1 :])
                    break
        if any_long:
            last_long = t
        remaining = nxt
        t += 1
    return last_long, t


@dataclass(frozen=True)
class DeltaScalingTrial:
    trial: int
    all_zero: bool
    last_round: int | None
    makespan_delta: float
    makespan_one: float
    identity_ok: bool


@dataclass(frozen=True)
class DeltaScalingReport:
    N: int
    m: int
    delta: Fraction
    trials: tuple[DeltaScalingTrial, ...]

    @property
    def all_ok(self) -> bool:
        return all(t.identity_ok for t in self.trials)


def delta_scaling_check(N: int, m: int, delta: float, trials: int, master_seed: int) -> DeltaScalingReport:
    """Pathwise check of the makespan identity between decision spacings delta and 1.

    Both runs share one realization per trial and the same balanced-round
    decisions; the run at spacing s starts round k at time k*s and any unit
    job still takes one time unit, so the makespans must satisfy
    M_1 = (1/delta) * (M_delta - 1) + 1 whenever at least one unit job exists
    and M_1 = M_delta = 0 otherwise.  Verified in exact rational arithmetic.
    """
    frac = Fraction(delta).limit_denominator(10**9)
    if frac.numerator != 1:
        raise ValueError(f"delta must be the reciprocal of an integer, got {delta}")
    D = frac.denominator
    inst = bernoulli_instance(N, m)
    rows = []
    for trial in range(trials):
        real = sample_realization(inst, stream(master_seed, trial))
        last, _ = balancing_rounds_from_realization(real.p, m)
        if last is None:
            m_delta = Fraction(0)
            m_one = Fraction(0)
            ok = True
        else:
            m_delta = Fraction(last, D) + 1
            m_one = Fraction(last + 1)
            ok = m_one == D * (m_delta - 1) + 1
        rows.append(
            DeltaScalingTrial(trial, last is None, last, float(m_delta), float(m_one), bool(ok))
        )
    return DeltaScalingReport(N, m, frac, tuple(rows))
