"""Instance and trace data model shared by every other module.

Processing times are finite discrete distributions.  All types are immutable
value objects; RNG streams are explicit ``numpy.random.Generator`` values
derived from (master seed, trial index) via Philox, never global state.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: absolute tolerance for probability normalization
PROB_EPS = 1e-12
#: absolute tolerance for time comparisons (Bernoulli instances stay exact)
TIME_EPS = 1e-9


class TraceStructureError(ValueError):
    """Trace does not refer to the given instance/realization (not a mere rule violation)."""


def stream(master_seed: int, trial: int = 0) -> np.random.Generator:
    """Counter-based RNG stream for one trial.

    Uses Philox keyed by ``SeedSequence((master_seed, trial))`` so that
    per-trial streams are independent of execution order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((master_seed, trial))))


@dataclass(frozen=True)
class Dist:
    """Finite discrete processing-time distribution in canonical form.

    Canonical form: support strictly increasing, duplicate values merged,
    zero-probability atoms dropped, probabilities summing to 1 within 1e-12.
    """

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs):
            raise ValueError("values and probs must have equal length")
        merged: dict[float, float] = {}
        for v, p in zip(self.values, self.probs):
            v = float(v)
            p = float(p)
            if v < 0:
                raise ValueError(f"negative support value {v}")
            if p < 0:
                raise ValueError(f"negative probability {p}")
            merged[v] = merged.get(v, 0.0) + p
        vals = tuple(sorted(v for v, p in merged.items() if p > 0.0))
        probs = tuple(merged[v] for v in vals)
        if not vals:
            raise ValueError("distribution has no support")
        total = sum(probs)
        if abs(total - 1.0) > PROB_EPS:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "Dist":
        vals, probs = zip(*pairs)
        return cls(tuple(vals), tuple(probs))

    @classmethod
    def point(cls, value: float) -> "Dist":
        return cls((float(value),), (1.0,))

    @property
    def max_value(self) -> float:
        return self.values[-1]


def expected_value(d: Dist) -> float:
    """Mean of a finite discrete distribution."""
    return float(sum(v * p for v, p in zip(d.values, d.probs)))


@dataclass(frozen=True)
class Instance:
    """m identical parallel machines plus one duration distribution per job."""

    m: int
    jobs: tuple[Dist, ...]

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one machine")
        if len(self.jobs) < 1:
            raise ValueError("need at least one job")
        object.__setattr__(self, "jobs", tuple(self.jobs))

    @property
    def n(self) -> int:
        return len(self.jobs)

    def expectations(self) -> np.ndarray:
        return np.array([expected_value(d) for d in self.jobs])


def bernoulli_instance(N: int, m: int) -> Instance:
    """The lower-bound instance: N*m jobs, each 1 with probability 1/N else 0."""
    if N < 1 or m < 1:
        raise ValueError("N and m must be positive")
    job = Dist((0.0, 1.0), (1.0 - 1.0 / N, 1.0 / N))
    return Instance(m, (job,) * (N * m))


@dataclass(frozen=True)
class Realization:
    """One vector of realized durations, p[j] drawn from jobs[j]."""

    p: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))


def sample_realization(inst: Instance, rng: np.random.Generator) -> Realization:
    """Draw each duration independently by inverse CDF over the canonical support.

    One uniform is consumed per job, in job order, so the draw layout does not
    depend on how jobs happen to share distribution objects.
    """
    u = rng.random(inst.n)
    p = np.empty(inst.n)
    # group jobs sharing a distribution object so the searchsorted runs vectorized
    groups: dict[int, tuple[Dist, list[int]]] = {}
    for j, d in enumerate(inst.jobs):
        groups.setdefault(id(d), (d, []))[1].append(j)
    for d, idx in groups.values():
        cum = np.cumsum(d.probs)
        cum[-1] = 1.0
        k = np.searchsorted(cum, u[idx], side="right")
        k = np.minimum(k, len(d.values) - 1)
        p[idx] = np.asarray(d.values)[k]
    return Realization(tuple(p))


@dataclass(frozen=True)
class Placement:
    job: int
    machine: int
    start: float
    completion: float


@dataclass(frozen=True)
class ReassignmentEvent:
    time: float
    job: int
    from_machine: int | None  # None when the job had not been queued anywhere yet
    to_machine: int
    earliest_start: float


@dataclass(frozen=True)
class ScheduleTrace:
    """Per-job placements plus the sequence of queue-change events."""

    placements: tuple[Placement, ...]
    reassignment_events: tuple[ReassignmentEvent, ...] = field(default_factory=tuple)

    def makespan(self) -> float:
        return max((pl.completion for pl in self.placements), default=0.0)

    def start_of(self) -> dict[int, float]:
        return {pl.job: pl.start for pl in self.placements}


def makespan(tr: ScheduleTrace) -> float:
    """Maximum completion time over all jobs; 0 for an empty job set."""
    return tr.makespan()


def validate_trace(
    inst: Instance,
    real: Realization,
    tr: ScheduleTrace,
    policy_class: str = "any",
    delta: float | None = None,
    tau: float | None = None,
) -> list[str]:
    """Check a trace against an instance/realization and a policy class.

    ``policy_class`` is one of ``fixed``, ``delta`` (pass ``delta``),
    ``shift`` (pass ``tau``) or ``any``.  Returns a list of human-readable
    violations; an empty list means the trace is valid.  Structural problems
    (wrong job count, unknown jobs) raise :class:`TraceStructureError` instead.
    """
    if policy_class not in ("fixed", "delta", "shift", "any"):
        raise ValueError(f"unknown policy class {policy_class!r}")
    if policy_class == "delta" and (delta is None or delta <= 0):
        raise ValueError("delta policy class requires delta > 0")
    if policy_class == "shift" and (tau is None or tau <= 0):
        raise ValueError("shift policy class requires tau > 0")
    if len(real.p) != inst.n:
        raise TraceStructureError(f"realization has {len(real.p)} durations for {inst.n} jobs")

    seen: dict[int, Placement] = {}
    for pl in tr.placements:
        if not 0 <= pl.job < inst.n:
            raise TraceStructureError(f"placement refers to unknown job {pl.job}")
        if not 0 <= pl.machine < inst.m:
            raise TraceStructureError(f"placement refers to unknown machine {pl.machine}")
        if pl.job in seen:
            raise TraceStructureError(f"job {pl.job} placed twice")
        seen[pl.job] = pl
    if len(seen) != inst.n:
        missing = sorted(set(range(inst.n)) - set(seen))
        raise TraceStructureError(f"jobs never placed: {missing[:10]}")

    violations: list[str] = []
    for pl in tr.placements:
        if abs(pl.completion - pl.start - real.p[pl.job]) > TIME_EPS:
            violations.append(
                f"job {pl.job}: duration {pl.completion - pl.start} != realized {real.p[pl.job]}"
            )
        if pl.start < -TIME_EPS:
            violations.append(f"job {pl.job}: negative start {pl.start}")

    by_machine: dict[int, list[Placement]] = {}
    for pl in tr.placements:
        by_machine.setdefault(pl.machine, []).append(pl)
    for i, pls in by_machine.items():
        pls.sort(key=lambda pl: (pl.start, pl.completion))
        prev_end, prev_job = None, None
        for pl in pls:
            if pl.completion - pl.start <= TIME_EPS:
                continue  # zero-length intervals never overlap anything
            if prev_end is not None and pl.start < prev_end - TIME_EPS:
                violations.append(
                    f"machine {i}: job {pl.job} starts at {pl.start} before job "
                    f"{prev_job} completes at {prev_end}"
                )
            prev_end, prev_job = pl.completion, pl.job

    for ev in tr.reassignment_events:
        if ev.job not in seen:
            raise TraceStructureError(f"reassignment of unknown job {ev.job}")

    if policy_class == "fixed" and tr.reassignment_events:
        violations.append(f"fixed policy recorded {len(tr.reassignment_events)} reassignments")
    elif policy_class == "delta":
        for ev in tr.reassignment_events:
            start = seen[ev.job].start
            if start < ev.time + delta - TIME_EPS:
                violations.append(
                    f"job {ev.job} reassigned at {ev.time} starts at {start} < {ev.time + delta}"
                )
    elif policy_class == "shift":
        for ev in tr.reassignment_events:
            k = round(ev.time / tau)
            if abs(ev.time - k * tau) > TIME_EPS:
                violations.append(f"reassignment at {ev.time} is not a multiple of tau={tau}")
    return violations


# ---------------------------------------------------------------------------
# External interfaces: instance JSON files and trace CSV export
# ---------------------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    return {"m": inst.m, "jobs": [[[v, p] for v, p in zip(d.values, d.probs)] for d in inst.jobs]}


def instance_from_dict(data: dict) -> Instance:
    jobs = tuple(Dist.from_pairs(job) for job in data["jobs"])
    return Instance(int(data["m"]), jobs)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst)))


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))


def trace_to_csv(tr: ScheduleTrace, path: str | Path) -> None:
    """Write placements as rows (job, machine, start, completion)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["job", "machine", "start", "completion"])
        for pl in sorted(tr.placements, key=lambda pl: pl.job):
            w.writerow([pl.job, pl.machine, repr(pl.start), repr(pl.completion)])
