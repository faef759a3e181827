"""Event-driven non-anticipatory policy engine plus the policies under study.

A policy sees only an :class:`Observation` (what has completed, what is
running and since when, which jobs have not started, and expected durations).
Realized durations of running or not-started jobs are never exposed; that is
the non-anticipativity boundary.  Between decision points machines execute
their queues greedily, subject only to earliest-start stamps on reassigned
jobs.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    TIME_EPS,
    Instance,
    Placement,
    Realization,
    ReassignmentEvent,
    ScheduleTrace,
    expected_value,
    sample_realization,
    stream,
)
from .prob import kstar as _kstar

MODES = ("fixed", "delta", "shift", "any")


class PolicyFault(RuntimeError):
    """A policy action referenced an unknown/started job or the run deadlocked."""


@dataclass(frozen=True)
class PolicyAction:
    """Queue changes requested at a decision point.

    ``moves`` is a list of (job, target machine, queue position or None for
    append); each job may appear at most once and must not have started.
    ``earliest_start`` applies to every moved job; in delta mode the engine
    raises it to at least now + delta.
    """

    moves: tuple[tuple[int, int, int | None], ...] = ()
    earliest_start: float | None = None


class Observation:
    """Read-only view of everything a policy may legally condition on."""

    __slots__ = ("_eng", "now")

    def __init__(self, eng: "_Engine", now: float):
        self._eng = eng
        self.now = now

    @property
    def m(self) -> int:
        return self._eng.m

    @property
    def n(self) -> int:
        return self._eng.n

    def expected(self, job: int) -> float:
        return self._eng.expected[job]

    def queued(self, machine: int) -> tuple[int, ...]:
        return tuple(self._eng.queues[machine])

    def completed(self) -> tuple[tuple[int, float], ...]:
        eng = self._eng
        return tuple((j, eng.p[j]) for j in range(eng.n) if eng.started[j] and eng.comp[j] <= self.now)

    def running(self) -> tuple[tuple[int, int, float], ...]:
        eng = self._eng
        return tuple(
            (eng.busy_job[i], i, eng.start[eng.busy_job[i]])
            for i in range(eng.m)
            if eng.busy_job[i] >= 0
        )

    def not_started(self) -> tuple[int, ...]:
        eng = self._eng
        return tuple(j for j in range(eng.n) if not eng.started[j])

    def unqueued(self) -> tuple[int, ...]:
        eng = self._eng
        return tuple(j for j in range(eng.n) if not eng.started[j] and eng.machine_of[j] < 0)

    def first_unqueued(self, count: int) -> tuple[int, ...]:
        """Lowest ``count`` job ids that are neither started nor queued.

        Amortized O(1) per consumed job: jobs below the scan cursor can never
        return to the unqueued state, so the cursor only moves forward.
        """
        eng = self._eng
        out = []
        j = eng.pool_hint
        while j < eng.n and len(out) < count:
            if not eng.started[j] and eng.machine_of[j] < 0:
                out.append(j)
            elif not out:
                eng.pool_hint = j + 1
            j += 1
        return tuple(out)

    def machine_idle(self, machine: int) -> bool:
        """No job is running on the machine (completion exactly now counts as idle)."""
        return self._eng.busy_job[machine] < 0

    def idle_machines(self) -> tuple[int, ...]:
        return tuple(i for i in range(self._eng.m) if self._eng.busy_job[i] < 0)

    def idle_empty_machines(self) -> tuple[int, ...]:
        eng = self._eng
        return tuple(i for i in range(eng.m) if eng.busy_job[i] < 0 and not eng.queues[i])


class Policy:
    """Base policy: fixed assignment, no decision points.

    Subclasses may override ``initial_assignment`` (return per-machine ordered
    queues, or None to leave every job unqueued), ``decision_times`` (static
    decision schedule) and ``on_decision_point``.  Policies with
    ``adaptive_on_idle = True`` are additionally consulted whenever a machine
    is idle with an empty queue and unqueued jobs remain.  Per-run state must
    be (re)initialized inside ``initial_assignment``.
    """

    adaptive_on_idle = False

    def initial_assignment(self, inst: Instance) -> list[list[int]] | None:
        return None

    def decision_times(self, inst: Instance) -> Sequence[float]:
        return ()

    def on_decision_point(self, obs: Observation) -> PolicyAction | None:
        return None


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

_K_COMPLETE, _K_DECISION, _K_STAMP = 0, 1, 2


class _Engine:
    def __init__(self, inst: Instance, real: Realization, record_events: bool):
        self.inst = inst
        self.m = inst.m
        self.n = inst.n
        self.p = real.p
        self.expected = [expected_value(d) for d in inst.jobs]
        self.queues: list[deque[int]] = [deque() for _ in range(self.m)]
        self.machine_of = [-1] * self.n  # queue membership; -1 = unqueued
        self.pool_hint = 0
        self.started = bytearray(self.n)
        self.start = [0.0] * self.n
        self.comp = [0.0] * self.n
        self.stamp = [0.0] * self.n
        self.busy_job = [-1] * self.m
        self.ncomplete = 0
        self.events: list[tuple[float, int, int]] = []
        self.record_events = record_events
        self.rec: list[ReassignmentEvent] = []

    def enqueue_initial(self, queues: list[list[int]]) -> None:
        seen = set()
        for i, q in enumerate(queues):
            for j in q:
                if j in seen or not 0 <= j < self.n:
                    raise PolicyFault(f"initial assignment repeats or misnames job {j}")
                seen.add(j)
                self.queues[i].append(j)
                self.machine_of[j] = i

    def apply_action(self, action: PolicyAction, now: float, mode: str, delta: float | None) -> list[int]:
        earliest = now if action.earliest_start is None else action.earliest_start
        if mode == "delta":
            earliest = max(earliest, now + delta)
        if earliest < now - TIME_EPS:
            raise PolicyFault(f"earliest start {earliest} lies before now {now}")
        moved = [j for j, _, _ in action.moves]
        if len(set(moved)) != len(moved):
            raise PolicyFault("a job appears twice in one action")
        touched = []
        for j, target, _ in action.moves:
            if not 0 <= j < self.n:
                raise PolicyFault(f"action names unknown job {j}")
            if self.started[j]:
                raise PolicyFault(f"action reassigns already-started job {j}")
            if not 0 <= target < self.m:
                raise PolicyFault(f"action names unknown machine {target}")
            src = self.machine_of[j]
            if src >= 0:
                self.queues[src].remove(j)
                touched.append(src)
        for j, target, pos in action.moves:
            src = self.machine_of[j]
            if pos is None or pos >= len(self.queues[target]):
                self.queues[target].append(j)
            else:
                self.queues[target].insert(max(pos, 0), j)
            self.machine_of[j] = target
            self.stamp[j] = max(self.stamp[j], earliest)
            touched.append(target)
            if self.record_events:
                self.rec.append(
                    ReassignmentEvent(now, j, src if src >= 0 else None, target, self.stamp[j])
                )
        return touched

    def try_start(self, i: int, now: float) -> None:
        """Greedy queue execution on one idle machine; zero-length jobs cascade."""
        while self.busy_job[i] < 0 and self.queues[i]:
            j = self.queues[i][0]
            if self.stamp[j] > now + TIME_EPS:
                heapq.heappush(self.events, (self.stamp[j], _K_STAMP, i))
                return
            self.queues[i].popleft()
            self.machine_of[j] = i
            self.started[j] = 1
            self.start[j] = now
            c = now + self.p[j]
            self.comp[j] = c
            if self.p[j] <= 0.0:
                self.ncomplete += 1
                continue
            self.busy_job[i] = j
            heapq.heappush(self.events, (c, _K_COMPLETE, i))
            return

    def trace(self) -> ScheduleTrace:
        placements = tuple(
            Placement(j, self.machine_of[j], self.start[j], self.comp[j]) for j in range(self.n)
        )
        return ScheduleTrace(placements, tuple(self.rec))


def run_policy(
    inst: Instance,
    real: Realization,
    policy: Policy,
    mode: str = "any",
    delta: float | None = None,
    tau: float | None = None,
    record_events: bool = True,
) -> ScheduleTrace:
    """Execute a policy on one realization and return the resulting trace.

    ``mode`` restricts adaptivity: ``fixed`` forbids decision points
    altogether, ``delta`` stamps every reassigned job with earliest start
    now + delta, ``shift`` only admits decision times at integer multiples of
    tau, and ``any`` is unrestricted (fully adaptive policies such as list
    scheduling).  Events sharing one time are processed completions first,
    then decisions, then job starts, so a job starting exactly at a decision
    time is still reassignable there.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "delta" and (delta is None or delta <= 0):
        raise ValueError("delta mode requires delta > 0")
    if mode == "shift" and (tau is None or tau <= 0):
        raise ValueError("shift mode requires tau > 0")
    if len(real.p) != inst.n:
        raise ValueError(f"realization has {len(real.p)} durations for {inst.n} jobs")
    for j, d in enumerate(inst.jobs):
        if real.p[j] not in d.values:
            raise ValueError(f"duration p[{j}]={real.p[j]} is outside the job's support")

    eng = _Engine(inst, real, record_events)
    initial = policy.initial_assignment(inst)
    if initial is not None:
        if len(initial) != inst.m:
            raise PolicyFault("initial assignment must list one queue per machine")
        eng.enqueue_initial([list(q) for q in initial])

    times = list(policy.decision_times(inst))
    if mode == "fixed" and (times or policy.adaptive_on_idle):
        raise PolicyFault("fixed mode forbids decision points")
    for t in times:
        if t <= 0:
            raise PolicyFault("decision times must be positive (time 0 is the initial assignment)")
        if mode == "shift" and abs(t - round(t / tau) * tau) > TIME_EPS:
            raise PolicyFault(f"decision time {t} is not a multiple of tau={tau}")
        heapq.heappush(eng.events, (float(t), _K_DECISION, -1))

    def wake_phase(now: float, machines: Sequence[int]) -> None:
        for i in machines:
            eng.try_start(i, now)
        while policy.adaptive_on_idle and eng.ncomplete < eng.n:
            obs = Observation(eng, now)
            if not obs.idle_empty_machines() or not obs.unqueued():
                return
            action = policy.on_decision_point(obs)
            if action is None or not action.moves:
                return
            touched = eng.apply_action(action, now, mode, delta)
            for i in dict.fromkeys(touched):
                eng.try_start(i, now)

    wake_phase(0.0, range(eng.m))
    while eng.events and eng.ncomplete < eng.n:
        now = eng.events[0][0]
        woken: list[int] = []
        decisions = 0
        while eng.events and eng.events[0][0] == now:
            _, kind, i = heapq.heappop(eng.events)
            if kind == _K_COMPLETE:
                eng.busy_job[i] = -1
                eng.ncomplete += 1
                woken.append(i)
            elif kind == _K_DECISION:
                decisions += 1
            else:
                woken.append(i)
        for _ in range(decisions):
            action = policy.on_decision_point(Observation(eng, now))
            if action is not None and action.moves:
                woken.extend(eng.apply_action(action, now, mode, delta))
        wake_phase(now, dict.fromkeys(woken))

    if eng.ncomplete < eng.n:
        stuck = [j for j in range(eng.n) if not eng.started[j]]
        raise PolicyFault(f"run stalled with jobs never started: {stuck[:10]}")
    return eng.trace()


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

def _deal_by_expectation(jobs: Sequence[int], expectations: Sequence[float], machines: Sequence[int]) -> dict[int, list[int]]:
    """List-schedule jobs (sorted by nonincreasing expectation, ties by index)
    onto the given machines using expected durations; returns queue per machine."""
    order = sorted(jobs, key=lambda j: (-expectations[j], j))
    heap = [(0.0, i) for i in sorted(machines)]
    heapq.heapify(heap)
    queues: dict[int, list[int]] = {i: [] for i in machines}
    for j in order:
        load, i = heapq.heappop(heap)
        queues[i].append(j)
        heapq.heappush(heap, (load + expectations[j], i))
    return queues


def lept_fix_assignment(inst: Instance) -> list[list[int]]:
    """Fixed assignment: list scheduling of the expectation-sorted jobs on expected durations."""
    exps = [expected_value(d) for d in inst.jobs]
    dealt = _deal_by_expectation(range(inst.n), exps, range(inst.m))
    return [dealt[i] for i in range(inst.m)]


def compute_T(inst: Instance) -> float:
    """Twice the larger of average expected load and maximum expected duration."""
    exps = [expected_value(d) for d in inst.jobs]
    return 2.0 * max(sum(exps) / inst.m, max(exps))


def compute_kstar(m: int) -> int:
    """Checkpoint count parameter floor(log2((2/3) log2(m) + 1)) + 2; needs m >= 2."""
    return _kstar(m)


class FixedAssignmentPolicy(Policy):
    """Runs a prescribed per-machine queue list with no adaptivity."""

    def __init__(self, queues: Sequence[Sequence[int]] | None = None,
                 builder: Callable[[Instance], list[list[int]]] | None = None):
        if (queues is None) == (builder is None):
            raise ValueError("give exactly one of queues or builder")
        self._queues = queues
        self._builder = builder

    def initial_assignment(self, inst: Instance) -> list[list[int]]:
        if self._queues is not None:
            return [list(q) for q in self._queues]
        return self._builder(inst)


class LeptFixPolicy(FixedAssignmentPolicy):
    def __init__(self):
        super().__init__(builder=lept_fix_assignment)


class ListSchedulingPolicy(Policy):
    """Whenever a machine is idle, start the lowest-index waiting job on it."""

    adaptive_on_idle = True

    def initial_assignment(self, inst: Instance) -> None:
        return None

    def on_decision_point(self, obs: Observation) -> PolicyAction | None:
        idle = obs.idle_empty_machines()
        waiting = obs.first_unqueued(len(idle))
        moves = tuple((j, i, None) for j, i in zip(waiting, idle))
        return PolicyAction(moves) if moves else None


class BalancingPolicy(Policy):
    """Rebalance every not-started job evenly over all machines at integer times.

    This is the round policy of the Bernoulli lower-bound dynamics; its
    reassignments land on integer times only, so traces validate as
    shift(tau=1).
    """

    def initial_assignment(self, inst: Instance) -> list[list[int]]:
        return self._deal(range(inst.n), inst.m)

    def decision_times(self, inst: Instance) -> Sequence[float]:
        return [float(t) for t in range(1, inst.n + 2)]

    def on_decision_point(self, obs: Observation) -> PolicyAction | None:
        rem = obs.not_started()
        if not rem:
            return None
        moves = []
        for i, chunk in enumerate(self._deal(rem, obs.m)):
            moves.extend((j, i, None) for j in chunk)
        return PolicyAction(tuple(moves))

    @staticmethod
    def _deal(jobs: Sequence[int], m: int) -> list[list[int]]:
        jobs = sorted(jobs)
        base, extra = divmod(len(jobs), m)
        out, pos = [], 0
        for i in range(m):
            c = base + (1 if i < extra else 0)
            out.append(list(jobs[pos : pos + c]))
            pos += c
        return out


class LeptDeltaAlphaPolicy(Policy):
    """Fixed start, then periodic redeal of not-started jobs to reliably idle machines.

    Checkpoints sit at tau_k = k (delta + alpha T) for k = 1..kstar+1.  At
    each checkpoint the not-started jobs are re-dealt, expectation-sorted, to
    the machines found idle at every checkpoint so far, and stamped so they
    cannot start before tau_k + delta.  If no machine qualifies the redeal is
    skipped and queues keep their prior order.  With a single machine there
    are no checkpoints and the policy degenerates to the fixed assignment.
    """

    def __init__(self, delta: float, alpha: float = 33.0, use_all_idle: bool = False):
        if delta <= 0 or alpha <= 1:
            raise ValueError("need delta > 0 and alpha > 1")
        self.delta = delta
        self.alpha = alpha
        self.use_all_idle = use_all_idle
        self._always_idle: list[bool] = []

    def period(self, inst: Instance) -> float:
        return self.delta + self.alpha * compute_T(inst)

    def initial_assignment(self, inst: Instance) -> list[list[int]]:
        self._always_idle = [True] * inst.m
        return lept_fix_assignment(inst)

    def decision_times(self, inst: Instance) -> Sequence[float]:
        if inst.m < 2:
            return ()
        period = self.period(inst)
        return [k * period for k in range(1, compute_kstar(inst.m) + 2)]

    def on_decision_point(self, obs: Observation) -> PolicyAction | None:
        idle_now = set(obs.idle_machines())
        for i in range(obs.m):
            if i not in idle_now:
                self._always_idle[i] = False
        if self.use_all_idle:
            eligible = sorted(idle_now)
        else:
            eligible = [i for i in range(obs.m) if self._always_idle[i]]
        rem = obs.not_started()
        if not rem or not eligible:
            return None
        exps = {j: obs.expected(j) for j in rem}
        dealt = _deal_by_expectation(rem, exps, eligible)
        moves = []
        for i in eligible:
            moves.extend((j, i, None) for j in dealt[i])
        return PolicyAction(tuple(moves), earliest_start=obs.now + self.delta)


def list_scheduling_policy() -> ListSchedulingPolicy:
    return ListSchedulingPolicy()


def lept_delta_alpha_policy(delta: float, alpha: float = 33.0, use_all_idle: bool = False) -> LeptDeltaAlphaPolicy:
    return LeptDeltaAlphaPolicy(delta, alpha, use_all_idle)


def list_scheduling_makespan(inst: Instance, real: Realization) -> float:
    """Fast equivalent of running list scheduling through the engine.

    Serves the next job to the machine that frees first.  Zero-duration jobs
    complete on the spot without changing any machine's free time or the
    running maximum, so their heap traffic is skipped.  Makespan equality
    with the engine is covered by tests (machine identities may differ on
    ties; the free-time multiset evolves identically).
    """
    heap = [(0.0, i) for i in range(inst.m)]
    mk = 0.0
    for j in range(inst.n):
        d = real.p[j]
        if d <= 0.0:
            continue
        t, i = heapq.heappop(heap)
        c = t + d
        if c > mk:
            mk = c
        heapq.heappush(heap, (c, i))
    return mk


# ---------------------------------------------------------------------------
# Checkpoint metrics and Monte Carlo estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckpointMetrics:
    """Normalized remaining expected load and always-available machine fraction.

    ``xi[k]`` and ``a[k]`` refer to checkpoint k with the convention
    xi[0] = a[0] = 1; both sequences are nonincreasing and live in [0, 1].
    """

    taus: tuple[float, ...]
    xi: tuple[float, ...]
    a: tuple[float, ...]


def checkpoint_metrics(tr: ScheduleTrace, inst: Instance, delta: float, alpha: float = 33.0) -> CheckpointMetrics:
    """Measure xi_k (remaining expected load / Tm) and a_k from a finished trace."""
    T = compute_T(inst)
    if inst.m < 2:
        return CheckpointMetrics((), (1.0,), (1.0,))
    period = delta + alpha * T
    taus = [k * period for k in range(1, compute_kstar(inst.m) + 2)]
    for ev in tr.reassignment_events:
        if abs(ev.time - round(ev.time / period) * period) > TIME_EPS:
            raise ValueError(
                f"trace has a reassignment at {ev.time}, not on the checkpoint grid of {period}"
            )
    exps = [expected_value(d) for d in inst.jobs]
    total = T * inst.m
    busy = [[] for _ in range(inst.m)]
    for pl in tr.placements:
        if pl.completion - pl.start > TIME_EPS:
            busy[pl.machine].append((pl.start, pl.completion))
    xi = [1.0]
    a = [1.0]
    always_idle = [True] * inst.m
    for tau_k in taus:
        rem = sum(exps[pl.job] for pl in tr.placements if pl.start > tau_k - TIME_EPS)
        xi.append(rem / total)
        for i in range(inst.m):
            if any(s < tau_k - TIME_EPS and c > tau_k + TIME_EPS for s, c in busy[i]):
                always_idle[i] = False
        a.append(sum(always_idle) / inst.m)
    return CheckpointMetrics(tuple(taus), tuple(xi), tuple(a))


def estimate_expected_makespan(
    inst: Instance,
    policy: Policy,
    mode: str,
    trials: int,
    master_seed: int,
    delta: float | None = None,
    tau: float | None = None,
) -> tuple[float, float]:
    """Monte Carlo mean makespan with a normal-approximation 95% half-width.

    Trial streams derive from (master_seed, trial index) and the aggregation
    runs in trial order, so the result does not depend on execution order.
    """
    if trials < 1:
        raise ValueError("need trials >= 1")
    mks = np.empty(trials)
    for trial in range(trials):
        real = sample_realization(inst, stream(master_seed, trial))
        tr = run_policy(inst, real, policy, mode, delta=delta, tau=tau, record_events=False)
        mks[trial] = tr.makespan()
    mean = float(mks.mean())
    hw = 1.96 * float(mks.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
    return mean, hw
