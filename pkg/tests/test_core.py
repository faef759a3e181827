import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsched.core import (
    Dist,
    Instance,
    Placement,
    Realization,
    ReassignmentEvent,
    ScheduleTrace,
    TraceStructureError,
    bernoulli_instance,
    expected_value,
    instance_from_dict,
    instance_to_dict,
    makespan,
    sample_realization,
    stream,
    validate_trace,
)


class TestDist:
    def test_expectation_bernoulli(self):
        d = Dist((0.0, 1.0), (0.75, 0.25))
        assert expected_value(d) == 0.25

    def test_expectation_point_mass(self):
        assert expected_value(Dist.point(3.0)) == 3.0

    def test_expectation_symmetric_two_point(self):
        assert expected_value(Dist((0.0, 2.0), (0.5, 0.5))) == 1.0

    def test_canonicalization_merges_and_sorts(self):
        d = Dist((2.0, 0.0, 2.0), (0.25, 0.5, 0.25))
        assert d.values == (0.0, 2.0)
        assert d.probs == (0.5, 0.5)

    def test_zero_probability_atoms_dropped(self):
        d = Dist((0.0, 1.0), (0.0, 1.0))
        assert d.values == (1.0,)

    def test_bad_mass_rejected(self):
        with pytest.raises(ValueError):
            Dist((0.0, 1.0), (0.5, 0.4))

    def test_negative_value_rejected(self):
        with pytest.raises(ValueError):
            Dist((-1.0,), (1.0,))

    @given(st.lists(st.tuples(st.floats(0, 50), st.floats(0.01, 1)), min_size=1, max_size=6))
    @settings(max_examples=60, deadline=None)
    def test_canonical_mass_sums_to_one(self, pairs):
        total = sum(p for _, p in pairs)
        d = Dist.from_pairs((v, p / total) for v, p in pairs)
        assert abs(sum(d.probs) - 1.0) <= 1e-12
        assert all(a < b for a, b in zip(d.values, d.values[1:]))


class TestBernoulliInstance:
    def test_degenerate_n1_is_point_mass(self):
        inst = bernoulli_instance(1, 2)
        assert inst.n == 2
        assert all(d.values == (1.0,) for d in inst.jobs)

    def test_job_count_and_probability(self):
        inst = bernoulli_instance(2, 3)
        assert inst.n == 6
        assert all(d.probs == (0.5, 0.5) for d in inst.jobs)

    def test_total_expected_load(self):
        inst = bernoulli_instance(4, 1)
        assert inst.n == 4
        assert sum(expected_value(d) for d in inst.jobs) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            bernoulli_instance(0, 2)
        with pytest.raises(ValueError):
            bernoulli_instance(2, 0)


class TestSampling:
    def test_deterministic_jobs_unique_realization(self):
        inst = Instance(2, (Dist.point(3.0), Dist.point(1.0)))
        for seed in (0, 1, 99):
            assert sample_realization(inst, stream(seed)).p == (3.0, 1.0)

    def test_same_seed_same_realization(self):
        inst = bernoulli_instance(5, 4)
        a = sample_realization(inst, stream(7, 3))
        b = sample_realization(inst, stream(7, 3))
        assert a.p == b.p

    def test_long_job_frequency_matches_binomial_error(self):
        # N=10, m=10, 1e5 samples: 1e6 draws at p = 0.1
        inst = bernoulli_instance(10, 10)
        gen = stream(123)
        count = 0
        for _ in range(1000):  # 1000 realizations x 100 jobs = 1e5 draws
            count += sum(sample_realization(inst, gen).p)
        frac = count / 1e5
        se = math.sqrt(0.1 * 0.9 / 1e5)
        assert abs(frac - 0.1) <= 4 * se

    def test_values_live_on_support(self):
        inst = Instance(1, (Dist((1.0, 2.0, 5.0), (0.2, 0.3, 0.5)),) * 3)
        r = sample_realization(inst, stream(5))
        assert all(x in (1.0, 2.0, 5.0) for x in r.p)


def _trace(*placements, events=()):
    return ScheduleTrace(tuple(Placement(*pl) for pl in placements), tuple(events))


class TestMakespanAndValidation:
    def test_zero_work(self):
        inst = Instance(1, (Dist.point(0.0),) * 2)
        tr = _trace((0, 0, 0.0, 0.0), (1, 0, 0.0, 0.0))
        assert makespan(tr) == 0.0

    def test_single_job(self):
        tr = _trace((0, 0, 0.0, 1.0))
        assert makespan(tr) == 1.0

    def test_fixed_trace_valid_as_delta(self):
        inst = Instance(2, (Dist.point(2.0), Dist.point(1.0)))
        real = Realization((2.0, 1.0))
        tr = _trace((0, 0, 0.0, 2.0), (1, 1, 0.0, 1.0))
        assert validate_trace(inst, real, tr, "delta", delta=1.0) == []
        assert validate_trace(inst, real, tr, "fixed") == []

    def test_delta_violation_detected(self):
        # reassigned at t=2 but started at 2.5 < 2 + 1
        inst = Instance(2, (Dist.point(1.0),))
        real = Realization((1.0,))
        ev = ReassignmentEvent(2.0, 0, 0, 1, 3.0)
        tr = _trace((0, 1, 2.5, 3.5), events=[ev])
        out = validate_trace(inst, real, tr, "delta", delta=1.0)
        assert len(out) == 1 and "reassigned" in out[0]

    def test_shift_violation_detected(self):
        inst = Instance(2, (Dist.point(1.0),))
        real = Realization((1.0,))
        ev = ReassignmentEvent(1.5, 0, 0, 1, 1.5)
        tr = _trace((0, 1, 2.0, 3.0), events=[ev])
        assert validate_trace(inst, real, tr, "shift", tau=1.0) != []
        assert validate_trace(inst, real, tr, "shift", tau=0.5) == []

    def test_fixed_class_rejects_any_event(self):
        inst = Instance(2, (Dist.point(1.0),))
        real = Realization((1.0,))
        ev = ReassignmentEvent(1.0, 0, 0, 1, 1.0)
        tr = _trace((0, 1, 1.0, 2.0), events=[ev])
        assert validate_trace(inst, real, tr, "fixed") != []

    def test_overlap_detected(self):
        inst = Instance(1, (Dist.point(2.0), Dist.point(2.0)))
        real = Realization((2.0, 2.0))
        tr = _trace((0, 0, 0.0, 2.0), (1, 0, 1.0, 3.0))
        out = validate_trace(inst, real, tr, "any")
        assert any("before job" in v for v in out)

    def test_zero_length_jobs_never_overlap(self):
        inst = Instance(1, (Dist.point(2.0), Dist.point(0.0)))
        real = Realization((2.0, 0.0))
        tr = _trace((0, 0, 0.0, 2.0), (1, 0, 1.0, 1.0))
        assert validate_trace(inst, real, tr, "any") == []

    def test_wrong_duration_detected(self):
        inst = Instance(1, (Dist.point(2.0),))
        real = Realization((2.0,))
        tr = _trace((0, 0, 0.0, 1.0))
        assert validate_trace(inst, real, tr, "any") != []

    def test_missing_job_is_structural(self):
        inst = Instance(1, (Dist.point(1.0), Dist.point(1.0)))
        real = Realization((1.0, 1.0))
        tr = _trace((0, 0, 0.0, 1.0))
        with pytest.raises(TraceStructureError):
            validate_trace(inst, real, tr, "any")

    def test_length_mismatch_is_structural(self):
        inst = Instance(1, (Dist.point(1.0),))
        with pytest.raises(TraceStructureError):
            validate_trace(inst, Realization((1.0, 1.0)), _trace((0, 0, 0.0, 1.0)), "any")


class TestInstanceIO:
    def test_round_trip(self):
        inst = Instance(3, (Dist((0.0, 2.5), (0.4, 0.6)), Dist.point(1.0)))
        again = instance_from_dict(instance_to_dict(inst))
        assert again == inst

    def test_json_shape(self):
        inst = bernoulli_instance(2, 1)
        d = instance_to_dict(inst)
        assert d["m"] == 1
        assert d["jobs"][0] == [[0.0, 0.5], [1.0, 0.5]]
