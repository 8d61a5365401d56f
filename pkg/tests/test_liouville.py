import dataclasses
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from evp_lab.arithmetic import golden_mean, liouville_alpha
from evp_lab.environment import classify
from evp_lab.errors import PreconditionFailed
from evp_lab.liouville import (
    amplitude_ladder_holds,
    build_observable,
    lemma_certificate,
    reachable_support_check,
    slow_mixing_witness,
    smoothness_increments,
    support_sets,
    tail_perturbation_holds,
)
from evp_lab.periodic import PeriodicFunction as PF
from evp_lab.periodic import logistic


@pytest.fixture(scope="module")
def scheduled():
    sch = liouville_alpha([2, 3], growth=True)
    env = classify(sch.rotation, logistic())
    return sch, env


@pytest.fixture(scope="module")
def observable(scheduled):
    sch, env = scheduled
    return build_observable(env, sch, stages=2)


def test_support_set_q1():
    plus, minus = support_sets(1)
    assert plus.intervals == [(Fraction(15, 16), Fraction(1, 16))]
    assert plus.measure() == Fraction(1, 8)
    assert minus.centers == [Fraction(1, 2)]


def test_support_set_q4():
    plus, minus = support_sets(4)
    assert len(plus.intervals) == 4
    for lo, hi in plus.intervals:
        assert (hi - lo) % 1 == Fraction(1, 32)
    assert [c - Fraction(1, 8) for c in minus.centers] == plus.centers


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10 ** 6))
def test_support_measure_is_one_eighth(q):
    plus, minus = support_sets(q)
    assert plus.measure() == minus.measure() == Fraction(1, 8)
    # arcs are disjoint: radius 1/(16q) is below half the spacing 1/(2q)
    assert 2 * plus.radius < Fraction(1, 2 * q)


def test_lemma_certificates_both_stages(scheduled):
    sch, env = scheduled
    for stage in sch.stages:
        plus, minus = support_sets(stage.q)
        r = 1 / (16 * stage.q)
        for x in (0.0, 0.999 * r, float(minus.centers[0]) - 0.999 * r):
            cert = lemma_certificate(env, stage.q, stage.p, stage.gamma, x)
            assert cert.support_ok is True
            assert cert.exact
            assert cert.bound_holds is True
            assert abs(cert.expectation) > math.sqrt(2) / 2


def test_lemma_outside_support_makes_no_claim(scheduled):
    sch, env = scheduled
    stage = sch.stages[0]
    cert = lemma_certificate(env, stage.q, stage.p, stage.gamma, 0.125)
    assert cert.side is None
    assert cert.bound_holds is None
    assert cert.support_ok is None


def test_lemma_requires_approximation(scheduled):
    sch, env = scheduled
    with pytest.raises(PreconditionFailed):
        lemma_certificate(env, 5, 3, 2.0, 0.0)


def test_support_check_catches_far_points():
    # alpha = 1/4 walks 0 onto 1/2, far from the + centre when q = 1
    assert not reachable_support_check(Fraction(1, 4), 1, 2, 0.0, "+")
    assert reachable_support_check(Fraction(1, 100), 1, 3, 0.0, "+")


def test_observable_stages(observable):
    assert len(observable.stages) == 2
    assert not observable.truncated
    for rec in observable.stages:
        assert rec.certified
        assert rec.support_ok
        assert rec.approximation_ok
        assert rec.g_measure >= 1 / 16
        assert rec.amplitude_hat == pytest.approx(rec.q ** -math.sqrt(rec.n + 1))
    assert observable.stages[1].growth_ok


def test_amplitude_ladder(observable):
    assert amplitude_ladder_holds(observable)
    assert tail_perturbation_holds(observable)
    a1, a2 = (s.amplitude_hat for s in observable.stages)
    assert a2 < 0.001 * a1


def test_smoothness_increments_reported(observable):
    inc = smoothness_increments(observable)
    assert len(inc) == 5
    assert inc[0] == observable.stages[-1].amplitude
    # the r-th increment is a_n (2 pi q_n)^r, exactly
    assert inc[3] == pytest.approx(inc[0] * (2 * math.pi * observable.stages[-1].q) ** 3)


def test_stage_one_witness(scheduled, observable):
    sch, env = scheduled
    rows = slow_mixing_witness(env, observable, rows_per_stage=64, stages={1})
    assert len(rows) == 64
    bound = 0.3 * 2 ** -math.sqrt(2)
    for row in rows:
        assert row.exact
        assert row.lower_bound == pytest.approx(bound)
        assert row.gap >= row.lower_bound
        assert row.holds


def test_zero_observable_makes_no_claim(scheduled, observable):
    sch, env = scheduled
    blank = dataclasses.replace(observable, phi=PF.constant(0.0), nu_phi=0.0, nu_phi_error=0.0)
    rows = slow_mixing_witness(env, blank, rows_per_stage=4, stages={1})
    assert rows
    assert all(r.gap == 0 and r.holds is None for r in rows)


def test_diophantine_alpha_refused(scheduled):
    sch, _ = scheduled
    golden_env = classify(golden_mean(), logistic())
    with pytest.raises(PreconditionFailed):
        build_observable(golden_env, sch, stages=1)


def test_stage_beyond_cap_truncates(scheduled):
    sch, env = scheduled
    obs = build_observable(env, sch, stages=2, dp_cap=1000)
    assert obs.truncated
    assert len(obs.stages) == 1
    assert "stage 2" in obs.notice

