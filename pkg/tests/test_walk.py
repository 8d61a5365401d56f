import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evp_lab.arithmetic import golden_mean
from evp_lab.environment import apply_T, classify, invariant_density
from evp_lab.errors import PreconditionFailed, SegmentIncomplete, StepCapExceeded
from evp_lab.periodic import PeriodicFunction as PF
from evp_lab.periodic import logistic
from evp_lab.walk import (
    LazyEnvironment,
    backward_evolve,
    cesaro_nu,
    clt_experiment,
    empirical_distribution,
    evolve_exact,
    evolve_from,
    expectation,
    expectations_at,
    fit_slope,
    mixing_curve,
    path_enumeration,
    sample_path,
    segment_stop,
    total_variation,
)

ALPHA = golden_mean()
HALF = classify(ALPHA, PF.constant(0.5))
SYM = classify(ALPHA, logistic())
ASYM = classify(ALPHA, logistic(0.5))
PSI = PF.cos(1) + PF.sin(2)


def test_zero_steps_is_point_mass():
    d = evolve_exact(SYM, 0.3, 0)
    assert d.probabilities.tolist() == [1.0]
    assert expectation(d, PSI, ALPHA) == PSI(np.array([0.3]))[0]


def test_fair_two_steps():
    d = evolve_exact(HALF, 0.0, 2)
    assert d.probabilities.tolist() == [0.25, 0.0, 0.5, 0.0, 0.25]


@pytest.mark.parametrize("env", [SYM, ASYM], ids=["symmetric", "asymmetric"])
def test_path_oracle(env):
    d = evolve_exact(env, 0.3, 5)
    o = path_enumeration(env, 0.3, 5)
    assert np.max(np.abs(d.probabilities - o.probabilities)) < 1e-14


def test_lazy_path_oracle():
    lazy = LazyEnvironment.from_environment(SYM, PF.constant(0.3) + PF.cos(1, 0.1))
    d = evolve_exact(lazy, 0.1, 5)
    o = path_enumeration(lazy, 0.1, 5)
    assert np.max(np.abs(d.probabilities - o.probabilities)) < 1e-14


def test_expectation_of_constant():
    d = evolve_exact(ASYM, 0.7, 40)
    assert expectation(d, PF.constant(1.0), ALPHA) == pytest.approx(1.0, abs=1e-13)


def test_mass_conserved_long_run():
    d = evolve_exact(ASYM, 0.2, 10 ** 4)
    assert abs(d.mass() - 1.0) < 1e-12


def test_step_cap():
    with pytest.raises(StepCapExceeded):
        evolve_exact(SYM, 0.0, 10, cap=8)


def test_half_geometric_decay():
    c = math.cos(2 * math.pi * float(ALPHA))
    ns = [1, 5, 20, 64, 200]
    got = expectations_at(HALF, 0.37, PF.cos(1), ns)
    for n in ns:
        assert got[n] == pytest.approx(c ** n * math.cos(2 * math.pi * 0.37), abs=1e-12)


def test_semigroup():
    for n, m in ((1, 1), (17, 30), (64, 64)):
        a = evolve_from(SYM, evolve_exact(SYM, 0.3, n), m)
        b = evolve_exact(SYM, 0.3, n + m)
        assert np.max(np.abs(a.probabilities - b.probabilities)) < 1e-12


def test_duality_forward_backward():
    f = PSI
    for n in range(1, 31):
        f = apply_T(ASYM, f)
    forward = expectation(evolve_exact(ASYM, 0.3, 30), PSI, ALPHA)
    assert abs(forward - f(np.array([0.3]))[0]) < 30 * 1e-12


def test_backward_evolve_certified_bound():
    f, err = backward_evolve(SYM, PSI, 200, K_keep=128)
    for x in (0.0, 0.3, 0.81):
        exact = expectations_at(SYM, x, PSI, [200])[200]
        assert abs(f(np.array([x]))[0] - exact) <= err + 1e-13


def test_parity_non_lazy():
    for n in (7, 8):
        d = evolve_exact(ASYM, 0.5, n)
        wrong = d.probabilities[(d.offsets + n) % 2 == 1]
        assert np.all(wrong == 0)


def test_monte_carlo_matches_exact():
    exact = evolve_exact(SYM, 0.3, 10)
    mc = empirical_distribution(SYM, 0.3, 10, 10 ** 5, seed=12345)
    assert total_variation(exact, mc) < 0.02


def test_mixing_curve_constant_psi():
    curve = mixing_curve(SYM, 0.3, PF.constant(1.0), invariant_density(SYM), [16, 32, 64])
    assert all(abs(r[3]) < 1e-13 for r in curve.rows)


def test_fit_slope_recovers_power_law():
    ns = np.array([2.0 ** k for k in range(4, 12)])
    slope, r2, censored = fit_slope(ns, 3 * ns ** -2.5, np.zeros_like(ns))
    assert slope == pytest.approx(-2.5)
    assert r2 == pytest.approx(1.0)
    assert not censored


def test_fit_slope_censored_bound():
    ns = np.array([1.0, 2.0, 4.0, 8.0])
    gaps = np.array([1e-2, 1e-4, 1e-17, 0.0])
    floors = np.full(4, 1e-12)
    slope, _, censored = fit_slope(ns, gaps, floors, window=(4, 8))
    assert censored
    assert slope == pytest.approx(math.log(1e-12 / 1e-4) / math.log(2))


def test_cesaro_constant_and_decay():
    est, spread = cesaro_nu(SYM, PF.constant(2.0), 50, [0.0, 0.5])
    assert est == pytest.approx(2.0)
    assert spread < 1e-13
    c = abs(math.cos(2 * math.pi * float(ALPHA)))
    for N in (16, 64, 256):
        est, _ = cesaro_nu(HALF, PF.cos(1), N, [0.0, 0.3])
        assert abs(est) <= c / (1 - c) / N


def test_cesaro_matches_density():
    d = invariant_density(ASYM)
    est, _ = cesaro_nu(ASYM, PF.cos(1), 2 ** 13, [0.1, 0.6])
    assert abs(est - d.pair(PF.cos(1))) < 1e-2


def test_holding_times():
    never = LazyEnvironment.from_environment(SYM, 0.0)
    path = sample_path(never, 0.2, 500, seed=1)
    assert np.all(path.holding_times == 1)
    lazy = LazyEnvironment.from_environment(SYM, 0.5)
    path = sample_path(lazy, 0.2, 2 * 10 ** 5, seed=2)
    assert np.all(path.holding_times >= 1)
    assert np.all(np.diff(path.accelerated) != 0)
    assert path.holding_times[:10 ** 5].mean() == pytest.approx(2.0, rel=0.02)


def test_path_reproducible():
    lazy = LazyEnvironment.from_environment(SYM, 0.5)
    a = sample_path(lazy, 0.2, 300, seed=9, stream=3)
    b = sample_path(lazy, 0.2, 300, seed=9, stream=3)
    c = sample_path(lazy, 0.2, 300, seed=9, stream=4)
    assert np.array_equal(a.trajectory, b.trajectory)
    assert not np.array_equal(a.trajectory, c.trajectory)


def test_segment_length_half():
    lazy = LazyEnvironment.from_environment(SYM, 0.5)
    path = sample_path(lazy, 0.2, 400, seed=3)
    seg = segment_stop(path, 0.5, 100)
    assert seg.length == 13
    assert seg.T_W == pytest.approx(26.0)


def test_segment_errors():
    lazy = LazyEnvironment.from_environment(SYM, 0.5)
    path = sample_path(lazy, 0.2, 10, seed=3)
    with pytest.raises(PreconditionFailed):
        segment_stop(path, 0.0, 100)
    with pytest.raises(SegmentIncomplete):
        segment_stop(path, 0.5, 10 ** 4)


def test_segment_prefix_property():
    lazy = LazyEnvironment.from_environment(SYM, PF.constant(0.5) + PF.cos(1, 0.3))
    eps0 = lazy.epsilon0
    for seed in range(1000):
        path = sample_path(lazy, 0.4, 120, seed=seed)
        short = segment_stop(path, eps0, 40)
        long = segment_stop(path, eps0, 100)
        assert long.sites[:short.length] == short.sites


def test_clt_zero_observable():
    res = clt_experiment(HALF, PF.constant(0.0), 50, 200, seed=5)
    assert res.empirical_variance == 0
    assert res.sigma2 == 0
    assert res.flagged == "sigma2 = 0"


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(1, 40), st.integers(1, 40))
def test_semigroup_property(x, n, m):
    a = evolve_from(ASYM, evolve_exact(ASYM, x, n), m)
    b = evolve_exact(ASYM, x, n + m)
    assert np.max(np.abs(a.probabilities - b.probabilities)) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.integers(1, 60))
def test_parity_property(x, n):
    d = evolve_exact(SYM, x, n)
    assert np.all(d.probabilities[(d.offsets + n) % 2 == 1] == 0)
    assert abs(d.mass() - 1) < 1e-13
