import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evp_lab.arithmetic import golden_mean
from evp_lab.environment import classify
from evp_lab.errors import OrderTooHigh, PreconditionFailed
from evp_lab.geomsum import (
    Segment,
    char_modulus_diagnostic,
    convolve_segment,
    delta_table,
    geometric_pmf,
    llt_error,
    sample_holding_sums,
    stopping_tail,
    tail_ladder,
)
from evp_lab.periodic import PeriodicFunction as PF
from evp_lab.periodic import logistic
from evp_lab.walk import LazyEnvironment, sample_path, segment_stop


def test_geometric_half():
    g = geometric_pmf(0.5)
    assert g.j_min == 1
    assert g.probabilities[:4].tolist() == [0.5, 0.25, 0.125, 0.0625]
    assert g.mean() == pytest.approx(2.0, abs=1e-14)
    # truncation at 1e-16 mass shifts the variance by ~1e-13
    assert g.variance() == pytest.approx(2.0, abs=1e-12)


def test_geometric_degenerate():
    g = geometric_pmf(0.0)
    assert (g.j_min, g.probabilities.tolist()) == (1, [1.0])
    assert g.variance() == 0


def test_geometric_bounds_enforced():
    with pytest.raises(PreconditionFailed):
        geometric_pmf(1.0)
    with pytest.raises(PreconditionFailed):
        geometric_pmf(0.05, epsilon0=0.1)


def test_two_site_negative_binomial():
    pmf = convolve_segment(Segment.iid(0.5, 2))
    assert pmf.j_min == 2
    for j in range(2, 30):
        assert pmf.pmf(j) == pytest.approx((j - 1) * 2.0 ** -j, abs=1e-16)


def test_single_site_is_geometric():
    a = convolve_segment(Segment((0.3,)))
    b = geometric_pmf(0.3)
    assert a.j_min == b.j_min
    assert np.array_equal(a.probabilities, b.probabilities)


def test_mixed_segment_moments():
    rng = np.random.default_rng(1)
    seg = Segment(tuple(rng.choice([0.3, 0.5, 0.7], 50)))
    pmf = convolve_segment(seg)
    assert abs(pmf.mean() - seg.T_W) < 1e-10 * seg.T_W
    assert abs(pmf.variance() - seg.sigma2_W) < 1e-10 * seg.sigma2_W
    assert abs(pmf.total() + pmf.tail - 1) < 1e-14
    assert np.all(pmf.probabilities >= 0)


def test_random_segments_moments():
    rng = np.random.default_rng(2)
    for _ in range(100):
        seg = Segment(tuple(rng.uniform(0.05, 0.9, rng.integers(1, 40))))
        pmf = convolve_segment(seg)
        assert pmf.mean() == pytest.approx(seg.T_W, rel=1e-10)
        assert pmf.variance() == pytest.approx(seg.sigma2_W, rel=1e-8)
        assert seg.T_W >= seg.length


def test_delta_zero_order_maximum():
    for n in (256, 1024):
        d = delta_table(0.5, n, 0)
        assert d.sup == pytest.approx(convolve_segment(Segment.iid(0.5, n)).probabilities.max(), rel=1e-15)
    assert delta_table(0.5, 4096, 0).scaled_sup == pytest.approx(1 / math.sqrt(4 * math.pi), rel=0.02)


def test_delta_first_order_by_hand():
    d = delta_table(0.5, 2, 1)
    assert d.j_min == 2
    assert d.values[0] == 0.0
    # P(3) - P(4) = 2/8 - 3/16
    assert d.values[1] == pytest.approx(1 / 16, abs=1e-17)


def test_delta_order_limit():
    with pytest.raises(OrderTooHigh):
        delta_table(0.5, 16, 5)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_delta_reconstruction_exact(m):
    d = delta_table(Segment((0.2, 0.5, 0.7, 0.4, 0.6)), 5, m)
    for order in range(1, m + 1):
        assert d.reconstruct(order) == list(d.exact[order - 1])


def test_llt_ladder_decreases():
    errs = [llt_error(Segment.iid(0.5, L)) for L in (8, 16, 32, 64, 128, 256, 512)]
    assert errs[-1] < 0.05
    assert errs[0] > errs[-1]
    assert sum(b > a for a, b in zip(errs, errs[1:])) <= 1


def test_llt_preconditions():
    with pytest.raises(PreconditionFailed):
        llt_error(Segment.iid(0.5, 4))
    with pytest.raises(PreconditionFailed):
        llt_error(Segment.iid(0.0, 16))


def compositions(parts, limit):
    # all tuples of `parts` positive integers with sum <= limit
    if parts == 0:
        yield ()
        return
    for first in range(1, limit - parts + 2):
        for rest in compositions(parts - 1, limit - first):
            yield (first,) + rest


def test_stopping_tail_brute_force():
    r = stopping_tail(0.5, 16)
    assert r.tau == 5
    lo, hi = 8 - r.window, 8 + r.window
    inside = math.fsum(2.0 ** -sum(v) for v in compositions(5, math.floor(hi)) if sum(v) >= lo)
    assert r.probability == pytest.approx(1 - inside, rel=1e-12)


def test_stopping_tail_ladder_fit():
    rows, fit = tail_ladder(0.5, [2 ** k for k in range(6, 13)])
    assert all(r.probability > 0 for r in rows)
    assert fit.c > 0
    assert fit.r_squared > 0.9


def test_stopping_tail_monte_carlo_interval():
    exact = stopping_tail(0.5, 64)
    mc = stopping_tail(0.5, 64, mode="mc", seed=4, samples=2 * 10 ** 5)
    p = exact.probability
    assert abs(mc.probability - p) < 4 * math.sqrt(p * (1 - p) / 2e5)
    assert mc.ci[0] <= mc.probability <= mc.ci[1]


def test_char_modulus():
    t = np.linspace(-math.pi, math.pi, 2001)
    cm = char_modulus_diagnostic([0.5] * 100, t)
    assert cm.modulus[1000] == pytest.approx(1.0)
    single = char_modulus_diagnostic([0.5], np.array([math.pi]))
    assert single.modulus[0] == pytest.approx(1 / 3)
    assert cm.kappa_hat == pytest.approx(0.5, rel=0.3)
    assert cm.theta_hat < 1


def test_holding_sums_match_walk_segment():
    env = classify(golden_mean(), logistic())
    lazy = LazyEnvironment.from_environment(env, PF.constant(0.5) + PF.cos(1, 0.2))
    path = sample_path(lazy, 0.15, 600, seed=8)
    seg = segment_stop(path, lazy.epsilon0, 100)
    pmf = convolve_segment(seg)
    draws = sample_holding_sums(seg, 10 ** 5, seed=8)
    counts = np.bincount(draws - pmf.j_min, minlength=pmf.probabilities.size)
    n = pmf.probabilities.size
    tv = 0.5 * (np.abs(counts[:n] / draws.size - pmf.probabilities).sum() + counts[n:].sum() / draws.size)
    assert tv < 0.02


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.0, 0.9), min_size=1, max_size=12), st.integers(1, 4))
def test_reconstruction_property(sites, m):
    d = delta_table(Segment(tuple(sites)), len(sites), m)
    assert d.reconstruct(1) == list(d.exact[0])
    assert d.reconstruct(m) == list(d.exact[m - 1])
