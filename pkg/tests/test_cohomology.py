import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evp_lab.arithmetic import golden_mean, liouville_alpha
from evp_lab.cohomology import solve_damped, solve_eta, solve_rotation
from evp_lab.errors import MeanObstruction, NotDamped, Resonance
from evp_lab.periodic import PeriodicFunction as PF

ALPHA = golden_mean()
A = float(ALPHA)


def test_cos_closed_form():
    rep = solve_rotation(PF.cos(1), ALPHA)
    assert rep.residual_sup < 1e-12
    x = np.linspace(0, 1, 257)
    direct = (np.cos(2 * np.pi * (x - A)) - np.cos(2 * np.pi * x)) / (2 - 2 * math.cos(2 * np.pi * A))
    assert np.max(np.abs(rep.solution(x) - direct)) < 1e-12
    e = np.exp(2j * np.pi * A)
    assert abs(rep.solution.coef(1) - 0.5 / (e - 1)) < 1e-15


def test_zero_rhs():
    rep = solve_rotation(PF.constant(0.0), ALPHA)
    assert rep.residual_sup == 0
    assert rep.solution.l1() == 0


def test_mean_obstruction():
    with pytest.raises(MeanObstruction):
        solve_rotation(PF.cos(1) + PF.constant(1e-6), ALPHA)


def test_resonance_refused():
    with pytest.raises(Resonance):
        solve_rotation(PF.cos(8), 0.125)


def test_liouville_mode_loses_derivatives():
    sch = liouville_alpha([2, 3], growth=True)
    stage = sch.stages[1]
    rep = solve_rotation(PF.cos(stage.q), sch.rotation)
    # phi is of size ~1e6 here, so only the relative defect is meaningful
    assert rep.residual_sup < 1e-12 * rep.solution.l1()
    with mpmath.workprec(256):
        gap = float(abs(stage.q * sch.rotation.value - stage.p))
    assert rep.smallest_denominator == pytest.approx(2 * math.pi * gap, rel=1e-6)
    assert abs(rep.denominator_index) == stage.q
    calm = solve_rotation(PF.cos(stage.q), ALPHA)
    assert rep.solution.l1() > 1e4 * calm.solution.l1()


def test_damped_constant():
    rep = solve_damped(PF.constant(1.0), ALPHA, 2.0)
    assert rep.solution.mean() == pytest.approx(1.0)


def test_damped_spectral_vs_series():
    rep = solve_damped(PF.cos(1), ALPHA, 2.0)
    assert rep.series_discrepancy < 1e-10
    assert rep.residual_sup < 1e-12


def test_damped_zero_mode_decouples():
    rep = solve_damped(PF.cos(1) + PF.sin(3), ALPHA, 2.0)
    assert rep.solution.coef(0) == 0


def test_damped_refuses_lambda_one():
    with pytest.raises(NotDamped):
        solve_damped(PF.cos(1), ALPHA, 1.0)
    with pytest.raises(NotDamped):
        solve_eta(PF.constant(1.0), ALPHA, 0.5)


def test_eta_constant():
    rep = solve_eta(PF.constant(1.0), ALPHA, 2.0)
    assert rep.solution.mean() == pytest.approx(-2.0)


def test_eta_spectral_vs_series():
    rep = solve_eta(PF.constant(2.0) + PF.cos(1), ALPHA, 2.0)
    assert rep.series_discrepancy < 1e-10
    # |lam^-1 e^{2 pi i k alpha} - 1| >= 1 - 1/lam
    assert rep.smallest_denominator >= 0.5 - 1e-15


@st.composite
def zero_mean_polys(draw):
    K = draw(st.integers(1, 16))
    c = st.floats(-1, 1, allow_nan=False)
    return PF.from_modes({k: complex(draw(c), draw(c)) for k in range(1, K + 1)})


@settings(max_examples=40, deadline=None)
@given(zero_mean_polys(), zero_mean_polys(), st.floats(-3, 3), st.floats(-3, 3))
def test_solve_rotation_linear(f, g, a, b):
    lhs = solve_rotation(f * a + g * b, ALPHA).solution
    rhs = solve_rotation(f, ALPHA).solution * a + solve_rotation(g, ALPHA).solution * b
    scale = max(1.0, lhs.l1())
    assert lhs.max_coef_diff(rhs) <= 1e-14 * scale


@settings(max_examples=20, deadline=None)
@given(zero_mean_polys(), st.floats(1.1, 5))
def test_damped_dual_constructions_agree(f, lam):
    assert solve_damped(f, ALPHA, lam).series_discrepancy < 1e-9
