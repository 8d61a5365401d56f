import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evp_lab.arithmetic import golden_mean
from evp_lab.environment import apply_T, classify, invariant_density
from evp_lab.errors import CenteringViolation
from evp_lab.periodic import PeriodicFunction as PF
from evp_lab.periodic import logistic
from evp_lab.poisson import center, clt_variance, iterated_poisson, poisson_residual, solve_poisson

ALPHA = golden_mean()
THETA = 2 * math.pi * float(ALPHA)


def setup(p):
    env = classify(ALPHA, p)
    return env, invariant_density(env)


HALF = setup(PF.constant(0.5))
SYM = setup(logistic())
ASYM = setup(logistic(0.5))
LOW = setup(logistic(-0.5))


def test_center_examples():
    env, d = HALF
    assert center(env, d, PF.constant(5.0)).l1() == 0
    assert center(env, d, PF.cos(1)).allclose(PF.cos(1), atol=0)
    rho = PF.constant(1.0) + PF.cos(1, 0.5)
    assert center(env, rho, PF.cos(1)).allclose(PF.cos(1) - PF.constant(0.25), atol=1e-16)


def test_half_closed_form():
    env, d = HALF
    cert = solve_poisson(env, d, PF.cos(1))
    assert cert.residual_sup < 1e-12
    assert cert.phi.max_coef_diff(PF.cos(1) / (math.cos(THETA) - 1)) < 1e-15


def test_zero_rhs():
    for env, d in (HALF, SYM, ASYM):
        cert = solve_poisson(env, d, PF.constant(0.0))
        assert cert.phi.l1() < 1e-15


def test_two_thirds_mode_solve():
    env, d = setup(PF.constant(2 / 3))
    cert = solve_poisson(env, d, PF.cos(1))
    assert cert.branch == "asymmetric"
    assert cert.residual_sup < 1e-12
    mode = 0.5 / (2 / 3 * np.exp(1j * THETA) + 1 / 3 * np.exp(-1j * THETA) - 1)
    assert abs(cert.phi.coef(1) - mode) < 1e-14


def test_uncentred_rhs_refused():
    env, d = SYM
    with pytest.raises(CenteringViolation):
        solve_poisson(env, d, PF.cos(1) + PF.constant(0.1))


@pytest.mark.parametrize("case", [SYM, ASYM, LOW], ids=["symmetric", "asymmetric", "mirrored"])
def test_logistic_certificates(case):
    env, d = case
    psi = center(env, d, PF.cos(1) + PF.sin(2))
    cert = solve_poisson(env, d, psi)
    assert cert.residual_sup < 1e-12
    assert poisson_residual(env, cert.phi, psi) == pytest.approx(cert.residual_sup)
    assert math.isfinite(cert.norm_ratio)


def test_iterated_levels():
    env, d = SYM
    psi = center(env, d, PF.cos(1))
    certs = iterated_poisson(env, d, psi, 3)
    assert len(certs) == 3
    assert all(c.residual_sup < 1e-9 for c in certs)
    for lower, upper in zip(certs, certs[1:]):
        # (T - I) phi_{j+1} = phi_j up to a constant
        diff = apply_T(env, upper.phi) - upper.phi - lower.phi
        assert np.ptp(diff.grid_values(4096)) < 1e-9


def test_variance_closed_form_half():
    env, d = HALF
    phi = solve_poisson(env, d, PF.cos(1)).phi
    c = math.cos(THETA)
    assert clt_variance(env, d, phi) == pytest.approx((1 + c) / (2 * (1 - c)), rel=1e-12)


def test_variance_degenerate():
    env, d = SYM
    assert clt_variance(env, d, PF.constant(3.0)) == 0
    assert clt_variance(env, d, solve_poisson(env, d, PF.constant(0.0)).phi) == 0


def test_telescoping():
    env, d = ASYM
    psi = center(env, d, PF.cos(1))
    phi = solve_poisson(env, d, psi).phi
    Tn_phi, partial, Tj_psi = phi, PF.constant(0.0), psi
    for n in range(1, 5):
        partial = partial + Tj_psi
        Tj_psi = apply_T(env, Tj_psi)
        Tn_phi = apply_T(env, Tn_phi)
        assert (Tn_phi - phi - partial).sup_norm_grid(4096) < n * 1e-9


@st.composite
def zero_mean_polys(draw):
    K = draw(st.integers(1, 8))
    c = st.floats(-1, 1, allow_nan=False)
    return PF.from_modes({k: complex(draw(c), draw(c)) for k in range(1, K + 1)})


@settings(max_examples=15, deadline=None)
@given(zero_mean_polys(), zero_mean_polys(), st.floats(-2, 2), st.floats(-2, 2))
def test_solve_poisson_linear(f, g, a, b):
    env, d = SYM
    f, g = center(env, d, f), center(env, d, g)
    lhs = solve_poisson(env, d, f * a + g * b).phi
    rhs = solve_poisson(env, d, f).phi * a + solve_poisson(env, d, g).phi * b
    assert lhs.max_coef_diff(rhs) < 1e-12 * max(1.0, lhs.l1())
