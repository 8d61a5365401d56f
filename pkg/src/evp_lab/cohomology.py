"""Fourier solvers for the functional equations over an irrational rotation.

    rotation:  phi(x + alpha) - phi(x) = psi(x)
    damped:    lam * kappa(x) - kappa(x - alpha) = F(x),        lam > 1
    eta:       eta(x + alpha) / lam - eta(x) = 1 / g(x),         lam > 1

Each solve returns a :class:`SolveReport` whose residual is measured in
physical space by direct evaluation at shifted grid points.  The damped
equations are additionally cross-checked against their Neumann series
summed pointwise, which does not touch the FFT code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MeanObstruction, NotDamped, Resonance
from .periodic import (
    DEFAULT_K_TARGET,
    PeriodicFunction,
    frac_multiples,
    rotation_denominators,
    rotation_phases,
)

RESONANCE_CUTOFF = 1e-14
RESIDUAL_GRID = 1024
SERIES_GRID = 256
SERIES_CUTOFF = 1e-14
MIN_LAMBDA = 1 + 1e-9


@dataclass(frozen=True)
class SolveReport:
    solution: PeriodicFunction
    residual_sup: float
    smallest_denominator: float
    denominator_index: int
    norm_ratio: float
    series_discrepancy: float | None = None

    def to_dict(self):
        return {
            "solution": self.solution.to_dict(),
            "residual_sup": self.residual_sup,
            "smallest_denominator": self.smallest_denominator,
            "denominator_index": self.denominator_index,
            "norm_ratio": self.norm_ratio,
            "series_discrepancy": self.series_discrepancy,
        }


def _m0_of(alpha, m0):
    if m0 is not None:
        return m0
    from .arithmetic import RotationNumber, diophantine_profile

    if isinstance(alpha, RotationNumber) and len(alpha.convergents) >= 3:
        return diophantine_profile(alpha).m0
    return 2


def _grid(n):
    return np.arange(n) / n


def _shifted_points(x, alpha, sign):
    return np.mod(x + sign * frac_multiples(alpha, [1])[0], 1.0)


def _smallest(den, ks):
    mags = np.abs(den)
    mask = ks != 0
    if not mask.any():
        return float("inf"), 0
    i = np.argmin(np.where(mask, mags, np.inf))
    return float(mags[i]), int(ks[i])


def solve_rotation(psi, alpha, zero_mean_tol=1e-12, r=0, m0=None):
    """Solve phi(x + alpha) - phi(x) = psi(x) with mean(phi) = 0."""
    if abs(psi.mean()) > zero_mean_tol:
        raise MeanObstruction(
            f"mean obstruction: mean(psi) = {psi.mean():.3e} exceeds {zero_mean_tol:.1e}")
    ks = psi.wavenumbers
    den = rotation_denominators(alpha, ks)
    small, k_small = _smallest(den, ks)
    if small < RESONANCE_CUTOFF:
        raise Resonance(f"resonance: |exp(2 pi i k alpha) - 1| = {small:.3e} at k = {k_small}")
    c = np.zeros_like(psi.coefficients)
    nz = ks != 0
    c[nz] = psi.coefficients[nz] / den[nz]
    phi = PeriodicFunction(c)

    x = _grid(RESIDUAL_GRID)
    resid = phi(_shifted_points(x, alpha, +1)) - phi(x) - psi(x)
    return SolveReport(
        solution=phi,
        residual_sup=float(np.max(np.abs(resid))),
        smallest_denominator=small,
        denominator_index=k_small,
        norm_ratio=_ratio(phi, psi, r, _m0_of(alpha, m0)),
    )


def _ratio(sol, rhs, r, loss):
    top = sol.cr_norm_upper(r)
    bottom = rhs.cr_norm_upper(r + loss)
    if bottom == 0:
        return 0.0
    return top / bottom


def _series_points(n):
    # offset grid so the check points differ from the FFT nodes
    return (np.arange(n) + 0.5) / n


def solve_damped(F, alpha, lam, cross_check=True, r=0):
    """Solve lam * kappa(x) - kappa(x - alpha) = F(x)."""
    if not lam > MIN_LAMBDA:
        raise NotDamped(f"not damped: lambda = {lam!r} must exceed 1 (mirror the environment)")
    ks = F.wavenumbers
    den = lam - np.conj(rotation_phases(alpha, ks))
    c = F.coefficients / den
    kappa = PeriodicFunction(c, F.tail / (lam - 1))
    small, k_small = float(np.min(np.abs(den))), int(ks[np.argmin(np.abs(den))])

    x = _grid(RESIDUAL_GRID)
    resid = lam * kappa(x) - kappa(_shifted_points(x, alpha, -1)) - F(x)

    discrepancy = None
    if cross_check:
        xs = _series_points(SERIES_GRID)
        acc = np.zeros_like(xs)
        j = 0
        while lam ** (-j) >= SERIES_CUTOFF:
            acc += lam ** (-(j + 1)) * F(np.mod(xs - frac_multiples(alpha, [j])[0], 1.0))
            j += 1
        discrepancy = float(np.max(np.abs(acc - kappa(xs))))
    return SolveReport(
        solution=kappa,
        residual_sup=float(np.max(np.abs(resid))),
        smallest_denominator=small,
        denominator_index=k_small,
        norm_ratio=_ratio(kappa, F, r, 0),
        series_discrepancy=discrepancy,
    )


def solve_eta(g, alpha, lam, cross_check=True, K_target=DEFAULT_K_TARGET, r=0):
    """Solve eta(x + alpha) / lam - eta(x) = 1 / g(x) for positive g."""
    if not lam > MIN_LAMBDA:
        raise NotDamped(f"not damped: lambda = {lam!r} must exceed 1 (mirror the environment)")
    inv_g = g.reciprocal(K_target)
    ks = inv_g.wavenumbers
    den = rotation_phases(alpha, ks) / lam - 1.0
    c = inv_g.coefficients / den
    eta = PeriodicFunction(c, inv_g.tail / (1 - 1 / lam))
    small, k_small = float(np.min(np.abs(den))), int(ks[np.argmin(np.abs(den))])

    x = _grid(RESIDUAL_GRID)
    resid = eta(_shifted_points(x, alpha, +1)) / lam - eta(x) - 1.0 / g(x)

    discrepancy = None
    if cross_check:
        xs = _series_points(SERIES_GRID)
        acc = np.zeros_like(xs)
        j = 0
        while lam ** (-j) >= SERIES_CUTOFF:
            acc -= lam ** (-j) / g(np.mod(xs + frac_multiples(alpha, [j])[0], 1.0))
            j += 1
        discrepancy = float(np.max(np.abs(acc - eta(xs))))
    return SolveReport(
        solution=eta,
        residual_sup=float(np.max(np.abs(resid))),
        smallest_denominator=small,
        denominator_index=k_small,
        norm_ratio=_ratio(eta, inv_g, r, 0),
        series_discrepancy=discrepancy,
    )
