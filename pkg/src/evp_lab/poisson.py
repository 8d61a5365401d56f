"""Poisson equation T phi - phi = psi for the circle walk, and the CLT variance.

Symmetric environments go through two rotation equations (f = g*eta, then
phi(x) - phi(x - alpha) = eta); asymmetric ones through the damped equation
for kappa followed by one rotation equation.  lambda < 1 is reduced to
lambda > 1 by reflecting the circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cohomology import solve_damped, solve_rotation
from .environment import apply_T, invariant_density
from .errors import CenteringViolation, ConstructionFailed
from .periodic import PeriodicFunction, grid_size

DEFAULT_TOL = 1e-9
CENTERING_TOL = 1e-10
RESIDUAL_GRID = 4096


@dataclass(frozen=True)
class PoissonCertificate:
    phi: PeriodicFunction
    psi: PeriodicFunction
    branch: str
    intermediates: dict = field(default_factory=dict)
    residual_sup: float = math.nan
    norm_ratio: float = math.nan

    def to_dict(self):
        return {
            "phi": self.phi.to_dict(),
            "psi": self.psi.to_dict(),
            "branch": self.branch,
            "intermediates": {k: v.to_dict() for k, v in self.intermediates.items()},
            "residual_sup": self.residual_sup,
            "norm_ratio": self.norm_ratio,
        }


def center(env, rho, psi_raw):
    """psi_raw - nu(psi_raw), nu the measure with density rho."""
    density = getattr(rho, "rho", rho)
    return psi_raw - (density * psi_raw).mean()


def poisson_residual(env, phi, psi):
    r = apply_T(env, phi) - phi - psi
    return r.sup_norm_grid(max(RESIDUAL_GRID, grid_size(r.degree)))


def _m0(env):
    from .arithmetic import RotationNumber, diophantine_profile

    if isinstance(env.alpha, RotationNumber) and len(env.alpha.convergents) >= 3:
        return diophantine_profile(env.alpha).m0
    return 2


def solve_poisson(env, rho, psi, tol=DEFAULT_TOL, r=0):
    """Solve T phi - phi = psi for psi centred against rho; returns a certificate."""
    density = getattr(rho, "rho", rho)
    nu = (density * psi).mean()
    if abs(nu) > CENTERING_TOL * max(1.0, psi.l1()):
        raise CenteringViolation(f"centering violation: nu(psi) = {nu:.3e}")
    K = env.K_target
    m0 = _m0(env)

    if env.symmetry == "symmetric":
        dens = rho if hasattr(rho, "g") else invariant_density(env)
        g = dens.g
        rhs = (g * psi).truncate(K + psi.degree) * env.q.reciprocal(K)
        rhs = rhs.truncate(K + psi.degree)
        # mean(g psi / q) is nu(psi) times a positive constant, zero up to rounding
        rhs = rhs - rhs.mean()
        f = solve_rotation(rhs, env.alpha).solution
        inv_g = g.reciprocal(K)
        eta = (f * inv_g).truncate(K + psi.degree)
        # eta + c/g solves the same equation; pick c so that mean(eta) = 0
        eta = eta - inv_g * (eta.mean() / inv_g.mean())
        eta = eta - eta.mean()
        # phi(x) - phi(x - alpha) = eta(x)  <=>  phi(y + alpha) - phi(y) = eta(y + alpha)
        phi = solve_rotation(eta.shift(env.alpha), env.alpha).solution
        branch = "symmetric"
        inter = {"g": g, "eta": eta}
        loss = 2 * m0
    elif env.lam > 1:
        dens = rho if hasattr(rho, "g") and not rho.mirrored else invariant_density(env)
        g = dens.g
        F = (g * psi).truncate(K + psi.degree) * env.p.reciprocal(K) * env.lam
        F = F.truncate(K + psi.degree)
        kappa = solve_damped(F, env.alpha, env.lam, cross_check=False).solution
        kg = (kappa * g.reciprocal(K)).truncate(K + psi.degree)
        if abs(kg.mean()) > DEFAULT_TOL:
            raise CenteringViolation(f"centering violation: mean(kappa/g) = {kg.mean():.3e}")
        phi = solve_rotation(kg - kg.mean(), env.alpha).solution
        branch = "asymmetric"
        inter = {"g": g, "kappa": kappa}
        loss = m0
    else:
        mirror = env.mirror()
        cert = solve_poisson(mirror, invariant_density(mirror), psi.reflect(), tol, r)
        phi = cert.phi.reflect()
        res = poisson_residual(env, phi, psi)
        if res >= tol:
            raise ConstructionFailed(f"construction failed: Poisson residual {res:.3e}", res)
        inter = {k: v.reflect() for k, v in cert.intermediates.items()}
        return PoissonCertificate(phi, psi, "asymmetric", inter, res, cert.norm_ratio)

    res = poisson_residual(env, phi, psi)
    if res >= tol:
        raise ConstructionFailed(f"construction failed: Poisson residual {res:.3e}", res)
    bottom = psi.cr_norm_upper(r + loss)
    ratio = phi.cr_norm_upper(r) / bottom if bottom else 0.0
    return PoissonCertificate(phi, psi, branch, inter, res, ratio)


def iterated_poisson(env, rho, psi, depth, tol=DEFAULT_TOL):
    """Certificates for (T - I)^j phi_j = psi, j = 1..depth.

    Each level solves T phi_j - phi_j = phi_{j-1} after centring phi_{j-1}
    (adding a constant does not change (T - I) phi_{j-1}).
    """
    certs = []
    current = psi
    for _ in range(depth):
        cert = solve_poisson(env, rho, current, tol)
        certs.append(cert)
        current = center(env, rho, cert.phi)
    return certs


def clt_variance(env, rho, phi):
    """sigma^2 = int rho [p (T phi - phi(x+a))^2 + q (T phi - phi(x-a))^2] dx."""
    density = getattr(rho, "rho", rho)
    Tphi = apply_T(env, phi)
    up = Tphi - phi.shift(env.alpha)
    down = Tphi - phi.shift(env.alpha, -1)
    G = grid_size(2 * max(up.degree, down.degree) + density.degree + env.p.degree)
    pv = env.p.grid_values(G)
    val = density.grid_values(G) * (pv * up.grid_values(G) ** 2 + (1 - pv) * down.grid_values(G) ** 2)
    return max(0.0, float(np.mean(val)))
