"""Quasi-periodic environments (alpha, p) on the circle and their invariant densities.

The walk jumps x -> x + alpha with probability p(x) and x -> x - alpha with
probability q(x) = 1 - p(x).  Its Markov operator is

    T f(x) = p(x) f(x + alpha) + q(x) f(x - alpha).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .arithmetic import RotationNumber, continued_fraction, parse_alpha
from .cohomology import solve_eta, solve_rotation
from .errors import ConfigError, ConstructionFailed, DegenerateEnvironment
from .periodic import DEFAULT_K_TARGET, PeriodicFunction, frac_multiples, function_from_spec

SYMMETRY_THRESHOLD = 1e-10
DEGENERACY_MARGIN = 1e-8
STATIONARITY_GRID = 4096


@dataclass(frozen=True)
class Environment:
    alpha: object  # RotationNumber or float
    p: PeriodicFunction
    epsilon_margin: float
    symmetry: str  # "symmetric" | "asymmetric"
    lam: float
    log_ratio: PeriodicFunction  # log(p/q), truncated at K_target
    K_target: int = DEFAULT_K_TARGET

    @property
    def q(self):
        return 1.0 - self.p

    @property
    def alpha_float(self):
        return float(self.alpha)

    def mirror(self):
        """Environment of the reflected walk y = -x: p~(y) = q(-y), same alpha."""
        return classify(self.alpha, self.q.reflect(), self.K_target)

    def to_dict(self):
        alpha = self.alpha.to_dict()["value"] if isinstance(self.alpha, RotationNumber) else self.alpha
        return {
            "alpha": alpha,
            "p_coefficients": self.p.to_dict(),
            "epsilon_margin": self.epsilon_margin,
            "symmetry": self.symmetry,
            "lambda": self.lam,
        }


@dataclass(frozen=True)
class InvariantDensity:
    rho: PeriodicFunction
    construction: str  # "symmetric_g_over_q" | "asymmetric_eta_g_over_p"
    stationarity_residual: float
    g: PeriodicFunction
    eta: PeriodicFunction | None = None
    mirrored: bool = False

    def pair(self, psi):
        """nu(psi) = integral of rho * psi."""
        return (self.rho * psi).mean()

    def to_dict(self):
        return {
            "rho": self.rho.to_dict(),
            "construction": self.construction,
            "stationarity_residual": self.stationarity_residual,
            "mirrored": self.mirrored,
        }


def classify(alpha, p, K_target=DEFAULT_K_TARGET):
    """Validate p, compute lambda = exp(mean log(p/q)) and the symmetry class."""
    lo, x_lo = p.grid_min()
    hi, x_hi = p.grid_max()
    margin = min(lo, 1.0 - hi)
    if margin < DEGENERACY_MARGIN:
        where = x_lo if lo < 1.0 - hi else x_hi
        raise DegenerateEnvironment(
            f"degenerate environment: p comes within {margin:.3e} of {{0, 1}} near x = {where:.6f}")
    log_ratio = p.apply(lambda v: np.log(v) - np.log1p(-v), K_target)
    log_lam = log_ratio.mean()
    symmetry = "symmetric" if abs(log_lam) <= SYMMETRY_THRESHOLD else "asymmetric"
    return Environment(alpha, p, margin, symmetry, math.exp(log_lam), log_ratio, K_target)


def apply_T(env, f):
    """T f = p * f(. + alpha) + q * f(. - alpha), exact of degree K_p + K_f."""
    return env.p * f.shift(env.alpha) + env.q * f.shift(env.alpha, -1)


def stationarity_residual(env, rho, n=STATIONARITY_GRID):
    """sup_x |p(x-a) rho(x-a) + q(x+a) rho(x+a) - rho(x)| by direct evaluation."""
    x = np.arange(n) / n
    a = frac_multiples(env.alpha, [1])[0]
    xm = np.mod(x - a, 1.0)
    xp = np.mod(x + a, 1.0)
    pm = env.p(xm)
    qp = 1.0 - env.p(xp)
    resid = pm * rho(xm) + qp * rho(xp) - rho(x)
    return float(np.max(np.abs(resid)))


def invariant_density(env, tol=1e-9):
    """Invariant density: g/q (symmetric) or eta*g/p (asymmetric, via mirror if lambda < 1)."""
    K = env.K_target
    if env.symmetry == "symmetric":
        h = env.log_ratio - env.log_ratio.mean()
        u = solve_rotation(h, env.alpha, zero_mean_tol=1e-9).solution
        g = u.exp(K)
        raw = (g * env.q.reciprocal(K)).truncate(K)
        rho = raw / raw.mean()
        eta = None
        construction = "symmetric_g_over_q"
    elif env.lam > 1:
        h = env.log_ratio - math.log(env.lam)
        # u(x) - u(x - alpha) = h(x)  <=>  u(y + alpha) - u(y) = h(y + alpha)
        u = solve_rotation(h.shift(env.alpha), env.alpha, zero_mean_tol=1e-9).solution
        g = u.exp(K)
        eta = solve_eta(g, env.alpha, env.lam, cross_check=False, K_target=K).solution
        raw = (eta * g).truncate(K) * env.p.reciprocal(K)
        raw = raw.truncate(K)
        rho = raw / raw.mean()
        construction = "asymmetric_eta_g_over_p"
    else:
        mirrored = invariant_density(env.mirror(), tol)
        rho = mirrored.rho.reflect()
        res = stationarity_residual(env, rho)
        if res >= tol:
            raise ConstructionFailed(f"construction failed: stationarity residual {res:.3e}", res)
        return InvariantDensity(
            rho=rho,
            construction=mirrored.construction,
            stationarity_residual=res,
            g=mirrored.g.reflect(),
            eta=mirrored.eta.reflect() if mirrored.eta is not None else None,
            mirrored=True,
        )

    lo, x_lo = rho.grid_min()
    if lo <= 0:
        raise ConstructionFailed(f"construction failed: density not positive (min {lo:.3e} at x = {x_lo:.6f})")
    res = stationarity_residual(env, rho)
    if res >= tol:
        raise ConstructionFailed(f"construction failed: stationarity residual {res:.3e}", res)
    return InvariantDensity(rho, construction, res, g, eta, False)


# configuration ------------------------------------------------------------

ENV_KEYS = {"alpha", "p_coefficients", "tolerance", "depth", "K_target"}


def environment_from_config(config, bits=None):
    """Build an Environment from {"alpha": ..., "p_coefficients": ..., "tolerance": ...}."""
    unknown = set(config) - ENV_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
    for key in ("alpha", "p_coefficients"):
        if key not in config:
            raise ConfigError(f"missing configuration key: {key}")
    alpha = make_alpha(config["alpha"], config.get("depth", 64), bits)
    try:
        p = function_from_spec(config["p_coefficients"])
    except (ValueError, TypeError, KeyError) as err:
        raise ConfigError(f"invalid p_coefficients: {err}") from err
    return classify(alpha, p, int(config.get("K_target", DEFAULT_K_TARGET)))


def make_alpha(spec, depth=64, bits=None):
    """RotationNumber from a string/number; rational inputs keep their finite expansion."""
    from .errors import RationalAtPrecision

    if isinstance(spec, RotationNumber):
        return spec
    try:
        return continued_fraction(parse_alpha(spec, bits), depth, bits)
    except RationalAtPrecision as err:
        return err.partial


def load_environment(path, bits=None):
    with open(path) as fh:
        return environment_from_config(json.load(fh), bits)
