"""Slow mixing over a Liouville-type rotation.

The observable is phi = sum_n a_n cos(2 pi q_n x) with a_n either 0 or
q_n^{-sqrt(n+1)}, the choice made stage by stage so that on a set of
starts of measure >= 1/16 the gap |E_x phi(X_N) - nu(phi)| at N = q_n^n
stays above a fixed multiple of q_n^{-sqrt(n+1)}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .arithmetic import RotationNumber, approximation_holds, growth_holds
from .errors import EvpLabError, NuResolution, PreconditionFailed
from .periodic import PeriodicFunction
from .walk import STEP_CAP, backward_evolve, cesaro_nu, evolve_exact, expectation

POINTS_PER_ARC = 256
WITNESS_ROWS = 64
NU_FRACTION = 0.1
K_KEEP = 256
SQRT2_2 = math.sqrt(2) / 2


# support sets -----------------------------------------------------------------

@dataclass(frozen=True)
class SupportSet:
    q: int
    sign: str  # "+" or "-"

    @property
    def radius(self):
        return Fraction(1, 16 * self.q)

    @property
    def centers(self):
        off = Fraction(0) if self.sign == "+" else Fraction(1, 2 * self.q)
        return [Fraction(j, self.q) + off for j in range(self.q)]

    @property
    def intervals(self):
        return [((c - self.radius) % 1, (c + self.radius) % 1) for c in self.centers]

    def measure(self):
        return 2 * self.q * self.radius

    def distance_to_centers(self, x):
        """Circle distance from x to the nearest arc centre (float)."""
        off = 0.0 if self.sign == "+" else 0.5
        y = np.asarray(x, dtype=float) * self.q - off
        return np.abs(y - np.round(y)) / self.q

    def contains(self, x):
        return self.distance_to_centers(x) < 1.0 / (16 * self.q)

    def sample(self, points_per_arc=POINTS_PER_ARC):
        """Midpoints of points_per_arc equal cells per arc, arc by arc, with the cell width."""
        r = 1.0 / (16 * self.q)
        h = 2 * r / points_per_arc
        u = -r + (np.arange(points_per_arc) + 0.5) * h
        c = np.array([float(c) for c in self.centers])
        return np.mod(c[:, None] + u[None, :], 1.0).ravel(), h

    def to_dict(self):
        return {"q": self.q, "sign": self.sign, "radius": str(self.radius),
                "measure": str(self.measure())}


def support_sets(q):
    if q < 1:
        raise ValueError("q must be >= 1")
    return SupportSet(q, "+"), SupportSet(q, "-")


# Lemma certificate -------------------------------------------------------------

@dataclass(frozen=True)
class LemmaCertificate:
    q: int
    p: int
    gamma: float
    q_tilde: int
    x: float
    side: str | None
    support_ok: bool | None
    expectation: float | None
    bound_holds: bool | None
    exact: bool

    def to_dict(self):
        return dict(self.__dict__)


def _alpha_fraction(alpha):
    value = alpha.value if isinstance(alpha, RotationNumber) else alpha
    if isinstance(value, Fraction):
        return value
    if isinstance(value, mpmath.mpf):
        man, exp = value.man_exp
        return Fraction(man) * Fraction(2) ** exp
    return Fraction(float(value))


def reachable_support_check(alpha, q, q_tilde, x, side):
    """Every x + m alpha, |m| <= q_tilde, lies within 1/(8q) of the set's centres.

    Exact rational arithmetic on alpha's stored value and the binary value of x.
    """
    a = _alpha_fraction(alpha)
    xf = Fraction(float(x))
    if side == "-":
        xf -= Fraction(1, 2 * q)
    den = a.denominator * xf.denominator // math.gcd(a.denominator, xf.denominator)
    A = a.numerator * (den // a.denominator) * q  # q alpha * den
    X = xf.numerator * (den // xf.denominator) * q  # q x * den
    for m in range(-q_tilde, q_tilde + 1):
        r = (X + m * A) % den
        if 8 * min(r, den - r) >= den:
            return False
    return True


def lemma_certificate(env, q, p_num, gamma, x, cap=STEP_CAP):
    """Check E_x cos(2 pi q X_{q~}) against +-sqrt(2)/2 for x in G_q^+ or G_q^-."""
    rot = env.alpha
    if not isinstance(rot, RotationNumber):
        raise PreconditionFailed("precondition failed: extended-precision alpha required")
    if not approximation_holds(rot, p_num, q, gamma):
        raise PreconditionFailed(
            f"precondition failed: |{q} alpha - {p_num}| >= 1/(16 q^{gamma})")
    g = gamma - 1
    q_tilde = q ** int(g) if float(g).is_integer() else int(math.floor(q ** g))
    plus, minus = support_sets(q)
    side = "+" if plus.contains(x) else "-" if minus.contains(x) else None
    support_ok = reachable_support_check(rot, q, q_tilde, x, side) if side else None
    if q_tilde > cap:
        return LemmaCertificate(q, p_num, gamma, q_tilde, float(x), side, support_ok, None, None, False)
    dist = evolve_exact(env, x, q_tilde, cap)
    e = expectation(dist, PeriodicFunction.cos(q), rot)
    holds = None
    if side == "+":
        holds = e > SQRT2_2
    elif side == "-":
        holds = e < -SQRT2_2
    return LemmaCertificate(q, p_num, gamma, q_tilde, float(x), side, support_ok, e, holds, True)


# the observable ------------------------------------------------------------------

@dataclass
class StageRecord:
    n: int
    p: int
    q: int
    gamma: float
    q_tilde: int
    amplitude_hat: float
    amplitude: float
    side: str
    nu_hat: float
    nu_error: float
    h_measure: float
    g_measure: float
    branch: str  # "zero" or "hat"
    witness_points: np.ndarray = field(repr=False)
    cell_width: float = 0.0
    certified: bool = False
    min_margin: float = math.nan
    propagation_error: float = 0.0
    ties: int = 0
    support_ok: bool | None = None
    approximation_ok: bool = False
    growth_ok: bool | None = None

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "witness_points"}
        d["witness_count"] = int(self.witness_points.size)
        return d


@dataclass
class LiouvilleObservable:
    stages: list
    phi: PeriodicFunction
    nu_phi: float
    nu_phi_error: float
    truncated: bool = False
    notice: str = ""
    nu_method: str = "density"

    def to_dict(self):
        return {
            "stages": [s.to_dict() for s in self.stages],
            "phi": self.phi.to_dict(),
            "nu_phi": self.nu_phi,
            "nu_phi_error": self.nu_phi_error,
            "truncated": self.truncated,
            "notice": self.notice,
            "nu_method": self.nu_method,
        }


class _Nu:
    """nu(f) from the invariant density when it exists, else Cesaro averages."""

    def __init__(self, env, cesaro_N, dp_cap):
        from .environment import invariant_density

        self.env = env
        self.cesaro_N = cesaro_N
        self.dp_cap = dp_cap
        try:
            self.density = invariant_density(env)
            self.method = "density"
        except EvpLabError:
            self.density = None
            self.method = "cesaro"

    def __call__(self, f):
        if self.density is not None:
            rho = self.density.rho
            err = self.density.stationarity_residual * f.l1() + rho.tail * f.l1()
            return float(self.density.pair(f)), float(err)
        N = min(self.cesaro_N, self.dp_cap)
        est, spread = cesaro_nu(self.env, f, N, [0.0, 0.2, 0.4, 0.6, 0.8], self.dp_cap)
        # Cesaro bias is O(sup|f| / N) on top of the start-point spread
        return est, spread + 2 * f.sup_norm_grid() / N


def build_observable(env, schedule, stages=None, cesaro_N=2 ** 13, dp_cap=STEP_CAP,
                     points_per_arc=POINTS_PER_ARC, K_keep=K_KEEP):
    """Run the stage-by-stage construction over a scheduled rotation."""
    if not isinstance(env.alpha, RotationNumber):
        raise PreconditionFailed("precondition failed: extended-precision alpha required")
    sched = list(schedule.stages)
    n_max = len(sched) if stages is None else min(stages, len(sched))
    nu = _Nu(env, cesaro_N, dp_cap)
    psi = PeriodicFunction.constant(0.0)
    records = []
    truncated = stages is not None and stages > len(sched)
    notice = f"schedule provides only {len(sched)} stage(s)" if truncated else ""
    for n in range(1, n_max + 1):
        st = sched[n - 1]
        if st.gamma != n + 1:
            raise PreconditionFailed(
                f"precondition failed: stage {n} needs gamma = {n + 1}, schedule has {st.gamma}")
        q, p = st.q, st.p
        q_tilde = q ** n
        if q_tilde > dp_cap:
            truncated = True
            notice = f"stage {n} infeasible: q~ = {q_tilde} exceeds dp cap {dp_cap}"
            break
        with mpmath.workprec(128):
            a_hat = float(mpmath.mpf(q) ** (-mpmath.sqrt(n + 1)))
        approx_ok = approximation_holds(env.alpha, p, q, n + 1)
        growth_ok = growth_holds(records[-1].q, q, n) if records else None
        if not approx_ok:
            raise PreconditionFailed(f"precondition failed: stage {n} violates the approximation inequality")

        phi_hat = PeriodicFunction.cos(q, a_hat)
        nu_hat, nu_hat_err = nu(phi_hat)
        nu_prev, nu_prev_err = nu(psi)
        if max(nu_hat_err, nu_prev_err) >= NU_FRACTION * a_hat:
            raise NuResolution(
                f"nu-resolution: error bar {max(nu_hat_err, nu_prev_err):.3e} is not below "
                f"{NU_FRACTION} * q_n^-sqrt(n+1) = {NU_FRACTION * a_hat:.3e}; "
                f"raise the Cesaro depth above {int(4 * psi.sup_norm_grid() / (NU_FRACTION * a_hat)) + 1}")
        side = "-" if nu_hat >= 0 else "+"
        G = support_sets(q)[0 if side == "+" else 1]
        xs, h = G.sample(points_per_arc)

        # E_x psi_{n-1}(X_{q~}) = (T^{q~} psi_{n-1})(x)
        if psi.l1() == 0:
            e_prev, err_prev = np.zeros_like(xs), 0.0
        else:
            f, err_prev = backward_evolve(env, psi, q_tilde, K_keep)
            e_prev = f(xs)
        thresh = SQRT2_2 / 2 * a_hat
        excess = e_prev - (nu_prev + thresh)
        in_h = excess >= 0
        tie_band = 2 * (nu_prev_err + err_prev)
        ties = int(np.count_nonzero(np.abs(excess) < tie_band))
        h_measure = float(in_h.sum() * h)
        g_total = float(G.measure())
        if h_measure >= g_total / 2:
            branch, amp, chosen = "zero", 0.0, xs[in_h]
            phi_n = PeriodicFunction.constant(0.0)
        else:
            branch, amp, chosen = "hat", a_hat, xs[~in_h]
            phi_n = phi_hat
        psi_n = psi + phi_n

        # certificate on the chosen set: |E_x psi_n(X_{q~}) - nu(psi_n)| >= thresh
        nu_n, nu_n_err = nu(psi_n)
        if psi_n.l1() == 0:
            e_n, err_n = np.zeros_like(chosen), 0.0
        else:
            f_n, err_n = backward_evolve(env, psi_n, q_tilde, K_keep)
            e_n = f_n(chosen)
        margin = np.abs(e_n - nu_n) - thresh - (nu_n_err + err_n)
        min_margin = float(margin.min()) if margin.size else math.nan
        # Lemma support argument at the outermost sample offsets of an arc
        edge = [xs[0], xs[points_per_arc - 1]]
        support_ok = all(reachable_support_check(env.alpha, q, q_tilde, x, side) for x in edge)
        records.append(StageRecord(
            n=n, p=p, q=q, gamma=float(n + 1), q_tilde=q_tilde, amplitude_hat=a_hat,
            amplitude=amp, side=side, nu_hat=nu_hat, nu_error=max(nu_hat_err, nu_prev_err),
            h_measure=h_measure, g_measure=float(chosen.size * h), branch=branch,
            witness_points=chosen, cell_width=h,
            certified=bool(margin.size and min_margin > 0 and chosen.size * h >= g_total / 2),
            min_margin=min_margin, propagation_error=max(err_prev, err_n), ties=ties,
            support_ok=support_ok, approximation_ok=approx_ok, growth_ok=growth_ok,
        ))
        psi = psi_n
    nu_phi, nu_phi_err = nu(psi)
    return LiouvilleObservable(records, psi, nu_phi, nu_phi_err, truncated, notice, nu.method)


def amplitude_ladder_holds(obs):
    """q_n^{-sqrt(n+1)} < 0.001 q_{n-1}^{-sqrt(n)} for consecutive stages (extended precision)."""
    return all(growth_holds(a.q, b.q, b.n) for a, b in zip(obs.stages, obs.stages[1:]))


def tail_perturbation_holds(obs):
    """2 * sum_{j>n} a_j <= 0.003 q_n^{-sqrt(n+1)} along the built stages."""
    with mpmath.workprec(128):
        amps = [mpmath.mpf(s.q) ** (-mpmath.sqrt(s.n + 1)) if s.amplitude else mpmath.mpf(0)
                for s in obs.stages]
        hats = [mpmath.mpf(s.q) ** (-mpmath.sqrt(s.n + 1)) for s in obs.stages]
        return all(2 * sum(amps[i + 1:]) <= mpmath.mpf("0.003") * hats[i] for i in range(len(hats)))


def smoothness_increments(obs, r_max=4):
    """Last-stage increment of sum_n a_n (2 pi q_n)^r for r = 0..r_max."""
    out = []
    for r in range(r_max + 1):
        terms = [s.amplitude * (2 * math.pi * s.q) ** r for s in obs.stages]
        out.append(terms[-1] if terms else 0.0)
    return out


# witness table -----------------------------------------------------------------

@dataclass(frozen=True)
class WitnessRow:
    n: int
    q_tilde: int
    x: float
    gap: float
    lower_bound: float
    exact: bool
    holds: bool | None

    def to_dict(self):
        return dict(self.__dict__)


def slow_mixing_witness(env, obs, rows_per_stage=WITNESS_ROWS, dp_cap=STEP_CAP, stages=None):
    """|E_x phi(X_{q~_n}) - nu(phi)| against 0.3 q~_n^{-sqrt(n+1)/n} on each witness set."""
    out = []
    phi = obs.phi
    for rec in obs.stages:
        if stages is not None and rec.n not in stages:
            continue
        pts = rec.witness_points
        if pts.size == 0:
            continue
        idx = np.unique(np.linspace(0, pts.size - 1, min(rows_per_stage, pts.size)).astype(int))
        with mpmath.workprec(128):
            lb = float(mpmath.mpf("0.3") * mpmath.mpf(rec.q_tilde) ** (-mpmath.sqrt(rec.n + 1) / rec.n))
        for x in pts[idx]:
            if rec.q_tilde <= dp_cap:
                e = expectation(evolve_exact(env, x, rec.q_tilde, dp_cap), phi, env.alpha)
                gap = abs(e - obs.nu_phi)
                # a vanishing observable carries no lower-bound claim
                holds = bool(gap - obs.nu_phi_error >= lb) if phi.l1() > 0 else None
                out.append(WitnessRow(rec.n, rec.q_tilde, float(x), gap, lb, True, holds))
            else:
                out.append(WitnessRow(rec.n, rec.q_tilde, float(x), math.nan, lb, False, None))
    return out
