"""Sums of independent geometric holding times.

A site with stay probability s holds the walker for l >= 1 steps with
P(l = k) = s^(k-1) (1 - s).  A segment W of sites is traversed in
t_W = sum of its holding times, whose pmf is built by exact recursive
convolution with certified truncation tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal, stats

from .errors import OrderTooHigh, PreconditionFailed, StepCapExceeded

TAIL_TOL = 1e-16
DEEP_TAIL_TOL = 1e-280
MAX_ORDER = 4
EXACT_TAIL_CAP = 2 ** 12
DEGENERATE_STAY = 1e-8


@dataclass(frozen=True)
class Segment:
    sites: tuple  # stay probabilities s_w
    endpoint: float | None = None

    @property
    def length(self):
        return len(self.sites)

    @property
    def T_W(self):
        return math.fsum(1.0 / (1.0 - s) for s in self.sites)

    @property
    def sigma2_W(self):
        return math.fsum(s / (1.0 - s) ** 2 for s in self.sites)

    @classmethod
    def iid(cls, s, length):
        return cls((float(s),) * int(length))

    def to_dict(self):
        return {"length": self.length, "T_W": self.T_W, "sigma2_W": self.sigma2_W,
                "endpoint": self.endpoint, "sites": list(self.sites)}


@dataclass(frozen=True)
class GeomSumPmf:
    j_min: int
    probabilities: np.ndarray
    tail: float  # mass dropped to the right of the array

    @property
    def support(self):
        return np.arange(self.j_min, self.j_min + self.probabilities.size)

    def pmf(self, j):
        i = int(j) - self.j_min
        if 0 <= i < self.probabilities.size:
            return float(self.probabilities[i])
        return 0.0

    def mean(self):
        return float(np.dot(self.support, self.probabilities))

    def variance(self):
        mu = self.mean()
        return float(np.dot((self.support - mu) ** 2, self.probabilities))

    def total(self):
        return math.fsum(self.probabilities)


def _check_stay(s, epsilon0=0.0):
    if not (0.0 <= s < 1.0):
        raise PreconditionFailed(f"precondition failed: stay probability {s!r} outside [0, 1)")
    if epsilon0 > 0 and not (epsilon0 <= s <= 1.0 - epsilon0):
        raise PreconditionFailed(
            f"precondition failed: stay probability {s!r} outside [{epsilon0}, {1 - epsilon0}]")


def _extension(s, tol):
    # number of extra cells after which the geometric remainder drops below tol
    if s == 0:
        return 1
    return int(math.ceil(math.log(tol) / math.log(s))) + 2


def geometric_pmf(s, epsilon0=0.0, tail_tol=TAIL_TOL):
    """pmf of a holding time with stay probability s on {1, 2, ...}."""
    _check_stay(s, epsilon0)
    return _convolve_one(GeomSumPmf(0, np.array([1.0]), 0.0), s, tail_tol)


def _convolve_one(pmf, s, tail_tol):
    if s == 0:
        return GeomSumPmf(pmf.j_min + 1, pmf.probabilities.copy(), pmf.tail)
    ext = _extension(s, tail_tol)
    x = np.concatenate([pmf.probabilities, np.zeros(ext)])
    # new(t) = (1 - s) old(t - 1) + s new(t - 1)
    y = signal.lfilter([1.0 - s], [1.0, -s], x)
    # beyond the array y continues as y[-1] * s^k, an exact geometric remainder
    remainder = y[-1] * s / (1.0 - s)
    rev = np.cumsum(y[::-1])[::-1] + remainder  # mass at index >= i
    keep = y.size
    over = np.flatnonzero(rev < tail_tol)
    if over.size:
        keep = max(int(over[0]), 1)
    dropped = rev[keep] if keep < y.size else remainder
    return GeomSumPmf(pmf.j_min + 1, y[:keep], pmf.tail + float(dropped))


def convolve_segment(seg, tail_tol=TAIL_TOL):
    """pmf of t_W by iterated convolution; tail records the truncated mass."""
    if seg.length < 1:
        raise PreconditionFailed("precondition failed: segment must have at least one site")
    pmf = GeomSumPmf(0, np.array([1.0]), 0.0)
    for s in seg.sites:
        _check_stay(s)
        pmf = _convolve_one(pmf, s, tail_tol)
    return pmf


def sample_holding_sums(seg, draws, seed, stream=0):
    """Monte Carlo draws of t_W."""
    from .walk import make_rng

    rng = make_rng(seed, stream)
    out = np.zeros(draws, dtype=np.int64)
    for s in seg.sites:
        out += rng.geometric(1.0 - s, size=draws)
    return out


# finite differences -----------------------------------------------------------

@dataclass(frozen=True)
class DeltaTable:
    n: int
    m: int
    j_min: int
    values: np.ndarray
    sup: float
    scaled_sup: float
    exact: tuple  # integer numerators of every order 0..m
    exponent: int  # exact value = numerator * 2**exponent

    def reconstruct(self, order):
        """Recover order-1 differences from order ones by telescoping (exact)."""
        if not 1 <= order <= self.m:
            raise ValueError("order out of range")
        d = self.exact[order]
        acc, out = 0, [0] * len(d)
        for i in range(len(d) - 1, -1, -1):
            acc += d[i]
            out[i] = acc
        return out

    def to_dict(self):
        return {"n": self.n, "m": self.m, "j_min": self.j_min, "sup": self.sup,
                "scaled_sup": self.scaled_sup}


def _exact_ints(values):
    parts = []
    for v in values:
        if v == 0:
            parts.append((0, 0))
            continue
        mant, e = math.frexp(float(v))
        parts.append((int(mant * (1 << 53)), e - 53))
    emin = min((e for m, e in parts if m), default=0)
    return [m << (e - emin) if m else 0 for m, e in parts], emin


def _to_float(num, exponent):
    # correctly rounded conversion of num * 2**exponent
    if exponent >= 0:
        return float(num << exponent)
    return float(Fraction(num, 1 << -exponent))


def delta_table(seg_or_params, n, m, tail_tol=TAIL_TOL):
    """m-th differences delta^m(t) = delta^(m-1)(t) - delta^(m-1)(t+1) of the pmf of t_W.

    ``seg_or_params`` is a Segment, or a stay probability meaning n i.i.d. sites.
    Differences are taken exactly on the integers underlying the stored doubles.
    """
    if m > MAX_ORDER or m < 0:
        raise OrderTooHigh(f"order too high: m = {m}; supported orders are 0..{MAX_ORDER}")
    seg = seg_or_params if isinstance(seg_or_params, Segment) else Segment.iid(seg_or_params, n)
    pmf = convolve_segment(seg, tail_tol)
    ints, emin = _exact_ints(np.concatenate([pmf.probabilities, np.zeros(m)]))
    orders = [ints]
    for _ in range(m):
        prev = orders[-1]
        orders.append([prev[i] - (prev[i + 1] if i + 1 < len(prev) else 0) for i in range(len(prev))])
    vals = np.array([_to_float(v, emin) for v in orders[m]])
    sup = float(np.max(np.abs(vals)))
    return DeltaTable(n, m, pmf.j_min, vals, sup, sup * n ** ((m + 1) / 2),
                      tuple(tuple(o) for o in orders), emin)


# local limit theorem ------------------------------------------------------------

def llt_error(seg):
    """sigma_W * sup_t |P(t_W = t) - N(T_W, sigma_W^2) density at t|."""
    if seg.length < 8:
        raise PreconditionFailed("precondition failed: LLT needs a segment of length >= 8")
    if min(seg.sites) < DEGENERATE_STAY:
        raise PreconditionFailed("precondition failed: degenerate site (stay probability ~ 0)")
    pmf = convolve_segment(seg)
    sigma = math.sqrt(seg.sigma2_W)
    t = pmf.support
    gauss = stats.norm.pdf(t, loc=seg.T_W, scale=sigma)
    err = float(np.max(np.abs(pmf.probabilities - gauss)))
    # beyond the stored support the Gaussian alone contributes
    edge = float(stats.norm.pdf(t[-1] + 1, seg.T_W, sigma)) if t.size else 0.0
    return max(err, edge) * sigma


# stopping-time tail ---------------------------------------------------------------

@dataclass(frozen=True)
class StoppingTail:
    n: int
    tau: int
    window: float
    probability: float
    mode: str
    ci: tuple | None = None
    seed: int | None = None

    def to_dict(self):
        return dict(self.__dict__)


def _stopping_index(params, n):
    acc = 0.0
    for k, p in enumerate(params, start=1):
        acc += 1.0 / p
        if acc > n / 2:
            return k
    raise PreconditionFailed(
        f"precondition failed: sum of 1/p_j never exceeds n/2 = {n / 2} with {len(params)} parameters")


def stopping_tail(params, n, mode="exact", seed=None, samples=10 ** 5):
    """P(|S_tau - n/2| > sqrt(n) ln n), S_k a sum of geometrics with success probabilities p_j.

    ``params`` is a sequence of success probabilities or a single value
    used for every j.
    """
    if np.isscalar(params):
        params = [float(params)] * (n + 1)
    params = [float(p) for p in params]
    for p in params:
        if not 0.0 < p <= 1.0:
            raise PreconditionFailed(f"precondition failed: success probability {p!r} outside (0, 1]")
    tau = _stopping_index(params, n)
    w = math.sqrt(n) * math.log(n) if n > 1 else 0.0
    lo, hi = n / 2 - w, n / 2 + w
    if mode == "exact":
        if n > EXACT_TAIL_CAP:
            raise StepCapExceeded(f"exact stopping tail beyond cap: n = {n} > {EXACT_TAIL_CAP}")
        pmf = convolve_segment(Segment(tuple(1.0 - p for p in params[:tau])), DEEP_TAIL_TOL)
        t = pmf.support
        out = (t < lo) | (t > hi)
        prob = math.fsum(pmf.probabilities[out]) + pmf.tail
        return StoppingTail(n, tau, w, min(prob, 1.0), "exact")
    if mode == "mc":
        if seed is None:
            raise PreconditionFailed("precondition failed: Monte Carlo mode needs a seed")
        from .walk import make_rng

        rng = make_rng(seed)
        S = np.zeros(samples, dtype=np.int64)
        for p in params[:tau]:
            S += rng.geometric(p, size=samples)
        k = int(np.count_nonzero((S < lo) | (S > hi)))
        ci = stats.binomtest(k, samples).proportion_ci(0.95, method="exact")
        return StoppingTail(n, tau, w, k / samples, "mc", (float(ci.low), float(ci.high)), int(seed))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class TailFit:
    ns: tuple
    probabilities: tuple
    c: float
    intercept: float
    r_squared: float

    def to_dict(self):
        return {"n": list(self.ns), "probability": list(self.probabilities),
                "c": self.c, "intercept": self.intercept, "r_squared": self.r_squared}


def fit_tail_exponent(ns, probabilities):
    """Fit log P = b - c (ln n)^2 over points with P > 0."""
    ns = np.asarray(ns, dtype=float)
    P = np.asarray(probabilities, dtype=float)
    ok = P > 0
    if ok.sum() < 2:
        raise PreconditionFailed("precondition failed: fewer than two positive tail values")
    fit = stats.linregress(np.log(ns[ok]) ** 2, np.log(P[ok]))
    return TailFit(tuple(int(n) for n in ns), tuple(float(p) for p in P),
                   float(-fit.slope), float(fit.intercept), float(fit.rvalue ** 2))


def tail_ladder(params, ns, mode="exact", seed=None, samples=10 ** 5):
    rows = [stopping_tail(params, int(n), mode, seed, samples) for n in ns]
    return rows, fit_tail_exponent([r.n for r in rows], [r.probability for r in rows])


# characteristic function ------------------------------------------------------------

@dataclass(frozen=True)
class CharModulus:
    t: np.ndarray
    modulus: np.ndarray
    kappa_hat: float
    theta_hat: float
    delta_hat: float

    def to_dict(self):
        return {"t": self.t.tolist(), "modulus": self.modulus.tolist(),
                "kappa_hat": self.kappa_hat, "theta_hat": self.theta_hat,
                "delta_hat": self.delta_hat}


def char_modulus_diagnostic(params, t_grid, delta_hat=1.0):
    """|Phi_n(t)| = prod_j |p_j / (1 - q_j e^{it})| with a Gaussian-envelope fit.

    kappa_hat is the largest kappa with |Phi_n(t)| <= exp(-kappa n t^2) on
    (0, delta_hat]; theta_hat is the largest per-factor modulus
    |Phi_n|^(1/n) on [delta_hat, pi].
    """
    p = np.asarray(params, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    n = p.size
    logmod = np.zeros_like(t)
    for pj in p:
        logmod += np.log(pj) - np.log(np.abs(1.0 - (1.0 - pj) * np.exp(1j * t)))
    mod = np.exp(logmod)
    a = np.abs(t)
    near = (a > 0) & (a <= delta_hat)
    kappa = float(np.min(-logmod[near] / (n * a[near] ** 2))) if near.any() else math.nan
    far = (a >= delta_hat) & (a <= math.pi)
    theta = float(np.max(np.exp(logmod[far] / n))) if far.any() else math.nan
    return CharModulus(t, mod, kappa, theta, float(delta_hat))
