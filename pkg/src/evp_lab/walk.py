"""Exact and Monte Carlo evolution of the walk x -> x +/- alpha.

Positions are tracked as integer offsets m from the start x, so the point
visited is x + m*alpha.  The exact law of X_n is propagated by dynamic
programming on offsets; Monte Carlo runs vectorize across trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    DegenerateEnvironment,
    EvpLabError,
    PreconditionFailed,
    SegmentIncomplete,
    StepCapExceeded,
)
from .periodic import PeriodicFunction, frac_multiples, rotation_phases

STEP_CAP = 2 ** 15
MASS_TOL = 1e-12
CDF_GRID = 2 ** 14
TABLE_GRID = 2 ** 16
DIRECT_EVAL_DEGREE = 8
DEFAULT_CHUNK = 1000
EPS = np.finfo(float).eps


# environments --------------------------------------------------------------

@dataclass(frozen=True)
class LazyEnvironment:
    """Walk that stays put with probability p_stay(x)."""

    alpha: object
    p_stay: PeriodicFunction
    p_plus: PeriodicFunction
    p_minus: PeriodicFunction
    epsilon0: float

    @classmethod
    def from_environment(cls, env, p_stay):
        """Stay with p_stay, otherwise move as the underlying walk: p_plus = (1 - s) p."""
        if not isinstance(p_stay, PeriodicFunction):
            p_stay = PeriodicFunction.constant(float(p_stay))
        move = 1.0 - p_stay
        return cls.build(env.alpha, p_stay, move * env.p, move * env.q)

    @classmethod
    def build(cls, alpha, p_stay, p_plus, p_minus):
        total = p_stay + p_plus + p_minus - 1.0
        if total.sup_norm_grid() > 1e-12:
            raise DegenerateEnvironment("lazy environment: probabilities do not sum to 1")
        lo = p_stay.grid_min()[0]
        hi = p_stay.grid_max()[0]
        eps0 = min(lo, 1.0 - hi)
        if min(p_plus.grid_min()[0], p_minus.grid_min()[0]) < -1e-12:
            raise DegenerateEnvironment("lazy environment: negative move probability")
        return cls(alpha, p_stay, p_plus, p_minus, eps0)


def _is_lazy(env):
    return isinstance(env, LazyEnvironment)


def _orbit_points(alpha, x, ms):
    return np.mod(x + frac_multiples(alpha, ms), 1.0)


def _transition_tables(env, x, n):
    """Move probabilities at x + m alpha for m = -n-1..n+1 (index m + n + 1)."""
    ms = np.arange(-n - 1, n + 2)
    pts = _orbit_points(env.alpha, x, ms)
    if _is_lazy(env):
        return env.p_plus(pts), env.p_minus(pts), env.p_stay(pts)
    p = env.p(pts)
    return p, 1.0 - p, None


# exact evolution -------------------------------------------------------------

@dataclass(frozen=True)
class LatticeDistribution:
    x: float
    n: int
    probabilities: np.ndarray  # offsets -n..n
    lazy: bool = False

    @property
    def offsets(self):
        return np.arange(-self.n, self.n + 1)

    def mass(self):
        return float(math.fsum(self.probabilities))

    def to_dict(self):
        return {"x": self.x, "n": self.n, "lazy": self.lazy,
                "probabilities": self.probabilities.tolist()}


def _evolve(env, x, n, cap, on_step=None):
    """Run the forward recursion to step n; on_step(k, d) sees offsets -n..n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > cap:
        raise StepCapExceeded(f"step cap exceeded: n = {n} > {cap}; use Monte Carlo")
    P, Q, S = _transition_tables(env, x, n)
    # drop the outer padding so P[i], Q[i], S[i] belong to offset i - n
    P, Q = P[1:-1], Q[1:-1]
    S = S[1:-1] if S is not None else None
    d = np.zeros(2 * n + 1)
    d[n] = 1.0
    new = np.zeros_like(d)
    if on_step is not None:
        on_step(0, d)
    for k in range(n):
        lo, hi = n - k, n + k + 1  # current support slice
        w = d[lo:hi]
        new[lo - 1:hi + 1] = 0.0
        new[lo + 1:hi + 1] += P[lo:hi] * w
        new[lo - 1:hi - 1] += Q[lo:hi] * w
        if S is not None:
            new[lo:hi] += S[lo:hi] * w
        d, new = new, d
        if on_step is not None:
            on_step(k + 1, d)
    return d


def evolve_exact(env, x, n, cap=STEP_CAP):
    """Exact law of X_n started at x, as probabilities over offsets -n..n."""
    d = _evolve(env, x, n, cap)
    return LatticeDistribution(float(x), int(n), d, _is_lazy(env))


def evolve_from(env, dist, m, cap=STEP_CAP):
    """Evolve a LatticeDistribution by m more steps (semigroup check)."""
    n = dist.n + m
    if n > cap:
        raise StepCapExceeded(f"step cap exceeded: n = {n} > {cap}")
    P, Q, S = _transition_tables(env, dist.x, n)
    P, Q = P[1:-1], Q[1:-1]
    S = S[1:-1] if S is not None else None
    d = np.zeros(2 * n + 1)
    d[m:m + 2 * dist.n + 1] = dist.probabilities
    for _ in range(m):
        new = np.zeros_like(d)
        new[1:] += P[:-1] * d[:-1]
        new[:-1] += Q[1:] * d[1:]
        if S is not None:
            new += S * d
        d = new
    return LatticeDistribution(dist.x, n, d, dist.lazy)


def _psi_on_orbit(alpha, x, n, psi):
    return psi(_orbit_points(alpha, x, np.arange(-n, n + 1)))


def expectation(dist, psi, alpha):
    """sum_m P(X_n = x + m alpha) psi(x + m alpha)."""
    vals = _psi_on_orbit(alpha, dist.x, dist.n, psi)
    return float(np.dot(dist.probabilities, vals))


def expectations_at(env, x, psi, n_list, cap=STEP_CAP):
    """E_x psi(X_n) for every n in n_list from a single recursion."""
    n_list = sorted(set(int(n) for n in n_list))
    n_max = n_list[-1]
    vals = _psi_on_orbit(env.alpha, x, n_max, psi)
    wanted = set(n_list)
    out = {}

    def record(k, d):
        if k in wanted:
            out[k] = float(np.dot(d, vals))

    _evolve(env, x, n_max, cap, record)
    return out


def backward_evolve(env, psi, n, K_keep=1024):
    """T^n psi as a trigonometric polynomial, with a sup-norm error bound.

    Each application of T is exact on coefficients; modes beyond K_keep are
    dropped and their l1 mass accumulated.  T is a contraction in the sup
    norm, so the accumulated mass bounds |T^n psi - result| everywhere.
    """
    if _is_lazy(env):
        raise EvpLabError("backward evolution is implemented for the non-lazy walk")
    Kp = env.p.degree
    G = 1 << (2 * (K_keep + Kp) + 1).bit_length()
    pvals = env.p.grid_values(G)
    K = psi.degree
    c = np.array(psi.coefficients)
    err = psi.tail
    for _ in range(n):
        ks = np.arange(-K, K + 1)
        ph = rotation_phases(env.alpha, ks)
        fm = c * np.conj(ph)
        g = c * ph - fm
        spec = np.zeros(G, dtype=np.complex128)
        spec[:K + 1] = g[K:]
        spec[G - K:] = g[:K]
        prod = np.fft.fft(np.fft.ifft(spec) * pvals)
        K_new = K + Kp
        out = np.concatenate([prod[G - K_new:], prod[:K_new + 1]])
        out[Kp:Kp + 2 * K + 1] += fm
        if K_new > K_keep:
            d = K_new - K_keep
            err += float(np.abs(out[:d]).sum() + np.abs(out[-d:]).sum())
            out = out[d:-d]
            K_new = K_keep
        c, K = out, K_new
    return PeriodicFunction(c), err


def path_enumeration(env, x, n):
    """Law of X_n by summing the probability of each of the 2^n (or 3^n) paths."""
    import itertools

    lazy = _is_lazy(env)
    moves = (1, -1, 0) if lazy else (1, -1)
    P, Q, S = _transition_tables(env, x, n)
    probs = np.zeros(2 * n + 1)
    for path in itertools.product(moves, repeat=n):
        m, w = 0, 1.0
        for step in path:
            i = m + n + 1
            w *= P[i] if step == 1 else Q[i] if step == -1 else S[i]
            m += step
        probs[m + n] += w
    return LatticeDistribution(float(x), n, probs, lazy)


def total_variation(a, b):
    n = max(a.n, b.n)
    pa = np.zeros(2 * n + 1)
    pb = np.zeros(2 * n + 1)
    pa[n - a.n:n + a.n + 1] = a.probabilities
    pb[n - b.n:n + b.n + 1] = b.probabilities
    return 0.5 * float(np.abs(pa - pb).sum())


# mixing ---------------------------------------------------------------------

@dataclass(frozen=True)
class MixingCurve:
    x: float
    rows: tuple  # (n, expectation, nu_psi, gap)
    slope: float
    r_squared: float
    window: tuple
    censored: bool
    floors: tuple  # resolution floor per row

    def to_dict(self):
        return {
            "x": self.x,
            "rows": [list(r) for r in self.rows],
            "fitted_slope": self.slope,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "censored": self.censored,
            "floors": list(self.floors),
        }


def _nu_value(nu_source, env, psi, n_max):
    if nu_source is None:
        est, spread = cesaro_nu(env, psi, min(n_max, STEP_CAP), [0.0, 0.25, 0.5, 0.75])
        return est, spread
    if hasattr(nu_source, "pair"):
        return float(nu_source.pair(psi)), float(nu_source.stationarity_residual) * psi.l1()
    return float(nu_source), 0.0


def resolution_floor(n, psi_sup, nu_err=0.0):
    """Smallest gap distinguishable from rounding after n steps of the recursion."""
    return 4.0 * max(n, 1) * EPS * psi_sup + nu_err


def fit_slope(ns, gaps, floors, window=None):
    """Log-log slope of resolved gaps in the window, with a censored fallback.

    Gaps at or below their floor are censored: the true value is only known
    to lie below the floor.  With fewer than two resolved points in the window
    the slope reported is the bound implied by the last resolved gap and the
    first censored floor after it, which the true slope cannot exceed.
    """
    ns = np.asarray(ns, dtype=float)
    gaps = np.abs(np.asarray(gaps, dtype=float))
    floors = np.asarray(floors, dtype=float)
    if window is None:
        window = (math.sqrt(ns.min() * ns.max()), ns.max())
    resolved = gaps > floors
    inwin = (ns >= window[0]) & (ns <= window[1])
    use = resolved & inwin
    if use.sum() >= 2:
        lx, ly = np.log(ns[use]), np.log(gaps[use])
        fit = stats.linregress(lx, ly)
        r2 = fit.rvalue ** 2 if use.sum() > 2 else 1.0
        return float(fit.slope), float(r2), False
    if not resolved.any():
        return math.nan, math.nan, True
    last = np.flatnonzero(resolved)[-1]
    after = np.flatnonzero(~resolved & (ns > ns[last]))
    if after.size == 0:
        return math.nan, math.nan, True
    c = after[0]
    bound = (math.log(floors[c]) - math.log(gaps[last])) / (math.log(ns[c]) - math.log(ns[last]))
    return float(bound), math.nan, True


def mixing_curve(env, x, psi, nu_source, n_list, window=None, cap=STEP_CAP):
    """Gaps E_x psi(X_n) - nu(psi) over n_list with a fitted log-log slope."""
    n_list = sorted(set(int(n) for n in n_list))
    nu, nu_err = _nu_value(nu_source, env, psi, n_list[-1])
    exps = expectations_at(env, x, psi, n_list, cap)
    sup = psi.sup_norm_grid()
    rows, floors = [], []
    for n in n_list:
        rows.append((n, exps[n], nu, exps[n] - nu))
        floors.append(resolution_floor(n, sup, nu_err))
    slope, r2, censored = fit_slope(n_list, [r[3] for r in rows], floors, window)
    if window is None:
        window = (math.sqrt(n_list[0] * n_list[-1]), n_list[-1])
    return MixingCurve(float(x), tuple(rows), slope, r2, tuple(window), censored, tuple(floors))


def cesaro_nu(env, psi, N, x_grid, cap=STEP_CAP):
    """Average of E_x psi(X_n) over 1 <= n <= N, per start; returns (mean, spread)."""
    if N < 1:
        raise ValueError("N must be positive")
    estimates = []
    for x in x_grid:
        vals = _psi_on_orbit(env.alpha, x, N, psi)
        acc = [0.0]

        def add(k, d, acc=acc, vals=vals):
            if k >= 1:
                acc[0] += float(np.dot(d, vals))

        _evolve(env, x, N, cap, add)
        estimates.append(acc[0] / N)
    estimates = np.array(estimates)
    return float(estimates.mean()), float(estimates.max() - estimates.min())


# sampling ---------------------------------------------------------------------

def make_rng(seed, stream=0):
    """Counter-based generator; distinct streams are 2^128 draws apart."""
    return np.random.Generator(np.random.Philox(seed).jumped(stream))


def fast_evaluator(f, grid=TABLE_GRID):
    """Vectorized evaluator: trig sum for low degree, else linear table lookup.

    Returns (callable, max_error_bound).
    """
    if f.is_constant():
        c = f.mean()
        return (lambda x: np.full(np.shape(x), c)), 0.0
    if f.degree <= DIRECT_EVAL_DEGREE:
        ks = np.arange(1, f.degree + 1)
        pos = np.array([f.coef(int(k)) for k in ks])
        c0 = f.mean()

        def ev(x):
            x = np.asarray(x, dtype=float)
            out = np.full(x.shape, c0)
            for k, c in zip(ks, pos):
                ang = 2 * np.pi * k * x
                out += 2.0 * (c.real * np.cos(ang) - c.imag * np.sin(ang))
            return out

        return ev, 0.0
    vals = f.grid_values(grid)
    table = np.append(vals, vals[0])
    xs = np.arange(grid + 1) / grid
    h = 1.0 / grid
    bound = h * h / 8 * f.derivative(2).cr_norm_upper(0)

    def ev(x):
        return np.interp(np.mod(x, 1.0), xs, table)

    return ev, float(bound)


def stationary_sampler(rho, grid=CDF_GRID):
    """Inverse-CDF sampler for the density rho on a uniform grid."""
    vals = np.maximum(rho.grid_values(grid), 0.0)
    vals = np.append(vals, vals[0])
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]))])
    cdf /= cdf[-1]
    xs = np.arange(grid + 1) / grid

    def sample(rng, size):
        return np.interp(rng.random(size), cdf, xs)

    return sample


def _step_tables(env):
    if _is_lazy(env):
        up, e1 = fast_evaluator(env.p_plus)
        stay, e2 = fast_evaluator(env.p_stay)
        return up, stay, max(e1, e2)
    up, e1 = fast_evaluator(env.p)
    return up, None, e1


def sample_endpoints(env, x, n, samples, seed, stream=0):
    """Offsets m of X_n for independent paths from x (vectorized Monte Carlo)."""
    rng = make_rng(seed, stream)
    up, stay, _ = _step_tables(env)
    a = float(env.alpha)
    m = np.zeros(samples, dtype=np.int64)
    for _ in range(n):
        pos = np.mod(x + m * a, 1.0)
        u = rng.random(samples)
        pu = up(pos)
        if stay is None:
            m += np.where(u < pu, 1, -1)
        else:
            ps = stay(pos)
            m += np.where(u < ps, 0, np.where(u < ps + pu, 1, -1))
    return m


def empirical_distribution(env, x, n, samples, seed, stream=0):
    m = sample_endpoints(env, x, n, samples, seed, stream)
    counts = np.bincount(m + n, minlength=2 * n + 1).astype(float)
    return LatticeDistribution(float(x), n, counts / samples, _is_lazy(env))


@dataclass(frozen=True)
class PathSample:
    x: float
    trajectory: np.ndarray  # offsets m_0..m_n
    accelerated: np.ndarray  # offsets with repetitions erased
    holding_times: np.ndarray
    stay_probabilities: np.ndarray  # p_stay at each accelerated site (0 for non-lazy)
    seed: int
    stream: int

    def site_points(self, alpha):
        return _orbit_points(alpha, self.x, self.accelerated)


def sample_path(env, x, n, seed, stream=0):
    """One reproducible trajectory of n steps with its accelerated decomposition."""
    rng = make_rng(seed, stream)
    P, Q, S = _transition_tables(env, x, n)
    u = rng.random(n)
    traj = np.zeros(n + 1, dtype=np.int64)
    m = 0
    if S is None:
        for k in range(n):
            m += 1 if u[k] < P[m + n + 1] else -1
            traj[k + 1] = m
    else:
        for k in range(n):
            i = m + n + 1
            if u[k] >= S[i]:
                m += 1 if u[k] < S[i] + P[i] else -1
            traj[k + 1] = m
    change = np.flatnonzero(np.diff(traj)) + 1
    starts = np.concatenate([[0], change])
    holding = np.diff(np.concatenate([starts, [n + 1]]))
    acc = traj[starts]
    stay = S[acc + n + 1] if S is not None else np.zeros(acc.size)
    return PathSample(float(x), traj, acc, holding, stay, int(seed), int(stream))


def segment_stop(path, epsilon0, n, alpha=None):
    """Shortest prefix W of accelerated sites with T_W >= epsilon0 * n / 2."""
    from .geomsum import Segment

    if not epsilon0 > 0:
        raise PreconditionFailed("precondition failed: epsilon0 must be positive")
    threshold = epsilon0 * n / 2
    T = np.cumsum(1.0 / (1.0 - path.stay_probabilities))
    hit = np.flatnonzero(T >= threshold)
    if hit.size == 0:
        raise SegmentIncomplete(
            f"segment incomplete: T_W = {T[-1] if T.size else 0:.3f} < {threshold:.3f} "
            f"after {T.size} sites")
    k = int(hit[0]) + 1
    end = None
    if alpha is not None:
        end = float(path.site_points(alpha)[k - 1])
    return Segment(tuple(float(s) for s in path.stay_probabilities[:k]), end)


# CLT ----------------------------------------------------------------------------

@dataclass(frozen=True)
class CltResult:
    N: int
    trials: int
    empirical_variance: float
    sigma2: float
    relative_error: float
    ks_statistic: float
    ks_pvalue: float
    seed: int
    streams: tuple
    table_error: float
    flagged: str = ""

    def to_dict(self):
        d = dict(self.__dict__)
        d["streams"] = list(self.streams)
        return d


def ergodic_sums(env, psi, N, trials, seed, rho=None, chunk=DEFAULT_CHUNK):
    """N^{-1/2} sum_{n=1}^N psi(X_n) per trial, started from rho (uniform if None)."""
    up, _, e_p = _step_tables(env)
    if _is_lazy(env):
        raise EvpLabError("CLT experiments use the non-lazy walk")
    ev, e_psi = fast_evaluator(psi)
    sampler = stationary_sampler(rho) if rho is not None else None
    a = float(env.alpha)
    out = np.empty(trials)
    streams = []
    for s, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = make_rng(seed, s)
        streams.append(s)
        x = sampler(rng, size) if sampler is not None else rng.random(size)
        acc = np.zeros(size)
        const_p = env.p.is_constant()
        p0 = env.p.mean()
        for _ in range(N):
            u = rng.random(size)
            pu = p0 if const_p else up(x)
            x = np.mod(x + np.where(u < pu, a, -a), 1.0)
            acc += ev(x)
        out[start:start + size] = acc / math.sqrt(N)
    return out, tuple(streams), max(e_p, e_psi)


def clt_experiment(env, psi, N, trials, seed, density=None, sigma2=None, chunk=DEFAULT_CHUNK):
    """Empirical variance of normalized ergodic sums and KS distance to N(0, sigma^2)."""
    if sigma2 is None:
        from .environment import invariant_density
        from .poisson import center, clt_variance, solve_poisson

        density = density or invariant_density(env)
        psi = center(env, density, psi)
        cert = solve_poisson(env, density, psi)
        sigma2 = clt_variance(env, density, cert.phi)
    rho = getattr(density, "rho", density)
    sums, streams, terr = ergodic_sums(env, psi, N, trials, seed, rho, chunk)
    var = float(np.var(sums, ddof=1))
    flagged = ""
    if sigma2 <= 0:
        flagged = "sigma2 = 0" + (" with nonzero psi" if psi.l1() > 0 else "")
        ks, pv = math.nan, math.nan
        rel = 0.0 if var == 0 else math.inf
    else:
        res = stats.kstest(sums, "norm", args=(0.0, math.sqrt(sigma2)))
        ks, pv = float(res.statistic), float(res.pvalue)
        rel = abs(var - sigma2) / sigma2
    return CltResult(N, trials, var, float(sigma2), rel, ks, pv, int(seed), streams, terr, flagged)
