"""Band-limited real functions on the circle T = R/Z.

A :class:`PeriodicFunction` stores Fourier coefficients c_k for k = -K..K with
Hermitian symmetry c_{-k} = conj(c_k), so the represented function

    f(x) = sum_k c_k exp(2 pi i k x)

is real.  Products and shifts are exact in coefficient space; the
transcendental operations (reciprocal, log, exp) go through a sampled grid
and are truncated at a target degree with the discarded tail reported.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np

from .errors import NonPositiveFunction

DEFAULT_K_TARGET = 128
DEFAULT_GRID = 4096
POSITIVITY_MARGIN = 1e-8


def grid_size(K, minimum=DEFAULT_GRID):
    """Smallest power of two >= max(4K+4, minimum)."""
    need = max(4 * K + 4, minimum)
    return 1 << (need - 1).bit_length()


def _split_alpha(alpha):
    # alpha = a_hi + a_lo with a_hi carrying 26 bits, so m * a_hi is exact
    # in double precision for |m| < 2**26.
    import mpmath

    if isinstance(alpha, mpmath.mpf):
        a = alpha - mpmath.floor(alpha)
        a_hi = math.ldexp(math.floor(math.ldexp(float(a), 26)), -26)
        a_lo = float(a - a_hi)
        return a_hi, a_lo
    if isinstance(alpha, Fraction):
        a = alpha - math.floor(alpha)
        a_hi = math.ldexp(math.floor(math.ldexp(float(a), 26)), -26)
        return a_hi, float(a - Fraction(a_hi))
    value = getattr(alpha, "value", None)
    if value is not None:
        return _split_alpha(value)
    a = float(alpha) % 1.0
    a_hi = math.ldexp(math.floor(math.ldexp(a, 26)), -26)
    return a_hi, a - a_hi


def frac_multiples(alpha, ms):
    """Fractional parts of m*alpha for integer array ``ms``, accurate to ~1e-16.

    ``alpha`` may be a float, an mpmath number, or anything with a ``value``
    attribute (e.g. :class:`evp_lab.arithmetic.RotationNumber`).
    """
    ms = np.asarray(ms, dtype=np.int64)
    a_hi, a_lo = _split_alpha(alpha)
    hi = np.mod(ms.astype(np.float64) * a_hi, 1.0)
    return np.mod(hi + ms * a_lo, 1.0)


def rotation_phases(alpha, ks):
    """exp(2 pi i k alpha) for each k, with k*alpha reduced mod 1 first."""
    theta = frac_multiples(alpha, ks)
    return np.exp(2j * np.pi * theta)


def rotation_denominators(alpha, ks):
    """exp(2 pi i k alpha) - 1 computed without cancellation.

    Uses exp(2 pi i t) - 1 = 2 i sin(pi t) exp(i pi t) with t the centred
    fractional part of k*alpha.
    """
    theta = frac_multiples(alpha, ks)
    theta = np.where(theta > 0.5, theta - 1.0, theta)
    return 2j * np.sin(np.pi * theta) * np.exp(1j * np.pi * theta)


class PeriodicFunction:
    """Real trigonometric polynomial of degree K, immutable."""

    __slots__ = ("_c", "tail", "_grid_cache")

    def __init__(self, coefficients, tail=0.0):
        c = np.array(coefficients, dtype=np.complex128)
        if c.ndim != 1 or len(c) % 2 != 1:
            raise ValueError("coefficients must have odd length 2K+1")
        c = 0.5 * (c + np.conj(c[::-1]))
        c.setflags(write=False)
        self._c = c
        self.tail = float(tail)
        self._grid_cache = {}

    # construction -------------------------------------------------------

    @classmethod
    def constant(cls, value):
        return cls([value])

    @classmethod
    def from_modes(cls, modes, tail=0.0):
        """Build from a mapping {k: c_k}; the conjugate mode is implied."""
        K = max((abs(k) for k in modes), default=0)
        c = np.zeros(2 * K + 1, dtype=np.complex128)
        for k, v in modes.items():
            if k == 0:
                c[K] += complex(v).real
            else:
                c[K + k] += v
                c[K - k] += np.conj(v)
        return cls(c, tail)

    @classmethod
    def cos(cls, k=1, amplitude=1.0):
        """amplitude * cos(2 pi k x)."""
        if k == 0:
            return cls.constant(amplitude)
        return cls.from_modes({k: amplitude / 2})

    @classmethod
    def sin(cls, k=1, amplitude=1.0):
        return cls.from_modes({k: -0.5j * amplitude})

    @classmethod
    def from_grid(cls, values, K):
        """Project uniform samples f(j/G), j < G, onto degrees |k| <= K."""
        values = np.asarray(values, dtype=np.float64)
        G = len(values)
        if G < 2 * K + 1:
            raise ValueError(f"grid of size {G} cannot resolve degree {K}")
        spec = np.fft.fft(values) / G
        c = np.concatenate([spec[G - K:], spec[: K + 1]]) if K else spec[:1]
        keep = np.zeros(G, dtype=bool)
        keep[: K + 1] = True
        if K:
            keep[G - K:] = True
        tail = float(np.abs(spec[~keep]).sum())
        return cls(c, tail)

    @classmethod
    def from_callable(cls, func, K=DEFAULT_K_TARGET, grid=None):
        """Sample a vectorised callable on a fine grid and truncate at degree K."""
        G = grid or grid_size(K)
        x = np.arange(G) / G
        return cls.from_grid(func(x), K)

    # basic accessors ----------------------------------------------------

    @property
    def degree(self):
        return (len(self._c) - 1) // 2

    @property
    def coefficients(self):
        return self._c

    @property
    def wavenumbers(self):
        K = self.degree
        return np.arange(-K, K + 1)

    def coef(self, k):
        K = self.degree
        if abs(k) > K:
            return 0j
        return complex(self._c[K + k])

    def mean(self):
        return float(self._c[self.degree].real)

    def is_constant(self):
        return self.degree == 0 or not np.any(np.delete(self._c, self.degree))

    # evaluation ---------------------------------------------------------

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x, chunk=4096):
        """Direct term-by-term summation (no FFT)."""
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        K = self.degree
        out = np.empty(x.shape, dtype=np.float64)
        flat = x.ravel()
        res = out.ravel()
        if K == 0:
            res[:] = self._c[0].real
        else:
            ks = np.arange(1, K + 1)
            cpos = self._c[K + 1:]
            for s in range(0, len(flat), chunk):
                xs = flat[s : s + chunk]
                ph = np.exp(2j * np.pi * np.outer(xs, ks))
                res[s : s + chunk] = self._c[K].real + 2.0 * (ph @ cpos).real
        return float(res[0]) if scalar else out

    def grid_values(self, G=None):
        """Values at x_j = j/G via inverse FFT, cached per grid size."""
        K = self.degree
        G = G or grid_size(K)
        if G < 2 * K + 1:
            raise ValueError(f"grid of size {G} cannot resolve degree {K}")
        cached = self._grid_cache.get(G)
        if cached is not None:
            return cached
        spec = np.zeros(G, dtype=np.complex128)
        spec[: K + 1] = self._c[K:]
        if K:
            spec[G - K:] = self._c[:K]
        vals = np.fft.ifft(spec).real * G
        vals.setflags(write=False)
        self._grid_cache[G] = vals
        return vals

    def grid_min(self, G=None):
        vals = self.grid_values(G)
        i = int(np.argmin(vals))
        return float(vals[i]), i / len(vals)

    def grid_max(self, G=None):
        vals = self.grid_values(G)
        i = int(np.argmax(vals))
        return float(vals[i]), i / len(vals)

    def sup_norm_grid(self, G=None):
        return float(np.max(np.abs(self.grid_values(G))))

    # algebra ------------------------------------------------------------

    def _padded(self, K):
        d = K - self.degree
        return np.pad(self._c, (d, d)) if d else self._c

    def __add__(self, other):
        if not isinstance(other, PeriodicFunction):
            return PeriodicFunction(self._c + _const_vec(self.degree, other), self.tail)
        K = max(self.degree, other.degree)
        return PeriodicFunction(self._padded(K) + other._padded(K), self.tail + other.tail)

    __radd__ = __add__

    def __neg__(self):
        return PeriodicFunction(-self._c, self.tail)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PeriodicFunction):
            return PeriodicFunction(self._c * other, self.tail * abs(other))
        # exact product, degree K_f + K_g
        c = np.convolve(self._c, other._c)
        tail = self.tail * other.l1() + other.tail * self.l1()
        return PeriodicFunction(c, tail)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def l1(self):
        return float(np.abs(self._c).sum())

    def shift(self, alpha, sign=1):
        """x -> f(x + sign * alpha)."""
        return PeriodicFunction(
            self._c * rotation_phases(alpha, sign * self.wavenumbers), self.tail)

    def reflect(self):
        """x -> f(-x)."""
        return PeriodicFunction(self._c[::-1], self.tail)

    def derivative(self, order=1):
        ks = self.wavenumbers
        return PeriodicFunction(self._c * (2j * np.pi * ks) ** order, 0.0)

    def truncate(self, K):
        """Drop modes |k| > K, adding their l1 mass to the tail."""
        if K >= self.degree:
            return self
        d = self.degree - K
        dropped = float(np.abs(self._c[:d]).sum() + np.abs(self._c[-d:]).sum())
        return PeriodicFunction(self._c[d:-d], self.tail + dropped)

    def _sampled(self, func, K_target, check_positive):
        G = grid_size(self.degree + K_target)
        vals = self.grid_values(G)
        if check_positive:
            i = int(np.argmin(vals))
            if vals[i] < POSITIVITY_MARGIN:
                raise NonPositiveFunction(
                    f"non-positive function: min {vals[i]:.3e} at x = {i / G:.6f}"
                )
        return PeriodicFunction.from_grid(func(vals), K_target)

    def reciprocal(self, K_target=DEFAULT_K_TARGET):
        return self._sampled(lambda v: 1.0 / v, K_target, True)

    def log(self, K_target=DEFAULT_K_TARGET):
        return self._sampled(np.log, K_target, True)

    def exp(self, K_target=DEFAULT_K_TARGET):
        return self._sampled(np.exp, K_target, False)

    def apply(self, func, K_target=DEFAULT_K_TARGET):
        """Pointwise func(f), sampled and truncated like :meth:`exp`."""
        return self._sampled(func, K_target, False)

    # norms --------------------------------------------------------------

    def cr_norm_upper(self, r):
        """max_{j<=r} sum_k |2 pi k|^j |c_k|, an upper bound for the C^r norm."""
        ks = np.abs(self.wavenumbers) * 2 * np.pi
        a = np.abs(self._c)
        return max(float(np.sum(ks**j * a)) for j in range(r + 1))

    def cr_norm_grid(self, r, G=None):
        """max_{j<=r} of the grid maximum of |f^(j)|, a lower bound for the C^r norm."""
        G = G or max(DEFAULT_GRID, grid_size(4 * self.degree))
        best = self.sup_norm_grid(G)
        for j in range(1, r + 1):
            best = max(best, self.derivative(j).sup_norm_grid(G))
        return best

    # comparison / io ----------------------------------------------------

    def allclose(self, other, atol=1e-12):
        K = max(self.degree, other.degree)
        return bool(np.max(np.abs(self._padded(K) - other._padded(K))) <= atol)

    def max_coef_diff(self, other):
        K = max(self.degree, other.degree)
        return float(np.max(np.abs(self._padded(K) - other._padded(K))))

    def to_dict(self):
        return {
            "degree": self.degree,
            "coefficients": [[float(z.real), float(z.imag)] for z in self._c],
        }

    @classmethod
    def from_dict(cls, data):
        coeffs = data["coefficients"]
        c = np.array([complex(re, im) for re, im in coeffs])
        if "degree" in data and len(c) != 2 * int(data["degree"]) + 1:
            raise ValueError("coefficient count does not match degree")
        return cls(c)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"PeriodicFunction(degree={self.degree}, mean={self.mean():.6g})"


def _const_vec(K, value):
    v = np.zeros(2 * K + 1, dtype=np.complex128)
    v[K] = value
    return v


# functional interface -----------------------------------------------------

def evaluate(f, x):
    return f.evaluate(x)


def cr_norm_upper(f, r):
    return f.cr_norm_upper(r)


def algebra(op, f, g=None, *, alpha=None, K_target=DEFAULT_K_TARGET):
    """Dispatch one of add, multiply, shift_by_alpha, reciprocal, log, exp, mean."""
    if op == "add":
        return f + g
    if op == "multiply":
        return f * g
    if op == "shift_by_alpha":
        return f.shift(alpha)
    if op == "reciprocal":
        return f.reciprocal(K_target)
    if op == "log":
        return f.log(K_target)
    if op == "exp":
        return f.exp(K_target)
    if op == "mean":
        return f.mean()
    raise ValueError(f"unknown operation {op!r}")


def logistic(shift=0.0, amplitude=1.0, k=1, K=48):
    """p(x) = 1 / (1 + exp(-(shift + amplitude*cos(2 pi k x)))), truncated at degree K."""
    return PeriodicFunction.from_callable(
        lambda x: 1.0 / (1.0 + np.exp(-(shift + amplitude * np.cos(2 * np.pi * k * x)))), K
    )


def function_from_spec(spec):
    """PeriodicFunction from a JSON-style description.

    Accepted forms: a number (constant); {"coefficients": ...} as written by
    ``to_dict``; {"constant": c}; {"cos": k, "amplitude": a}; {"sin": k,
    "amplitude": a}; {"logistic": {"shift", "amplitude", "k", "K"}};
    {"sum": [spec, ...]}.
    """
    if isinstance(spec, (int, float)):
        return PeriodicFunction.constant(float(spec))
    if isinstance(spec, list):
        return PeriodicFunction.from_dict({"coefficients": spec})
    if not isinstance(spec, dict):
        raise ValueError(f"cannot build a function from {spec!r}")
    if "coefficients" in spec:
        return PeriodicFunction.from_dict(spec)
    if "constant" in spec:
        return PeriodicFunction.constant(float(spec["constant"]))
    if "cos" in spec:
        return PeriodicFunction.cos(int(spec["cos"]), float(spec.get("amplitude", 1.0)))
    if "sin" in spec:
        return PeriodicFunction.sin(int(spec["sin"]), float(spec.get("amplitude", 1.0)))
    if "logistic" in spec:
        return logistic(**(spec["logistic"] or {}))
    if "sum" in spec:
        total = PeriodicFunction.constant(0.0)
        for part in spec["sum"]:
            total = total + function_from_spec(part)
        return total
    raise ValueError(f"unrecognised function description with keys {sorted(spec)}")
