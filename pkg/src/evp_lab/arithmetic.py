"""Continued fractions of rotation numbers, Diophantine profiles, Liouville schedules.

Rotation numbers are carried either as exact :class:`fractions.Fraction`
values (decimal inputs) or as mpmath floats at a configurable working
precision (default 512 bits, overridable through ``EVP_LAB_PRECISION_BITS``).
"""

from __future__ import annotations

import ast
import math
import operator
import os
import re
from dataclasses import dataclass
from fractions import Fraction

import mpmath

from .errors import InsufficientDepth, PreconditionFailed, RationalAtPrecision

DEFAULT_PRECISION_BITS = 512
# quotients up to this size count as bounded type when estimating tau
BOUNDED_QUOTIENT = 8.0
LIOUVILLE_TAU = 1.0


def precision_bits(bits=None):
    if bits is not None:
        return int(bits)
    return int(os.environ.get("EVP_LAB_PRECISION_BITS", DEFAULT_PRECISION_BITS))


@dataclass(frozen=True)
class RotationNumber:
    value: object  # Fraction or mpmath.mpf
    partial_quotients: tuple
    convergents: tuple  # ((p_1, q_1), (p_2, q_2), ...)
    precision: int = DEFAULT_PRECISION_BITS
    truncated: bool = False

    @property
    def depth(self):
        return len(self.partial_quotients)

    def __float__(self):
        return float(self.value)

    def mp(self):
        """The value as an mpmath number at the carried precision."""
        with mpmath.workprec(self.precision):
            if isinstance(self.value, Fraction):
                return mpmath.mpf(self.value.numerator) / self.value.denominator
            return +self.value

    def distance(self, p, q):
        """|q*alpha - p| at working precision (exact for Fraction values)."""
        if isinstance(self.value, Fraction):
            return abs(q * self.value - p)
        with mpmath.workprec(self.precision):
            return abs(q * self.value - p)

    def to_dict(self):
        with mpmath.workprec(self.precision):
            digits = max(20, int(self.precision * 0.30103))
            if isinstance(self.value, Fraction):
                val = str(self.value)
            else:
                val = mpmath.nstr(self.value, digits)
        return {
            "value": val,
            "partial_quotients": [str(a) for a in self.partial_quotients],
            "convergents": [[str(p), str(q)] for p, q in self.convergents],
            "depth": self.depth,
            "precision_bits": self.precision,
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class DiophantineProfile:
    c_est: float
    tau_est: float
    m0: int
    witness_depth: int
    liouville_like: bool = False
    label: str = ""

    def to_dict(self):
        return {
            "c_est": self.c_est,
            "tau_est": self.tau_est,
            "m0": self.m0,
            "witness_depth": self.witness_depth,
            "liouville_like": self.liouville_like,
            "label": self.label,
        }


# parsing ----------------------------------------------------------------

_DECIMAL = re.compile(r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$")
_NAMED = {
    "golden": "(sqrt(5)-1)/2",
    "phi": "(sqrt(5)-1)/2",
    "silver": "sqrt(2)-1",
}
_FUNCS = {"sqrt": mpmath.sqrt, "exp": mpmath.exp, "log": mpmath.log,
          "cbrt": mpmath.cbrt, "sin": mpmath.sin, "cos": mpmath.cos}
_CONSTS = {"pi": lambda: +mpmath.pi, "e": lambda: +mpmath.e}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow, ast.Mod: operator.mod}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        if isinstance(node.value, int):
            return mpmath.mpf(node.value)
        return mpmath.mpf(str(node.value))
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Name) and node.id in _CONSTS:
        return _CONSTS[node.id]()
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
        return _FUNCS[node.func.id](_eval_node(node.args[0]))
    raise ValueError(f"unsupported expression element: {ast.dump(node)}")


def parse_alpha(text, bits=None):
    """Parse a decimal (exact Fraction) or an arithmetic expression (mpmath)."""
    if isinstance(text, (Fraction, mpmath.mpf)):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        return Fraction(text)
    s = str(text).strip()
    s = _NAMED.get(s.lower(), s)
    if _DECIMAL.match(s):
        return Fraction(s)
    with mpmath.workprec(precision_bits(bits) + 32):
        value = _eval_node(ast.parse(s, mode="eval"))
    with mpmath.workprec(precision_bits(bits)):
        return +value


# continued fractions ----------------------------------------------------

def _cf_fraction(x, depth):
    pqs, quots = [], []
    p_prev, q_prev, p, q = 1, 0, 0, 1
    while len(quots) < depth:
        if x == 0:
            return quots, pqs, True
        y = 1 / x
        a = math.floor(y)
        x = y - a
        quots.append(a)
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        pqs.append((p, q))
    return quots, pqs, x == 0


def continued_fraction(alpha, depth, bits=None):
    """Partial quotients a_1..a_D and convergents p_k/q_k of alpha.

    Raises :class:`RationalAtPrecision` when the expansion terminates before
    ``depth``; the exception carries the expansion computed so far.  When the
    working precision can no longer certify further quotients the result is
    returned early with ``truncated=True``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    bits = precision_bits(bits)
    value = parse_alpha(alpha, bits)
    if isinstance(value, Fraction):
        frac = value - math.floor(value)
        quots, pqs, terminated = _cf_fraction(frac, depth)
        rot = RotationNumber(frac, tuple(quots), tuple(pqs), bits, False)
        if terminated and len(quots) < depth:
            p, q = pqs[-1] if pqs else (0, 1)
            raise RationalAtPrecision(
                f"rational-at-precision: expansion terminates at depth {len(quots)}, "
                f"last exact convergent {p}/{q}", rot)
        return rot

    with mpmath.workprec(bits):
        x = value - mpmath.floor(value)
        alpha_frac = +x
        eps = mpmath.ldexp(1, -bits + 8)
        quots, pqs = [], []
        p_prev, q_prev, p, q = 1, 0, 0, 1
        truncated = False
        while len(quots) < depth:
            # error in the complete quotient grows like q^2 * eps
            err = eps * q * q
            if err > mpmath.mpf("1e-6"):
                truncated = True
                break
            if x <= err:
                rot = RotationNumber(alpha_frac, tuple(quots), tuple(pqs), bits, False)
                raise RationalAtPrecision(
                    f"rational-at-precision: expansion terminates at depth {len(quots)}, "
                    f"last exact convergent {p}/{q}", rot)
            y = 1 / x
            a = int(mpmath.floor(y))
            x = y - a
            quots.append(a)
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
            pqs.append((p, q))
        return RotationNumber(alpha_frac, tuple(quots), tuple(pqs), bits, truncated)


def rotation_number(alpha, depth=64, bits=None):
    """Convenience: continued fraction to ``depth`` (or as deep as precision allows)."""
    return continued_fraction(alpha, depth, bits)


def golden_mean(depth=64, bits=None):
    return continued_fraction("golden", depth, bits)


def from_partial_quotients(quotients, tail="golden", bits=None):
    """alpha = [0; a_1, ..., a_D, tail] with an irrational bounded-type tail.

    ``tail="golden"`` appends [1; 1, 1, ...], so the expansion of the result
    begins with the given quotients followed by ones.
    """
    bits = precision_bits(bits)
    with mpmath.workprec(bits + 64):
        if tail == "golden":
            x = (1 + mpmath.sqrt(5)) / 2
        elif tail is None:
            x = None
        else:
            x = mpmath.mpf(tail)
        for a in reversed(quotients):
            x = mpmath.mpf(a) if x is None else a + 1 / x
        value = 1 / x
    with mpmath.workprec(bits):
        return +value


# Diophantine profile ----------------------------------------------------

def _to_mp(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def _m0(tau):
    # lowest integer strictly greater than 1 + tau
    return int(math.floor(tau)) + 2


def diophantine_profile(rot, bounded_quotient=BOUNDED_QUOTIENT):
    """Empirical Diophantine type (c, tau) from the computed convergents.

    tau_est = max(0, max_k log(a_{k+1}/B) / log q_k), B = ``bounded_quotient``;
    c_est = min_k q_k^{2+tau} |alpha - p_k/q_k|.  Only observed data enter, so
    the estimate is labelled by the depth it was computed at and can only
    grow as the expansion is deepened.
    """
    D = len(rot.convergents)
    if D < 3:
        raise InsufficientDepth(f"insufficient depth: {D} convergents, need at least 3")
    tau = 0.0
    for k in range(D - 1):
        q = rot.convergents[k][1]
        if q < 2:
            continue
        a_next = rot.partial_quotients[k + 1]
        t = (math.log(a_next) - math.log(bounded_quotient)) / math.log(q)
        tau = max(tau, t)
    with mpmath.workprec(rot.precision):
        c = None
        for p, q in rot.convergents:
            d = rot.distance(p, q)
            if d == 0:
                continue
            val = mpmath.mpf(q) ** (2 + tau) * _to_mp(d) / q
            c = val if c is None else min(c, val)
    c_est = float(c) if c is not None else float("inf")
    return DiophantineProfile(
        c_est=c_est,
        tau_est=tau,
        m0=_m0(tau),
        witness_depth=D,
        liouville_like=tau >= LIOUVILLE_TAU,
        label=f"empirical at depth {D}",
    )


# Liouville schedules ----------------------------------------------------

@dataclass(frozen=True)
class ScheduleStage:
    p: int
    q: int
    gamma: float
    index: int  # position of (p, q) among the convergents, 1-based

    @property
    def q_tilde(self):
        # floor(q^(gamma-1)), exact for integer gamma
        g = self.gamma - 1
        if float(g).is_integer():
            return self.q ** int(g)
        return int(math.floor(self.q ** g))

    def to_dict(self):
        return {"p": str(self.p), "q": str(self.q), "gamma": self.gamma,
                "index": self.index, "q_tilde": str(self.q_tilde)}


@dataclass(frozen=True)
class LiouvilleSchedule:
    rotation: RotationNumber
    stages: tuple
    truncated: bool = False
    notice: str = ""
    growth_condition: bool = False

    def to_dict(self):
        return {
            "rotation": self.rotation.to_dict(),
            "stages": [s.to_dict() for s in self.stages],
            "truncated": self.truncated,
            "notice": self.notice,
            "growth_condition": self.growth_condition,
        }


def approximation_holds(rot, p, q, gamma):
    """|q alpha - p| < 1/(16 q^gamma), checked at working precision."""
    with mpmath.workprec(rot.precision):
        return bool(_to_mp(rot.distance(p, q)) * 16 * mpmath.mpf(q) ** gamma < 1)


def growth_holds(q_prev, q, n):
    """q^{-sqrt(n+1)} < 0.001 q_prev^{-sqrt(n)} for stage n >= 2."""
    with mpmath.workprec(256):
        lhs = mpmath.mpf(q) ** (-mpmath.sqrt(n + 1))
        rhs = mpmath.mpf("0.001") * mpmath.mpf(q_prev) ** (-mpmath.sqrt(n))
        return bool(lhs < rhs)


def _growth_floor(q_prev, n):
    # smallest integer q with q^{-sqrt(n+1)} < 0.001 q_prev^{-sqrt(n)}
    with mpmath.workprec(256):
        bound = (1000 * mpmath.mpf(q_prev) ** mpmath.sqrt(n)) ** (1 / mpmath.sqrt(n + 1))
        q = int(mpmath.floor(bound))
    while not growth_holds(q_prev, q, n):
        q += 1
    return q


def _ceil_div(a, b):
    return -((-a) // b)


def liouville_alpha(gammas, q_min=2, growth=False, seed=None, bits=None, tail="golden"):
    """Build alpha whose convergents satisfy |q_n alpha - p_n| < 1/(16 q_n^gamma_n).

    Greedy continued-fraction extension: a stage convergent q_k is followed by
    a partial quotient a_{k+1} with q_{k+1} >= 16 q_k^gamma, which forces the
    inequality for every admissible tail.  With ``growth=True`` consecutive
    stage denominators also satisfy q_n^{-sqrt(n+1)} < 0.001 q_{n-1}^{-sqrt(n)}.

    With ``seed`` (an existing rotation number) no construction happens: its
    own convergents are searched and an infeasible stage raises
    :class:`PreconditionFailed`.
    """
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("at least one gamma required")
    if any(g < 2 for g in gammas) or any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be >= 2 and nondecreasing")
    if q_min < 2:
        raise ValueError("q_min must be >= 2")
    bits = precision_bits(bits)
    if seed is not None:
        return _schedule_from_seed(seed, gammas, q_min, growth)

    quots = [q_min]
    pq = [(1, 0), (0, 1), (1, q_min)]  # p_{-1}/q_{-1}, p_0/q_0, p_1/q_1
    stage_idx = []
    for n, gamma in enumerate(gammas, start=1):
        # current last convergent becomes stage n; pad with ones if it is too small
        while True:
            p, q = pq[-1]
            ok = q >= q_min
            if ok and growth and stage_idx:
                ok = growth_holds(pq[stage_idx[-1]][1], q, n)
            if ok:
                break
            quots.append(1)
            pq.append((pq[-1][0] + pq[-2][0], pq[-1][1] + pq[-2][1]))
        stage_idx.append(len(pq) - 1)
        p, q = pq[-1]
        q_prev = pq[-2][1]
        with mpmath.workprec(256):
            need = int(mpmath.ceil(16 * mpmath.mpf(q) ** gamma))
        target = need
        if growth and n < len(gammas):
            target = max(target, _growth_floor(q, n + 1))
        a = max(1, _ceil_div(target - q_prev, q))
        quots.append(a)
        pq.append((a * p + pq[-2][0], a * q + q_prev))

    value = from_partial_quotients(quots, tail=tail, bits=bits)
    q_last = pq[-1][1]
    truncated = False
    notice = ""
    # the stage inequalities need roughly log2(16 q^(gamma+1)) bits
    with mpmath.workprec(64):
        needed = float(mpmath.log(16 * mpmath.mpf(q_last) ** 2, 2)) + 64
    if needed > bits:
        truncated = True
        notice = f"precision exhausted: {bits} bits < {needed:.0f} needed"
    rot = continued_fraction(value, len(quots) + 4, bits)
    stages = []
    for n, (gamma, idx) in enumerate(zip(gammas, stage_idx), start=1):
        p, q = pq[idx]
        k = idx - 1
        if k > len(rot.convergents) or rot.convergents[k - 1] != (p, q):
            truncated = True
            notice = notice or f"stage {n} lost to precision exhaustion"
            break
        if not approximation_holds(rot, p, q, gamma):
            truncated = True
            notice = notice or f"stage {n} inequality not certified at {bits} bits"
            break
        stages.append(ScheduleStage(p, q, gamma, k))
    return LiouvilleSchedule(rot, tuple(stages), truncated, notice, growth)


def _schedule_from_seed(seed, gammas, q_min, growth):
    rot = seed if isinstance(seed, RotationNumber) else continued_fraction(seed, 64)
    stages = []
    start = 0
    for n, gamma in enumerate(gammas, start=1):
        found = None
        for k in range(start, len(rot.convergents)):
            p, q = rot.convergents[k]
            if q < q_min:
                continue
            if growth and stages and not growth_holds(stages[-1].q, q, n):
                continue
            if approximation_holds(rot, p, q, gamma):
                found = ScheduleStage(p, q, gamma, k + 1)
                start = k + 1
                break
        if found is None:
            raise PreconditionFailed(
                f"stage {n} infeasible: no convergent up to depth {rot.depth} satisfies "
                f"|q alpha - p| < 1/(16 q^{gamma:g}) (bounded-type alpha?)")
        stages.append(found)
    return LiouvilleSchedule(rot, tuple(stages), False, "", growth)
