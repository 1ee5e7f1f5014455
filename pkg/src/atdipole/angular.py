"""Wigner 3j/6j symbols and dipole angular factors.

Angular momenta are passed as ordinary numbers (``1``, ``1.5``,
``Fraction(3, 2)``) and converted to twice-integers on entry, so the Racah
sums run in exact rational arithmetic. Only the final square root is taken
in floating point.

Phase conventions
-----------------
Condon-Shortley phases are used throughout. Reduced matrix elements in the
``J`` basis follow the asymmetric convention

    (j || d || j') = <j || d || j'>_sym / sqrt(2j + 1)

where ``j`` is the first (lower) state. A stretched sigma+ transition then
has ``mu = sqrt(2/3) (j || d || j')`` for Rb 5P3/2 F=3 -> nD5/2 F=4. The
overall sign of :func:`reduced_j_factor` is fixed so that hydrogen
1s1/2 -> 2p3/2 comes out positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt

__all__ = [
    "HalfInteger",
    "HyperfineTransition",
    "SelectionRuleError",
    "reduced_j_factor",
    "reduced_l_element",
    "stretched_hyperfine_factor",
    "wigner3j",
    "wigner6j",
]


class SelectionRuleError(ValueError):
    """Raised when a dipole selection rule forbids the requested element."""


def _twice(x) -> int:
    t = Fraction(x) * 2
    if t.denominator != 1:
        raise ValueError(f"{x!r} is not a half-integer")
    return int(t)


@dataclass(frozen=True)
class HalfInteger:
    """Exact half-integer stored as twice its value."""

    twice: int

    @classmethod
    def of(cls, x) -> "HalfInteger":
        if isinstance(x, HalfInteger):
            return x
        return cls(_twice(x))

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice, 2)

    def __float__(self) -> float:
        return self.twice / 2


def _coerce(x) -> int:
    if isinstance(x, HalfInteger):
        return x.twice
    return _twice(x)


def _sqrt_fraction(s: Fraction, t: Fraction) -> float:
    """Return s * sqrt(t) for rational s and t >= 0, rounding once."""
    if s == 0:
        return 0.0
    val = sqrt(float(s * s * t))
    return val if s > 0 else -val


def _triangle_ok(a2: int, b2: int, c2: int) -> bool:
    return (
        a2 + b2 >= c2
        and b2 + c2 >= a2
        and c2 + a2 >= b2
        and (a2 + b2 + c2) % 2 == 0
    )


@lru_cache(maxsize=None)
def _w3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    # all arguments are twice the physical value
    if m1 + m2 + m3 != 0:
        return 0.0
    if not _triangle_ok(j1, j2, j3):
        return 0.0
    for j, m in ((j1, m1), (j2, m2), (j3, m3)):
        if abs(m) > j or (j + m) % 2:
            return 0.0
    f = lambda t2: factorial(t2 // 2)  # noqa: E731
    delta = Fraction(
        f(j1 + j2 - j3) * f(j1 - j2 + j3) * f(-j1 + j2 + j3), f(j1 + j2 + j3 + 2)
    )
    pref = delta * (
        f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2) * f(j3 + m3) * f(j3 - m3)
    )
    kmin = max(0, (j2 - j3 - m1) // 2, (j1 - j3 + m2) // 2)
    kmax = min((j1 + j2 - j3) // 2, (j1 - m1) // 2, (j2 + m2) // 2)
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (
            factorial(k)
            * factorial((j3 - j2 + m1) // 2 + k)
            * factorial((j3 - j1 - m2) // 2 + k)
            * factorial((j1 + j2 - j3) // 2 - k)
            * factorial((j1 - m1) // 2 - k)
            * factorial((j2 + m2) // 2 - k)
        )
        total += Fraction((-1) ** k, den)
    if ((j1 - j2 - m3) // 2) % 2:
        total = -total
    return _sqrt_fraction(total, pref)


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3j symbol; zero when triangle or projection rules fail."""
    return _w3j(*(_coerce(x) for x in (j1, j2, j3, m1, m2, m3)))


def _delta2(a: int, b: int, c: int) -> Fraction:
    f = lambda t2: factorial(t2 // 2)  # noqa: E731
    return Fraction(f(a + b - c) * f(a - b + c) * f(-a + b + c), f(a + b + c + 2))


@lru_cache(maxsize=None)
def _w6j(j1: int, j2: int, j3: int, j4: int, j5: int, j6: int) -> float:
    triads = ((j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3))
    if not all(_triangle_ok(*t) for t in triads):
        return 0.0
    pref = Fraction(1)
    for t in triads:
        pref *= _delta2(*t)
    a = [sum(t) // 2 for t in triads]
    b = [
        (j1 + j2 + j4 + j5) // 2,
        (j2 + j3 + j5 + j6) // 2,
        (j3 + j1 + j6 + j4) // 2,
    ]
    total = Fraction(0)
    for t in range(max(a), min(b) + 1):
        den = 1
        for ai in a:
            den *= factorial(t - ai)
        for bi in b:
            den *= factorial(bi - t)
        total += Fraction((-1) ** t * factorial(t + 1), den)
    return _sqrt_fraction(total, pref)


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6}; zero on any triad violation."""
    return _w6j(*(_coerce(x) for x in (j1, j2, j3, j4, j5, j6)))


def _parity(twice_sum: int) -> int:
    # (-1)**(twice_sum/2); twice_sum must be even
    if twice_sum % 2:
        raise ValueError("phase exponent is not an integer")
    return -1 if (twice_sum // 2) % 2 else 1


def reduced_l_element(l, lp) -> float:
    """<l || C1 || l'> in the symmetric convention."""
    return _parity(2 * l) * sqrt((2 * l + 1) * (2 * lp + 1)) * wigner3j(l, 1, lp, 0, 0, 0)


# Global sign so that hydrogen 1s1/2 -> 2p3/2 is positive.
_J_FACTOR_SIGN = -1


def reduced_j_factor(l, j, lp, jp, s=Fraction(1, 2)) -> float:
    """Factor f with (l j || d || l' j') = f <n l | r | n' l'> (asymmetric convention)."""
    if abs(l - lp) != 1:
        raise SelectionRuleError(f"dipole requires |delta l| = 1, got l={l}, l'={lp}")
    tj, tjp, ts = _coerce(j), _coerce(jp), _coerce(s)
    phase = _parity(2 * l + ts + tjp + 2)
    sym = (
        phase
        * sqrt((tj + 1) * (tjp + 1))
        * wigner6j(l, j, s, jp, lp, 1)
        * reduced_l_element(l, lp)
    )
    return _J_FACTOR_SIGN * sym / sqrt(tj + 1)


@dataclass(frozen=True)
class HyperfineTransition:
    """Dipole transition between hyperfine sublevels |J F m_F> -> |J' F' m_F'>."""

    j: float
    f: float
    m_f: float
    jp: float
    fp: float
    m_fp: float
    q: int
    nuclear_spin: float = 1.5

    @classmethod
    def from_states(cls, lower, upper, q: int, nuclear_spin=1.5) -> "HyperfineTransition":
        if lower.F is None or upper.F is None or lower.m_F is None or upper.m_F is None:
            raise ValueError("both states need F and m_F")
        return cls(lower.j, lower.F, lower.m_F, upper.j, upper.F, upper.m_F, q, nuclear_spin)


def stretched_hyperfine_factor(t: HyperfineTransition) -> float:
    """Coefficient c with mu(transition) = c (J || d || J').

    The matrix element is taken with the lower state in the bra,
    <J F m_F| d_{-q} |J' F' m_F'>, which is real and positive for the
    stretched sigma+ case. One 3j carries the projection structure and one
    6j the F recoupling.
    """
    if t.q not in (-1, 0, 1):
        raise SelectionRuleError(f"photon polarization must be -1, 0 or +1, got {t.q}")
    tmf, tmfp = _coerce(t.m_f), _coerce(t.m_fp)
    if tmfp != tmf + 2 * t.q:
        raise SelectionRuleError(f"m_F' = {t.m_fp} is not m_F + q = {t.m_f} + {t.q}")
    tj, tf, tfp, ti = (_coerce(x) for x in (t.j, t.f, t.fp, t.nuclear_spin))
    three = wigner3j(t.fp, 1, t.f, t.m_fp, -t.q, -t.m_f)
    six = wigner6j(t.j, t.jp, 1, t.fp, t.f, t.nuclear_spin)
    if three == 0.0 or six == 0.0:
        return 0.0
    phase = _parity(tfp - 2 + tmf) * _parity(tfp + tj + 2 + ti)
    return phase * sqrt(tf + 1) * three * sqrt((tfp + 1) * (tj + 1)) * six
