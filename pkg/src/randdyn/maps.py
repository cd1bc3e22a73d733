"""The two map families: a piecewise-linear expander G and its inverse F.

For a noise scale xi = 2**-k the G-family map is

    g(z, xi) = z/2              for |z| <= 2*xi,
               z/xi + xi - 2    for  z  >  2*xi,
               z/xi - xi + 2    for  z  < -2*xi.

It is strictly increasing, odd, fixes 0, has slope 1/2 on the closed inner
interval (kinks included) and slope 1/xi = 2**k outside.  The F family is
the exact algebraic inverse:

    f(y, xi) = 2*y              for |y| <= xi,
               xi*(y + 2 - xi)  for  y  >  xi,
               xi*(y - 2 + xi)  for  y  < -xi.

Numerical policy
----------------
Division by xi is never performed on a possibly-underflowed float: all
scaling by 2**k or 2**-k goes through binary-exponent manipulation
(frexp/ldexp), so slopes and Lyapunov sums stay exact for arbitrarily large
k.  G-orbits diverge doubly fast once |z| >= 1, so any value of magnitude
>= ESCAPE_THRESHOLD is collapsed to an Escaped marker carrying its sign;
this loses nothing observable and prevents float overflow.  F-images may
underflow to exact 0.0, which is accepted: for synchronization diagnostics
("diameter below any epsilon") that is the right observable answer.

Long-running engines use a widened state (mantissa, int exponent) instead
of raw floats, so that deep-subnormal orbits neither flush to zero nor lose
precision; see g_step_arrays / f_step_arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .noise import NoiseAtom

__all__ = [
    "ESCAPE_THRESHOLD",
    "Escaped",
    "ExtReal",
    "MapFamily",
    "MonotoneMap1D",
    "is_escaped",
    "g_eval",
    "g_derivative",
    "g_derivative_exp2",
    "f_eval",
    "f_derivative",
    "f_derivative_exp2",
    "c1_seminorms",
    "g_step_wide",
    "f_step_wide",
    "g_step_arrays",
    "f_step_arrays",
    "f_step_plain",
]

ESCAPE_THRESHOLD = 1.0e12

# Exponent clamps: scaling below 2**-1200 is a guaranteed float zero and
# above 2**4096 a guaranteed float inf, so clamped ldexp arguments give the
# same float results as the unclamped ones while staying in int range.
_EXP_LO = -1200
_EXP_HI = 4096


@dataclass(frozen=True)
class Escaped:
    """Absorbing out-of-range marker for a diverged orbit; keeps the sign."""

    sign: int

    def __post_init__(self) -> None:
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")


ExtReal = float | Escaped


def is_escaped(x: ExtReal) -> bool:
    return isinstance(x, Escaped)


class MapFamily(str, Enum):
    """Map family tag: G diverges from 0 despite contracting at it; F = G^-1."""

    G = "G"
    F = "F"

    @property
    def inverse(self) -> "MapFamily":
        return MapFamily.F if self is MapFamily.G else MapFamily.G


def _g_inner(e: int, abs_m: float, k: int) -> bool:
    """|m * 2**e| <= 2**(1-k), for |m| in [0.5, 1)."""
    return e <= 1 - k or (e == 2 - k and abs_m == 0.5)


def _f_inner(e: int, abs_m: float, k: int) -> bool:
    """|m * 2**e| <= 2**-k, for |m| in [0.5, 1)."""
    return e <= -k or (e == 1 - k and abs_m == 0.5)


def g_eval(z: ExtReal, xi: NoiseAtom) -> ExtReal:
    """One application of the G map.  Total on floats; Escaped is absorbing."""
    if isinstance(z, Escaped):
        return z
    k = xi.exponent
    if z == 0.0:
        return 0.0
    if k > 1074:
        # xi underflows as a float while z is a nonzero float, so z lies far
        # outside the inner interval and z/xi dwarfs any finite threshold
        return Escaped(1 if z > 0 else -1)
    m, e = math.frexp(z)
    if _g_inner(e, abs(m), k):
        return math.ldexp(m, e - 1)
    v = math.ldexp(abs(m), min(e + k, _EXP_HI))  # |z| * 2**k, exact (or inf)
    w = (v - 2.0) + math.ldexp(1.0, -k)
    if w >= ESCAPE_THRESHOLD:
        return Escaped(1 if z > 0 else -1)
    return w if z > 0 else -w


def g_derivative(z: float, xi: NoiseAtom) -> float:
    """Slope of g at z (kinks assigned to the inner branch); inf if 2**k overflows."""
    k = g_derivative_exp2(z, xi)
    return math.ldexp(1.0, k) if k <= 1023 else math.inf


def g_derivative_exp2(z: float, xi: NoiseAtom) -> int:
    """Exact base-2 exponent of the slope of g at z: -1 inner, +k outer."""
    k = xi.exponent
    if z == 0.0:
        return -1
    m, e = math.frexp(z)
    return -1 if _g_inner(e, abs(m), k) else k


def f_eval(y: float, xi: NoiseAtom) -> float:
    """One application of the F map; may underflow to exact 0.0."""
    k = xi.exponent
    if y == 0.0:
        return 0.0
    m, e = math.frexp(y)
    if _f_inner(e, abs(m), k):
        return math.ldexp(m, e + 1)
    a = abs(y)
    b = (a + 2.0) - math.ldexp(1.0, max(-k, _EXP_LO))
    w = math.ldexp(b, max(-k, _EXP_LO))
    return w if y > 0 else -w


def f_derivative(y: float, xi: NoiseAtom) -> float:
    """Slope of f at y: 2 inner, 2**-k outer (0.0 once 2**-k underflows)."""
    return math.ldexp(1.0, max(f_derivative_exp2(y, xi), -1200))


def f_derivative_exp2(y: float, xi: NoiseAtom) -> int:
    """Exact base-2 exponent of the slope of f at y: +1 inner, -k outer."""
    k = xi.exponent
    if y == 0.0:
        return 1
    m, e = math.frexp(y)
    return 1 if _f_inner(e, abs(m), k) else -k


def c1_seminorms(xi: NoiseAtom) -> tuple[float, float]:
    """(sup |g|, ln sup |Dg|) of the G map over [-1, 1].

    The outer region always meets [-1, 1] (2*xi <= 1/2), so the derivative
    sup is 1/xi = 2**k, reported as its exact natural log k*ln(2); the value
    sup is attained at z = 1.
    """
    k = xi.exponent
    if k > 1023:
        sup_abs = math.inf
    else:
        sup_abs = (math.ldexp(1.0, k) - 2.0) + math.ldexp(1.0, -k)
    return sup_abs, k * math.log(2.0)


@dataclass(frozen=True)
class MonotoneMap1D:
    """A strictly increasing bijection of R fixing 0: one family member at one xi."""

    family: MapFamily
    atom: NoiseAtom

    def eval(self, z: ExtReal) -> ExtReal:
        if self.family is MapFamily.G:
            return g_eval(z, self.atom)
        if isinstance(z, Escaped):
            return z
        return f_eval(z, self.atom)

    def derivative(self, z: float) -> float:
        if self.family is MapFamily.G:
            return g_derivative(z, self.atom)
        return f_derivative(z, self.atom)

    def derivative_exp2(self, z: float) -> int:
        if self.family is MapFamily.G:
            return g_derivative_exp2(z, self.atom)
        return f_derivative_exp2(z, self.atom)

    def inverse_eval(self, y: ExtReal) -> ExtReal:
        return MonotoneMap1D(self.family.inverse, self.atom).eval(y)


# ---------------------------------------------------------------------------
# Widened state: value = m * 2**e with |m| in [0.5, 1) or m == 0, e a plain
# integer.  Exponent-range-unlimited, so deep-subnormal orbits neither flush
# to zero nor lose mantissa bits.  Unlike the plain g_eval above, the wide G
# step has no k > 1074 short-circuit: with an unbounded exponent that case
# is nothing special and is computed honestly.
# ---------------------------------------------------------------------------


def g_step_wide(m: float, e: int, k: int) -> tuple[float, int, int]:
    """One wide G step.  Returns (m', e', escape_sign): escape_sign is 0
    while the value stays below ESCAPE_THRESHOLD, else +1/-1."""
    if m == 0.0:
        return 0.0, 0, 0
    if _g_inner(e, abs(m), k):
        return m, e - 1, 0
    v = math.ldexp(abs(m), min(e + k, _EXP_HI))
    w = (v - 2.0) + math.ldexp(1.0, max(-k, _EXP_LO))
    sign = 1 if m > 0 else -1
    if w >= ESCAPE_THRESHOLD:
        return m, e, sign
    wm, we = math.frexp(w)
    return (wm if sign > 0 else -wm), we, 0


def f_step_wide(m: float, e: int, k: int) -> tuple[float, int]:
    """One wide F step (never escapes; inputs above ~2**1023 not supported)."""
    if m == 0.0:
        return 0.0, 0
    if _f_inner(e, abs(m), k):
        return m, e + 1
    a = math.ldexp(abs(m), max(min(e, 1023), _EXP_LO))
    b = (a + 2.0) - math.ldexp(1.0, max(-k, _EXP_LO))
    bm, be = math.frexp(b)
    return (bm if m > 0 else -bm), be - k


def g_step_arrays(
    m: np.ndarray, e: np.ndarray, esc: np.ndarray, k: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized wide G step over parallel state arrays.

    m: float64 mantissas, e: int64 exponents, esc: int8 escape signs
    (0 = live), k: int64 atom exponents.  Escaped entries are frozen.
    Elementwise only, so results are independent of chunking.
    """
    live = (esc == 0) & (m != 0.0)
    am = np.abs(m)
    inner = live & ((e <= 1 - k) | ((e == 2 - k) & (am == 0.5)))
    outer = live & ~inner

    ek = np.where(outer, np.minimum(e + k, _EXP_HI), 0)
    with np.errstate(over="ignore"):
        v = np.ldexp(np.abs(m), ek)
        xi = np.ldexp(1.0, np.maximum(-k, _EXP_LO))
        w = (v - 2.0) + xi

    esc_new = np.where(
        outer & (w >= ESCAPE_THRESHOLD),
        np.where(m > 0, 1, -1).astype(np.int8),
        esc,
    )
    settled = outer & (esc_new == 0)
    wm, we = np.frexp(np.where(settled, w, 1.0))
    sgn = np.where(m < 0, -1.0, 1.0)
    m_new = np.where(inner, m, np.where(settled, sgn * wm, m))
    e_new = np.where(inner, e - 1, np.where(settled, we.astype(np.int64), e))
    return m_new, e_new, esc_new


def f_step_arrays(
    m: np.ndarray, e: np.ndarray, k: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized wide F step (no escape; inputs above ~2**1023 not supported)."""
    live = m != 0.0
    am = np.abs(m)
    inner = live & ((e <= -k) | ((e == 1 - k) & (am == 0.5)))
    outer = live & ~inner

    a = np.ldexp(am, np.clip(e, _EXP_LO, 1023))
    xi = np.ldexp(1.0, np.maximum(-k, _EXP_LO))
    b = np.where(outer, (a + 2.0) - xi, 1.0)
    bm, be = np.frexp(b)
    sgn = np.where(m < 0, -1.0, 1.0)
    m_new = np.where(inner, m, np.where(outer, sgn * bm, m))
    e_new = np.where(inner, e + 1, np.where(outer, be.astype(np.int64) - k, e))
    return m_new, e_new


def f_step_plain(z: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Vectorized F step on raw float64 state (underflow to 0.0 accepted).

    Weakly monotone in z and exactly odd, which is what the pullback
    diameter diagnostics rely on.
    """
    az = np.abs(z)
    xi = np.ldexp(1.0, np.maximum(-k, _EXP_LO))
    inner = az <= xi
    outer_val = np.ldexp((az + 2.0) - xi, np.maximum(-k, _EXP_LO))
    res = np.where(inner, az + az, outer_val)
    return np.where(z < 0, -res, res)
