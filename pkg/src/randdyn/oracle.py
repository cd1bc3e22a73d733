"""Closed-form reference values backing the statistical acceptance tests.

Everything here is deterministic and, where declared rational, exact: the
bound and tail probabilities are Fractions, so the ground-truth side of a
tolerance check never contributes rounding of its own.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .maps import MapFamily

__all__ = [
    "survival_bound",
    "exact_exponent",
    "truncated_log_moment",
    "tail_probability",
    "harmonic_number",
]


def survival_bound(k: int, n: int) -> Fraction:
    """Exact bound k/(k+n) on the probability that a G-orbit started above
    2**-k is still inside (-1, 1) after n steps: the telescoping product
    of the per-step atom-tail factors (k+m-1)/(k+m), m = 1..n."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    return Fraction(k, k + n)


def exact_exponent(family: MapFamily) -> float:
    """The Lyapunov exponent at the fixed point 0: -ln 2 for G, +ln 2 for F."""
    lam = math.log(2.0)
    return -lam if family is MapFamily.G else lam


def harmonic_number(m: int) -> float:
    """H_m = sum_{j=1..m} 1/j, summed exactly then rounded once for m <= 40,
    else accumulated in float (ample for the diagnostics here)."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if m <= 40:
        return float(sum(Fraction(1, j) for j in range(1, m + 1)))
    return math.fsum(1.0 / j for j in range(1, m + 1))


def truncated_log_moment(k0: int | None = None) -> float:
    """E[ln^+ sup|Dg| restricted to atoms with exponent <= k0].

    The derivative sup over [-1, 1] is 2**k, so the censored expectation is
    ln 2 * sum_{k=2..k0} k * P(exponent = k) = ln 2 * H_{k0-1}.  Without a
    truncation the moment diverges and +inf is returned.
    """
    if k0 is None:
        return math.inf
    if k0 < 2:
        raise ValueError(f"truncation exponent must be >= 2, got {k0}")
    return math.log(2.0) * harmonic_number(k0 - 1)


def tail_probability(k: int) -> Fraction:
    """P(exponent >= k) = P(xi <= 2**-k) = 1/(k-1), exact."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    return Fraction(1, k - 1)
