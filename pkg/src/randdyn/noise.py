"""Heavy-tailed dyadic noise: exact sampling and two-sided counter-based paths.

The driving noise is an i.i.d. sequence of random scale factors xi = 2**-k
supported on the dyadic points {2**-k : k >= 2} with tail law

    P(xi <= 2**-k) = P(exponent >= k) = 1 / (k - 1),   k >= 2,

equivalently the atomic law P(exponent == k) = 1/(k*(k-1)).  The exponent k
has infinite mean, so every moment-style diagnostic downstream has to cope
with extremely large k; for that reason atoms are represented by their
integer exponent and the float 2**-k is never needed inside this module.

Paths are generated counter-based: the atom at index m of the path with a
given seed is a pure function of (seed, m), obtained by avalanche-mixing the
pair into one uniform and inverting the CDF.  This gives O(1) random access
at arbitrary (also negative) indices, which is what pullback experiments and
order-independent parallel ensembles need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseAtom",
    "NoisePath",
    "sample_exponent",
    "noise_exponent",
    "noise_at",
    "shift",
    "derive_seed",
    "derive_seeds",
    "exponents_at",
    "exponents_range",
]

_MASK64 = (1 << 64) - 1
# Weyl increment and finalizer constants of the splitmix64 output function.
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
# Separate Weyl increment for deriving per-sample seeds, so that sample
# streams and index streams cannot alias each other structurally.
_STREAM = 0xD1B54A32D192ED03

_U53 = 1 << 53


@dataclass(frozen=True)
class NoiseAtom:
    """One noise draw xi = 2**-exponent, stored by its integer exponent."""

    exponent: int

    def __post_init__(self) -> None:
        if self.exponent < 2:
            raise ValueError(f"noise exponent must be >= 2, got {self.exponent}")

    @property
    def value(self) -> float:
        """xi as a float; underflows to 0.0 for exponent > 1074."""
        if self.exponent > 1074:
            return 0.0
        return 2.0 ** -self.exponent


def _mix64(x: int) -> int:
    """splitmix64 finalizer: a bijective avalanche mix of one 64-bit word."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def sample_exponent(u: float) -> int:
    """Invert the tail CDF: map a uniform u in (0, 1] to the exponent k.

    Returns k = floor(1/u) + 1, so that for uniform u the tail law
    P(k >= j) = 1/(j-1) holds for every integer j >= 2.
    """
    if not 0.0 < u <= 1.0:
        raise ValueError(f"uniform variate must lie in (0, 1], got {u}")
    recip = 1.0 / u
    if recip == float("inf"):
        # deep-subnormal u: 1/u overflows, fall back to exact rational floor
        p, q = u.as_integer_ratio()
        return q // p + 1
    return int(recip) + 1


def noise_exponent(seed: int, index: int) -> int:
    """Exponent of the atom at a path index, as a pure function of (seed, index).

    The pair is mixed through splitmix64 evaluated at counter position
    `index`, giving a 53-bit uniform i/2**53 with i in [1, 2**53]; the
    exponent is then floor(2**53 / i) + 1 in exact integer arithmetic.
    """
    x = _mix64(seed + index * _GOLDEN)
    i = (x >> 11) + 1
    return _U53 // i + 1


def noise_at(seed: int, index: int) -> NoiseAtom:
    """Atom at a signed path index; deterministic in (seed, index)."""
    return NoiseAtom(noise_exponent(seed, index))


@dataclass(frozen=True)
class NoisePath:
    """A seeded two-sided noise sequence, lazily indexable over all of Z.

    Shifting by r re-bases the index origin: shift(p, r).at(m) == p.at(m + r).
    This realizes the time-shift group of the noise without materializing
    any sequence.
    """

    seed: int
    offset: int = 0

    def at(self, index: int) -> NoiseAtom:
        return noise_at(self.seed, index + self.offset)

    def exponent_at(self, index: int) -> int:
        return noise_exponent(self.seed, index + self.offset)

    def shift(self, r: int) -> "NoisePath":
        return NoisePath(self.seed, self.offset + r)


def shift(path: NoisePath, r: int) -> NoisePath:
    """Shift a path by r indices: shift(p, r).at(m) == p.at(m + r)."""
    return path.shift(r)


def derive_seed(seed: int, sample: int) -> int:
    """Per-sample 64-bit seed, decorrelated from the index stream."""
    return _mix64((seed ^ _GOLDEN) + sample * _STREAM)


def derive_seeds(seed: int, start: int, stop: int) -> np.ndarray:
    """Vectorized derive_seed for samples start..stop-1 (uint64 array)."""
    samples = np.arange(start, stop, dtype=np.uint64)
    x = (np.uint64(seed & _MASK64) ^ np.uint64(_GOLDEN)) + samples * np.uint64(_STREAM)
    return _mix64_np(x)


def _mix64_np(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return x


def _exponents_from_words(x: np.ndarray) -> np.ndarray:
    """Mixed 64-bit words -> atom exponents, elementwise.

    The uniform is i/2**53 with i in [1, 2**53]; the float division
    floor(1/u) provably equals the exact integer floor(2**53 / i) on this
    grid, and is chunk-shape independent, so parallel ensembles reproduce
    the scalar path bit for bit.
    """
    i = (x >> np.uint64(11)) + np.uint64(1)
    u = i.astype(np.float64) * 2.0**-53
    return np.floor(1.0 / u).astype(np.int64) + 1


def exponents_at(seeds: np.ndarray, index: int) -> np.ndarray:
    """Atom exponents at one index across many seeds (int64 array)."""
    base = np.uint64((index * _GOLDEN) & _MASK64)
    return _exponents_from_words(_mix64_np(seeds + base))


def exponents_range(seed: int, start: int, stop: int) -> np.ndarray:
    """Atom exponents at indices start..stop-1 of one path (int64 array).

    Signed indices wrap through two's complement, matching the scalar
    noise_exponent arithmetic mod 2**64 exactly.
    """
    idx = np.arange(start, stop, dtype=np.int64).view(np.uint64)
    x = _mix64_np(np.uint64(seed & _MASK64) + idx * np.uint64(_GOLDEN))
    return _exponents_from_words(x)
