"""Forward and pullback orbit computation and the cocycle algebra.

Indexing convention: step m of a forward orbit consumes the atom at path
index m, so an n-step orbit reads indices 1..n and the n-step pullback
(running the system from time -n up to 0) reads indices -n+1..0 in
increasing order.  With this convention the time shift of the noise is a
pure index shift and the cocycle law

    orbit over s+t steps == orbit over t steps started from the s-step
    state on the path shifted by s

holds bit for bit, because both sides perform the identical float
operations on the identical atoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .maps import Escaped, ExtReal, MapFamily, MonotoneMap1D, is_escaped
from .noise import NoisePath

__all__ = ["Orbit", "forward_orbit", "pullback_state", "cocycle_check", "skew_step"]


@dataclass(frozen=True)
class Orbit:
    """A trajectory Z_0..Z_n with escape bookkeeping and exact slope sums.

    states[m] is the state after m steps; once a state escapes, all later
    states repeat the same Escaped marker.  step_exp2[m-1] is the base-2
    exponent of the slope at step m (each slope is an exact power of two);
    accumulation stops at escape.  log2_deriv_sum is their exact integer
    sum, so log-derivative sums carry no float rounding at all.
    """

    family: MapFamily
    path: NoisePath
    initial: float
    states: list[ExtReal]
    step_exp2: list[int] = field(repr=False)
    escaped_at: int | None = None

    @property
    def n(self) -> int:
        return len(self.states) - 1

    @property
    def log2_deriv_sum(self) -> int:
        return sum(self.step_exp2)

    @property
    def final(self) -> ExtReal:
        return self.states[-1]


def _step(family: MapFamily, z: ExtReal, path: NoisePath, index: int) -> tuple[ExtReal, int | None]:
    """Apply one map; returns (new state, slope exp2 or None if z escaped)."""
    if is_escaped(z):
        return z, None
    m = MonotoneMap1D(family, path.at(index))
    return m.eval(z), m.derivative_exp2(z)


def forward_orbit(family: MapFamily, path: NoisePath, z0: float, n: int) -> Orbit:
    """Iterate the map n times from z0, consuming atoms at indices 1..n."""
    if n < 0:
        raise ValueError(f"orbit length must be >= 0, got {n}")
    states: list[ExtReal] = [z0]
    exps: list[int] = []
    escaped_at: int | None = None
    z: ExtReal = z0
    for m in range(1, n + 1):
        z, d = _step(family, z, path, m)
        states.append(z)
        if d is not None:
            exps.append(d)
        if escaped_at is None and is_escaped(z):
            escaped_at = m
    return Orbit(family, path, z0, states, exps, escaped_at)


def pullback_state(family: MapFamily, path: NoisePath, z0: float, n: int) -> ExtReal:
    """State after running n steps with noise from the past: atoms at
    indices -n+1..0 applied in increasing index order."""
    if n < 0:
        raise ValueError(f"pullback horizon must be >= 0, got {n}")
    return forward_orbit(family, path.shift(-n), z0, n).final


def cocycle_check(
    family: MapFamily,
    path: NoisePath,
    z0: float,
    s: int,
    t: int,
    rel_tol: float = 1e-9,
) -> bool:
    """Verify the composition law: s+t steps in one shot against t steps
    continued from the s-step state on the path shifted by s."""
    if s < 0 or t < 0:
        raise ValueError("s and t must be >= 0")
    one_shot = forward_orbit(family, path, z0, s + t).final
    mid = forward_orbit(family, path, z0, s).final
    if is_escaped(mid):
        two_stage: ExtReal = mid
    else:
        two_stage = forward_orbit(family, path.shift(s), mid, t).final
    if is_escaped(one_shot) or is_escaped(two_stage):
        return (
            is_escaped(one_shot)
            and is_escaped(two_stage)
            and one_shot.sign == two_stage.sign
        )
    return abs(one_shot - two_stage) <= rel_tol * max(1.0, abs(one_shot))


def skew_step(family: MapFamily, path: NoisePath, z: ExtReal) -> tuple[NoisePath, ExtReal]:
    """One step of the skew product: advance the noise by one index and
    apply the map with the atom the orbit would consume at that step."""
    new_state, _ = _step(family, z, path, 1)
    return path.shift(1), new_state
