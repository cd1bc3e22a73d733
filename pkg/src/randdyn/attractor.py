"""Synchronization, divergence, survival and stable/unstable-set diagnostics.

All Monte Carlo estimators here follow one pattern: a pure chunk kernel
computes per-sample outcomes for a contiguous range of sample indices
(seeded independently of every other sample via derive_seeds), a chunk
runner maps the kernel over [0, N), and the reduction to probabilities
runs once over the stitched per-sample arrays in ascending index order.
Because the kernels are elementwise, any partition of the index range
produces identical per-sample values, so results are bit-identical for
every worker count; the default runner is serial.

Half-widths attached to empirical probabilities are one binomial standard
error sqrt(p*(1-p)/N); acceptance-style checks use three of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import partial
from typing import Callable

import numpy as np

from .cocycle import Orbit, forward_orbit
from .maps import (
    MapFamily,
    f_step_arrays,
    f_step_plain,
    f_step_wide,
    g_step_arrays,
    g_step_wide,
    is_escaped,
)
from .noise import NoisePath, derive_seeds, exponents_at
from .oracle import survival_bound

__all__ = [
    "SurvivalPoint",
    "SurvivalCurve",
    "PullbackPoint",
    "PullbackDiameterCurve",
    "ProbePoint",
    "ProbeCurve",
    "DivergenceAudit",
    "UnstableProbeReport",
    "ChunkRunner",
    "run_serial",
    "survival_curve",
    "forward_threshold_curve",
    "divergence_audit",
    "pullback_diameter_curve",
    "pullback_diameter_profile",
    "stable_set_probe",
    "stable_probe_fraction",
    "unstable_set_probe",
    "unstable_probe_fraction",
]

_LN2 = math.log(2.0)

# chunk runner: maps kernel(start, stop) -> dict of per-sample arrays over
# [0, total) and returns the stitched dict
ChunkRunner = Callable[[int, Callable[[int, int], dict[str, np.ndarray]]], dict[str, np.ndarray]]


def run_serial(total: int, kernel: Callable[[int, int], dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    return kernel(0, total)


def _half_width(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


# ---------------------------------------------------------------------------
# G-family forward ensembles: P(|Z_n| < limit) at checkpoints
# ---------------------------------------------------------------------------


def _wide_abs_lt(m: np.ndarray, e: np.ndarray, limit: float) -> np.ndarray:
    """|m * 2**e| < limit elementwise, exponent-clipped so ldexp saturates."""
    v = np.ldexp(np.abs(m), np.clip(e, -1200, 1100))
    return v < limit


def _g_inside_chunk(
    z0: float,
    limit: float,
    horizons: tuple[int, ...],
    seed: int,
    start: int,
    stop: int,
) -> dict[str, np.ndarray]:
    count = stop - start
    seeds = derive_seeds(seed, start, stop)
    m0, e0 = math.frexp(z0)
    m = np.full(count, m0)
    e = np.full(count, e0, dtype=np.int64)
    esc = np.zeros(count, dtype=np.int8)
    inside = np.zeros((count, len(horizons)), dtype=bool)
    slot = {n: i for i, n in enumerate(horizons)}
    if 0 in slot:
        inside[:, slot[0]] = abs(z0) < limit
    for step in range(1, max(horizons) + 1):
        ks = exponents_at(seeds, step)
        m, e, esc = g_step_arrays(m, e, esc, ks)
        if step in slot:
            inside[:, slot[step]] = (esc == 0) & _wide_abs_lt(m, e, limit)
    return {"inside": inside}


@dataclass(frozen=True)
class SurvivalPoint:
    n: int
    p_hat: float
    half_width: float
    bound: Fraction


@dataclass(frozen=True)
class SurvivalCurve:
    k: int
    z0: float
    samples: int
    seed: int
    rows: tuple[SurvivalPoint, ...]


def survival_curve(
    k: int,
    z0: float,
    checkpoints: tuple[int, ...],
    samples: int,
    seed: int,
    chunk_runner: ChunkRunner = run_serial,
) -> SurvivalCurve:
    """Empirical P(|Z_n| < 1) for the G family against the exact bound
    k/(k+n), which requires the start hypothesis |z0| > 2**-k."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if z0 == 0.0 or abs(z0) <= math.ldexp(1.0, -k):
        raise ValueError(f"survival bound hypothesis needs |z0| > 2**-{k}, got {z0}")
    horizons = tuple(sorted(set(checkpoints)))
    if any(n < 0 for n in horizons):
        raise ValueError("checkpoints must be >= 0")
    out = chunk_runner(samples, partial(_g_inside_chunk, z0, 1.0, horizons, seed))
    inside = out["inside"]
    rows = []
    for i, n in enumerate(horizons):
        p = float(np.mean(inside[:, i]))
        rows.append(SurvivalPoint(n, p, _half_width(p, samples), survival_bound(k, n)))
    return SurvivalCurve(k, z0, samples, seed, tuple(rows))


def forward_threshold_curve(
    z0: float,
    limit: float,
    checkpoints: tuple[int, ...],
    samples: int,
    seed: int,
    chunk_runner: ChunkRunner = run_serial,
) -> tuple[ProbePoint, ...]:
    """Empirical P(|Z_n| < limit) for G-orbits from z0: the distributional
    dual of the F-family pullback-diameter exceedance (see pullback curve)."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    horizons = tuple(sorted(set(checkpoints)))
    out = chunk_runner(samples, partial(_g_inside_chunk, z0, limit, horizons, seed))
    inside = out["inside"]
    rows = []
    for i, n in enumerate(horizons):
        p = float(np.mean(inside[:, i]))
        rows.append(ProbePoint(n, p, _half_width(p, samples)))
    return tuple(rows)


# ---------------------------------------------------------------------------
# Pathwise lemma audit for G orbits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceAudit:
    """Stepwise check of the two pathwise growth lemmas along a G orbit:
    |Z_m| >= 4|Z_{m-1}| - 2 whenever |Z_{m-1}| >= 1, and |Z_m| < 1 implies
    |Z_{m-1}| <= 4*xi_m.  Both must hold by construction; a violation is an
    implementation bug, not a statistical event."""

    steps: int
    doubling_violations: tuple[int, ...]
    preescape_violations: tuple[int, ...]
    first_exit: int | None
    escaped_at: int | None

    @property
    def ok(self) -> bool:
        return not self.doubling_violations and not self.preescape_violations


def divergence_audit(orbit: Orbit) -> DivergenceAudit:
    if orbit.family is not MapFamily.G:
        raise ValueError("divergence audit applies to family-G orbits")
    doubling: list[int] = []
    preescape: list[int] = []
    first_exit: int | None = None
    for m in range(1, orbit.n + 1):
        prev = orbit.states[m - 1]
        cur = orbit.states[m]
        if first_exit is None:
            if is_escaped(cur) or (not is_escaped(cur) and abs(cur) >= 1.0):
                first_exit = m
        if is_escaped(prev):
            continue
        if abs(prev) >= 1.0 and not is_escaped(cur):
            # escaped cur passes analytically: outer branch scales by 2**k >= 4
            need = 4.0 * abs(prev) - 2.0
            if abs(cur) < math.nextafter(need, -math.inf):
                doubling.append(m)
        if not is_escaped(cur) and abs(cur) < 1.0:
            k = orbit.path.exponent_at(m)
            cap = math.ldexp(1.0, 2 - k) if k <= 1202 else 0.0
            if abs(prev) > math.nextafter(cap, math.inf):
                preescape.append(m)
    return DivergenceAudit(
        orbit.n, tuple(doubling), tuple(preescape), first_exit, orbit.escaped_at
    )


# ---------------------------------------------------------------------------
# F-family pullback diameter: synchronization diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PullbackPoint:
    n: int
    p_exceed: float
    half_width: float
    median_diameter: float


@dataclass(frozen=True)
class PullbackDiameterCurve:
    radius: float
    epsilon: float
    samples: int
    seed: int
    rows: tuple[PullbackPoint, ...]


def _pullback_chunk(
    radius: float,
    horizons: tuple[int, ...],
    seed: int,
    start: int,
    stop: int,
) -> dict[str, np.ndarray]:
    count = stop - start
    seeds = derive_seeds(seed, start, stop)
    diam = np.empty((count, len(horizons)))
    for i, n in enumerate(horizons):
        z = np.full(count, float(radius))
        for step in range(1, n + 1):
            ks = exponents_at(seeds, step - n)  # indices -n+1..0, ascending
            z = f_step_plain(z, ks)
        diam[:, i] = z + z  # diameter of the image of [-R, R]; maps are odd
    return {"diam": diam}


def pullback_diameter_curve(
    radius: float,
    epsilon: float,
    checkpoints: tuple[int, ...],
    samples: int,
    seed: int,
    chunk_runner: ChunkRunner = run_serial,
) -> PullbackDiameterCurve:
    """F-family pullback of [-R, R]: empirical P(diameter > epsilon) and the
    median diameter per horizon.  Monotonicity of the maps reduces the
    diameter to the two endpoint orbits, and oddness to the single orbit of
    +R.  Exceedance at n equals, in distribution, the G-forward event
    P(|Z_n| < R) from z0 = epsilon/2 (inversion plus exchangeability of the
    i.i.d. atoms); forward_threshold_curve computes that dual curve."""
    if radius <= 0.0:
        raise ValueError(f"radius must be > 0, got {radius}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    horizons = tuple(sorted(set(checkpoints)))
    if any(n < 0 for n in horizons):
        raise ValueError("checkpoints must be >= 0")
    out = chunk_runner(samples, partial(_pullback_chunk, radius, horizons, seed))
    diam = out["diam"]
    rows = []
    for i, n in enumerate(horizons):
        p = float(np.mean(diam[:, i] > epsilon))
        rows.append(
            PullbackPoint(n, p, _half_width(p, samples), float(np.median(diam[:, i])))
        )
    return PullbackDiameterCurve(radius, epsilon, samples, seed, tuple(rows))


def pullback_diameter_profile(
    radius: float, n_max: int, n_paths: int, seed: int
) -> np.ndarray:
    """Pullback diameters at every horizon 0..n_max on n_paths fixed paths,
    shape (n_paths, n_max+1).

    All horizons share one time sweep: the horizon-h orbit consumes atoms
    at indices 1-h..0, so at global time t every horizon h >= 1-t applies
    the same atom.  For radius >= 2/3 each map sends [-R, R] into itself,
    which makes the diameter non-increasing in h path by path, exactly in
    float arithmetic (the composed maps are weakly monotone)."""
    if radius <= 0.0 or n_max < 0 or n_paths < 1:
        raise ValueError("need radius > 0, n_max >= 0, n_paths >= 1")
    a = np.full((n_max + 1, n_paths), float(radius))
    seeds = derive_seeds(seed, 0, n_paths)
    for t in range(1 - n_max, 1):
        ks = exponents_at(seeds, t)
        h0 = max(1, 1 - t)
        a[h0:, :] = f_step_plain(a[h0:, :], ks[None, :])
    return (a + a).T


# ---------------------------------------------------------------------------
# Stable/unstable-set probes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbePoint:
    n: int
    fraction: float
    half_width: float


@dataclass(frozen=True)
class ProbeCurve:
    family: MapFamily
    samples: int
    seed: int
    rows: tuple[ProbePoint, ...]


def _envelope_split(log2_env: float) -> tuple[int, float]:
    """Split an envelope 2**log2_env into (int exponent, mantissa in [1, 2))."""
    fl = math.floor(log2_env)
    return int(fl), math.exp2(log2_env - fl)


def _under_envelope(m: np.ndarray, e: np.ndarray, env_e: int, env_m: float) -> np.ndarray:
    """|m * 2**e| <= env_m * 2**env_e elementwise, without per-element logs."""
    d = e - env_e
    v = np.ldexp(np.abs(m), np.clip(d, -64, 64))
    return (m == 0.0) | (d < -64) | ((d <= 64) & (v <= env_m))


def _check_envelope_scalar(m: float, e: int, env_e: int, env_m: float) -> bool:
    if m == 0.0:
        return True
    d = e - env_e
    if d < -64:
        return True
    if d > 64:
        return False
    return math.ldexp(abs(m), d) <= env_m


def _validate_probe_params(mu: float, beta: float, want_negative_mu: bool) -> None:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if want_negative_mu and not mu < 0.0:
        raise ValueError(f"stable-set probe needs a contraction rate mu < 0, got {mu}")
    if not want_negative_mu and not mu > 0.0:
        raise ValueError(f"unstable-set probe needs an expansion rate mu > 0, got {mu}")


def stable_set_probe(
    family: MapFamily,
    path: NoisePath,
    x: float,
    y: float,
    mu: float,
    beta: float,
    n: int,
) -> bool:
    """True iff the orbit separation obeys |phi_m(y) - phi_m(x)| <= beta *
    exp(mu*m) at every step m = 0..n.

    With x = 0 (the invariant point) the separation is the orbit of y
    itself, tracked in the widened representation so that deep-subnormal
    separations are neither flushed to zero nor rounded; the envelope
    comparison happens on split base-2 exponents, valid far beyond float
    range.  For x != 0 both orbits run in plain float arithmetic (adequate
    for moderate horizons; the x = 0 form is the calibrated one)."""
    _validate_probe_params(mu, beta, want_negative_mu=True)
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    if y == x:
        return True
    slope = mu / _LN2

    if x == 0.0:
        m, e = math.frexp(y)
        env_e, env_m = _envelope_split(math.log2(beta))
        if not _check_envelope_scalar(m, e, env_e, env_m):
            return False
        for step in range(1, n + 1):
            k = path.exponent_at(step)
            if family is MapFamily.G:
                m, e, esc = g_step_wide(m, e, k)
                if esc != 0:
                    return False
            else:
                m, e = f_step_wide(m, e, k)
            env_e, env_m = _envelope_split(math.log2(beta) + slope * step)
            if not _check_envelope_scalar(m, e, env_e, env_m):
                return False
        return True

    ox = forward_orbit(family, path, x, n)
    oy = forward_orbit(family, path, y, n)
    for step in range(n + 1):
        sx, sy = ox.states[step], oy.states[step]
        if is_escaped(sx) or is_escaped(sy):
            return False
        if abs(sy - sx) > beta * math.exp(mu * step):
            return False
    return True


def _stable_probe_chunk(
    family: MapFamily,
    y: float,
    mu: float,
    beta: float,
    horizons: tuple[int, ...],
    seed: int,
    start: int,
    stop: int,
) -> dict[str, np.ndarray]:
    count = stop - start
    seeds = derive_seeds(seed, start, stop)
    m0, e0 = math.frexp(y)
    m = np.full(count, m0)
    e = np.full(count, e0, dtype=np.int64)
    esc = np.zeros(count, dtype=np.int8)
    ok = np.ones(count, dtype=bool)
    snap = np.zeros((count, len(horizons)), dtype=bool)
    slot = {n: i for i, n in enumerate(horizons)}
    slope = mu / _LN2
    log2beta = math.log2(beta)
    env_e, env_m = _envelope_split(log2beta)
    ok &= _under_envelope(m, e, env_e, env_m)
    for step in range(1, max(horizons) + 1):
        ks = exponents_at(seeds, step)
        if family is MapFamily.G:
            m, e, esc = g_step_arrays(m, e, esc, ks)
            ok &= esc == 0
        else:
            m, e = f_step_arrays(m, e, ks)
        env_e, env_m = _envelope_split(log2beta + slope * step)
        ok &= _under_envelope(m, e, env_e, env_m)
        if step in slot:
            snap[:, slot[step]] = ok
    return {"ok": snap}


def stable_probe_fraction(
    family: MapFamily,
    y: float,
    mu: float,
    beta: float,
    checkpoints: tuple[int, ...],
    samples: int,
    seed: int,
    chunk_runner: ChunkRunner = run_serial,
) -> ProbeCurve:
    """Fraction of sample paths on which the stable-set probe at (0, y) still
    holds at each checkpoint horizon."""
    _validate_probe_params(mu, beta, want_negative_mu=True)
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    horizons = tuple(sorted(set(checkpoints)))
    if any(n < 1 for n in horizons):
        raise ValueError("checkpoints must be >= 1")
    if y == 0.0:
        raise ValueError("probe separation y must be nonzero")
    out = chunk_runner(
        samples, partial(_stable_probe_chunk, family, y, mu, beta, horizons, seed)
    )
    ok = out["ok"]
    rows = []
    for i, n in enumerate(horizons):
        p = float(np.mean(ok[:, i]))
        rows.append(ProbePoint(n, p, _half_width(p, samples)))
    return ProbeCurve(family, samples, seed, tuple(rows))


@dataclass(frozen=True)
class UnstableProbeReport:
    """Backward-orbit envelope check: exited == True certifies the start
    point leaves the candidate unstable set by step exit_step; completion
    is consistency with membership up to the probed horizon only."""

    family: MapFamily
    x0: float
    horizon: int
    exited: bool
    exit_step: int | None


def unstable_set_probe(
    family: MapFamily,
    path: NoisePath,
    x0: float,
    mu: float,
    beta: float,
    n: int,
) -> UnstableProbeReport:
    """Construct the unique backward orbit x_m (inverse maps, atoms at
    indices 0, -1, ..., -n+1) and report the first m with
    |x_m| > beta * exp(-mu*m), if any."""
    _validate_probe_params(mu, beta, want_negative_mu=False)
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    slope = -mu / _LN2
    log2beta = math.log2(beta)
    m, e = math.frexp(x0) if x0 != 0.0 else (0.0, 0)
    env_e, env_m = _envelope_split(log2beta)
    if not _check_envelope_scalar(m, e, env_e, env_m):
        return UnstableProbeReport(family, x0, n, True, 0)
    inverse_is_g = family is MapFamily.F
    for step in range(1, n + 1):
        k = path.exponent_at(1 - step)
        if inverse_is_g:
            m, e, esc = g_step_wide(m, e, k)
            if esc != 0:
                return UnstableProbeReport(family, x0, n, True, step)
        else:
            m, e = f_step_wide(m, e, k)
        env_e, env_m = _envelope_split(log2beta + slope * step)
        if not _check_envelope_scalar(m, e, env_e, env_m):
            return UnstableProbeReport(family, x0, n, True, step)
    return UnstableProbeReport(family, x0, n, False, None)


def _unstable_probe_chunk(
    family: MapFamily,
    x0: float,
    mu: float,
    beta: float,
    horizons: tuple[int, ...],
    seed: int,
    start: int,
    stop: int,
) -> dict[str, np.ndarray]:
    count = stop - start
    seeds = derive_seeds(seed, start, stop)
    if x0 != 0.0:
        m0, e0 = math.frexp(x0)
    else:
        m0, e0 = 0.0, 0
    m = np.full(count, m0)
    e = np.full(count, e0, dtype=np.int64)
    esc = np.zeros(count, dtype=np.int8)
    slope = -mu / _LN2
    log2beta = math.log2(beta)
    env_e, env_m = _envelope_split(log2beta)
    exited = ~_under_envelope(m, e, env_e, env_m)
    snap = np.zeros((count, len(horizons)), dtype=bool)
    slot = {n: i for i, n in enumerate(horizons)}
    inverse_is_g = family is MapFamily.F
    for step in range(1, max(horizons) + 1):
        ks = exponents_at(seeds, 1 - step)
        if inverse_is_g:
            m, e, esc = g_step_arrays(m, e, esc, ks)
            exited |= esc != 0
        else:
            m, e = f_step_arrays(m, e, ks)
        env_e, env_m = _envelope_split(log2beta + slope * step)
        exited |= ~_under_envelope(m, e, env_e, env_m)
        if step in slot:
            snap[:, slot[step]] = exited
    return {"exited": snap}


def unstable_probe_fraction(
    family: MapFamily,
    x0: float,
    mu: float,
    beta: float,
    checkpoints: tuple[int, ...],
    samples: int,
    seed: int,
    chunk_runner: ChunkRunner = run_serial,
) -> ProbeCurve:
    """Fraction of sample paths whose backward orbit has certifiably left the
    envelope by each checkpoint horizon."""
    _validate_probe_params(mu, beta, want_negative_mu=False)
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    horizons = tuple(sorted(set(checkpoints)))
    if any(n < 1 for n in horizons):
        raise ValueError("checkpoints must be >= 1")
    out = chunk_runner(
        samples, partial(_unstable_probe_chunk, family, x0, mu, beta, horizons, seed)
    )
    exited = out["exited"]
    rows = []
    for i, n in enumerate(horizons):
        p = float(np.mean(exited[:, i]))
        rows.append(ProbePoint(n, p, _half_width(p, samples)))
    return ProbeCurve(family, samples, seed, tuple(rows))
