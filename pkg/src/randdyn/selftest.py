"""Fast invariant suite: exact algebraic laws plus loose statistical smokes.

Each check is deterministic (pinned seeds; statistical smokes use 4-sigma
slack so a red result means a bug, not noise) and cheap enough that the
whole suite runs in a few seconds.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .cocycle import cocycle_check, forward_orbit, pullback_state, skew_step
from .lyapunov import finite_time_lyapunov
from .maps import (
    MapFamily,
    f_eval,
    f_step_wide,
    g_eval,
    g_step_wide,
    is_escaped,
)
from .noise import NoiseAtom, NoisePath, exponents_range, noise_at, sample_exponent
from .oracle import survival_bound, tail_probability

__all__ = ["CheckResult", "run_selftest"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _check_sampler_examples() -> CheckResult:
    cases = [(1.0, 2), (0.5, 3), (0.1, 11), (0.25, 5)]
    bad = [(u, k, sample_exponent(u)) for u, k in cases if sample_exponent(u) != k]
    return CheckResult("sampler_examples", not bad, str(bad))


def _check_tail_smoke() -> CheckResult:
    n = 100_000
    ks = exponents_range(20_240_801, 1, n + 1)
    for j in range(2, 9):
        p = 1.0 / (j - 1)
        emp = float(np.mean(ks >= j))
        if abs(emp - p) > 4.0 * math.sqrt(p * (1 - p) / n) + 1e-12:
            return CheckResult("tail_smoke", False, f"k>={j}: emp={emp}, p={p}")
    return CheckResult("tail_smoke", True)


def _check_shift_laws() -> CheckResult:
    p = NoisePath(987654321)
    for r, m in [(0, 5), (3, 0), (-5, 7), (11, -11)]:
        if p.shift(r).at(m) != p.at(m + r):
            return CheckResult("shift_laws", False, f"r={r}, m={m}")
        if p.shift(r).shift(-r).at(m) != p.at(m):
            return CheckResult("shift_laws", False, f"inverse r={r}, m={m}")
    return CheckResult("shift_laws", True)


def _check_kink_continuity() -> CheckResult:
    for k in range(2, 53):
        xi = NoiseAtom(k)
        two_xi = math.ldexp(1.0, 1 - k)
        if g_eval(two_xi, xi) != xi.value:
            return CheckResult("kink_continuity", False, f"g at k={k}")
        if f_eval(xi.value, xi) != two_xi:
            return CheckResult("kink_continuity", False, f"f at k={k}")
    return CheckResult("kink_continuity", True)


def _check_roundtrip_and_oddness() -> CheckResult:
    rng = random.Random(4)
    for _ in range(5000):
        k = rng.randint(2, 60)
        xi = NoiseAtom(k)
        z = rng.uniform(-1e6, 1e6) * 10.0 ** rng.randint(-6, 0)
        gz = g_eval(z, xi)
        if is_escaped(gz):
            continue
        back = f_eval(gz, xi)
        if abs(back - z) > 1e-9 * max(1.0, abs(z)):
            return CheckResult("roundtrip", False, f"f(g({z}, k={k}))={back}")
        if g_eval(-z, xi) != -gz:
            return CheckResult("roundtrip", False, f"oddness z={z}, k={k}")
        fz = f_eval(z, xi)
        gback = g_eval(fz, xi)
        if is_escaped(gback) or abs(gback - z) > 1e-9 * max(1.0, abs(z)):
            return CheckResult("roundtrip", False, f"g(f({z}, k={k}))")
    return CheckResult("roundtrip", True)


def _check_step_lemmas() -> CheckResult:
    rng = random.Random(5)
    for _ in range(5000):
        k = rng.randint(2, 40)
        xi = NoiseAtom(k)
        z = rng.uniform(-8.0, 8.0)
        gz = g_eval(z, xi)
        if abs(z) >= 1.0 and not is_escaped(gz):
            if abs(gz) < math.nextafter(4.0 * abs(z) - 2.0, -math.inf):
                return CheckResult("step_lemmas", False, f"doubling z={z}, k={k}")
        if not is_escaped(gz) and abs(gz) < 1.0:
            if abs(z) > math.nextafter(math.ldexp(1.0, 2 - k), math.inf):
                return CheckResult("step_lemmas", False, f"pre-escape z={z}, k={k}")
    return CheckResult("step_lemmas", True)


def _check_cocycle() -> CheckResult:
    rng = random.Random(6)
    for _ in range(200):
        path = NoisePath(rng.getrandbits(63))
        family = MapFamily.G if rng.random() < 0.5 else MapFamily.F
        z0 = rng.uniform(-2.0, 2.0)
        s, t = rng.randint(0, 12), rng.randint(0, 12)
        if not cocycle_check(family, path, z0, s, t):
            return CheckResult("cocycle_law", False, f"{family} z0={z0} s={s} t={t}")
    return CheckResult("cocycle_law", True)


def _check_skew_product() -> CheckResult:
    path = NoisePath(13)
    z = 0.3
    p = path
    state = z
    for m in range(1, 31):
        p, state = skew_step(MapFamily.G, p, state)
        if p.at(0) != path.at(m):
            return CheckResult("skew_product", False, f"shift at step {m}")
    direct = forward_orbit(MapFamily.G, path, z, 30).final
    same = (
        is_escaped(state)
        and is_escaped(direct)
        and state.sign == direct.sign
        or state == direct
    )
    return CheckResult("skew_product", same, f"{state} vs {direct}")


def _check_duality() -> CheckResult:
    rng = random.Random(7)
    for _ in range(200):
        seed = rng.getrandbits(63)
        path = NoisePath(seed)
        n = rng.randint(1, 15)
        x = rng.uniform(-3.0, 3.0)
        fwd = forward_orbit(MapFamily.G, path, x, n).final
        if is_escaped(fwd):
            continue
        back = fwd
        for m in range(n, 0, -1):
            back = f_eval(back, noise_at(seed, m))
        if abs(back - x) > 1e-9 * max(1.0, abs(x)):
            return CheckResult("duality", False, f"seed={seed} n={n} x={x}")
    return CheckResult("duality", True)


def _check_pullback_consistency() -> CheckResult:
    path = NoisePath(99)
    for n in (0, 1, 5, 20):
        a = pullback_state(MapFamily.F, path, 2.0, n)
        b = forward_orbit(MapFamily.F, path.shift(-n), 2.0, n).final
        if a != b:
            return CheckResult("pullback_consistency", False, f"n={n}")
    return CheckResult("pullback_consistency", True)


def _check_lyapunov_exact() -> CheckResult:
    lam = math.log(2.0)
    for j in range(20):
        path = NoisePath(j * 7919 + 1)
        for n in (1, 10, 200):
            vg = finite_time_lyapunov(MapFamily.G, path, 0.0, n).value
            vf = finite_time_lyapunov(MapFamily.F, path, 0.0, n).value
            if vg != -lam or vf != lam or vg + vf != 0.0:
                return CheckResult("lyapunov_exact", False, f"seed={j} n={n}")
    return CheckResult("lyapunov_exact", True)


def _check_oracle_telescoping() -> CheckResult:
    for k in (2, 4, 7):
        prod = Fraction(1)
        for m in range(1, 301):
            prod *= Fraction(k + m - 1, k + m)
            if prod != survival_bound(k, m):
                return CheckResult("oracle_telescoping", False, f"k={k} m={m}")
        if tail_probability(k) - tail_probability(k + 1) != Fraction(
            1, k * (k - 1)
        ):
            return CheckResult("oracle_telescoping", False, f"mass k={k}")
    return CheckResult("oracle_telescoping", True)


def _check_wide_matches_plain() -> CheckResult:
    rng = random.Random(8)
    for _ in range(4000):
        k = rng.randint(2, 900)
        xi = NoiseAtom(k)
        z = rng.uniform(-4.0, 4.0)
        m, e = math.frexp(z)
        wm, we, esc = g_step_wide(m, e, k)
        plain = g_eval(z, xi)
        if is_escaped(plain) != (esc != 0):
            return CheckResult("wide_vs_plain", False, f"escape z={z} k={k}")
        if not is_escaped(plain) and math.ldexp(wm, we) != plain:
            return CheckResult("wide_vs_plain", False, f"g z={z} k={k}")
        fm, fe = f_step_wide(m, e, k)
        if math.ldexp(fm, fe) != f_eval(z, xi):
            return CheckResult("wide_vs_plain", False, f"f z={z} k={k}")
    return CheckResult("wide_vs_plain", True)


def run_selftest() -> list[CheckResult]:
    checks = [
        _check_sampler_examples,
        _check_tail_smoke,
        _check_shift_laws,
        _check_kink_continuity,
        _check_roundtrip_and_oddness,
        _check_step_lemmas,
        _check_cocycle,
        _check_skew_product,
        _check_duality,
        _check_pullback_consistency,
        _check_lyapunov_exact,
        _check_oracle_telescoping,
        _check_wide_matches_plain,
    ]
    return [c() for c in checks]
