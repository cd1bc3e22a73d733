"""Reproducible experiment runner: every diagnostic as a seeded subcommand.

Output contract: JSON reports carry exactly the fields {config, seed,
version, rows}; CSV output carries the same metadata as `#`-prefixed
comment lines followed by a header row.  The echoed config holds every
semantic parameter of the run (argv_from_config rebuilds an equivalent
command line from it), while execution parameters -- worker count, output
path, format -- are deliberately left out: they must not influence the
bytes of a report, and worker-count invariance is part of the contract.

Exit codes: 0 success, 1 runtime failure (e.g. an orbit escaping under a
Lyapunov run), 2 configuration errors.  Validation errors print a one-line
JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import partial
from typing import Callable

import numpy as np

from . import __version__
from .attractor import (
    ChunkRunner,
    pullback_diameter_curve,
    run_serial,
    stable_probe_fraction,
    survival_curve,
    unstable_probe_fraction,
)
from .cocycle import forward_orbit
from .lyapunov import EscapedOrbit, integrability_diagnostic, lyapunov_over_seeds
from .maps import MapFamily, is_escaped
from .noise import NoisePath, exponents_range
from .oracle import exact_exponent, survival_bound, tail_probability, truncated_log_moment
from .selftest import run_selftest

__all__ = ["main", "run", "parallel_ensemble", "make_chunk_runner", "argv_from_config"]

_SEED_ENV = "RANDDYN_SEED"


# ---------------------------------------------------------------------------
# deterministic parallel ensemble driver
# ---------------------------------------------------------------------------


def parallel_ensemble(
    total: int,
    workers: int,
    kernel: Callable[[int, int], dict[str, np.ndarray]],
) -> dict[str, np.ndarray]:
    """Partition [0, total) into contiguous chunks, evaluate the kernel per
    chunk (in worker processes when workers > 1), and stitch the per-sample
    arrays back in ascending index order.  Kernels are elementwise in the
    sample index, so the stitched arrays -- and hence every downstream
    reduction -- are identical for any worker count."""
    if total < 1:
        raise ValueError(f"ensemble size must be >= 1, got {total}")
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    if workers == 1 or total == 1:
        return kernel(0, total)
    bounds = []
    base, extra = divmod(total, workers)
    lo = 0
    for w in range(workers):
        hi = lo + base + (1 if w < extra else 0)
        if hi > lo:
            bounds.append((lo, hi))
        lo = hi
    with ProcessPoolExecutor(max_workers=len(bounds)) as pool:
        parts = list(pool.map(kernel, *zip(*bounds)))
    return {
        key: np.concatenate([p[key] for p in parts], axis=0) for key in parts[0]
    }


def make_chunk_runner(workers: int) -> ChunkRunner:
    if workers == 1:
        return run_serial

    def runner(total: int, kernel: Callable[[int, int], dict[str, np.ndarray]]):
        return parallel_ensemble(total, workers, kernel)

    return runner


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------


def _fmt_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, Fraction):
        return repr(float(v))
    return str(v)


def _json_cell(v):
    if isinstance(v, float) and not math.isfinite(v):
        return _fmt_cell(v)
    if isinstance(v, Fraction):
        return float(v)
    return v


def _render(config: dict, seed: int, rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        doc = {
            "config": config,
            "seed": seed,
            "version": __version__,
            "rows": [{k: _json_cell(v) for k, v in r.items()} for r in rows],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    lines = [
        f"# config: {json.dumps(config, sort_keys=True)}",
        f"# seed: {seed}",
        f"# version: {__version__}",
    ]
    if rows:
        cols = list(rows[0].keys())
        lines.append(",".join(cols))
        for r in rows:
            lines.append(",".join(_fmt_cell(r[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _checkpoints(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad checkpoint list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("checkpoint list is empty")
    return values


def _family(text: str) -> MapFamily:
    try:
        return MapFamily(text.upper())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"family must be G or F, got {text!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="randdyn", description=__doc__)
    top.add_argument("--seed", type=int, default=None, help="master seed; falls back to $RANDDYN_SEED, then 0")
    top.add_argument("--workers", type=int, default=1, help="worker processes for ensemble commands")
    top.add_argument("--out", default=None, help="output path (default: stdout)")
    top.add_argument("--format", choices=("csv", "json"), default=None, help="csv for curves (default), json for reports")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("orbit", help="single forward orbit")
    p.add_argument("--family", type=_family, required=True)
    p.add_argument("--z0", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)

    p = sub.add_parser("lyapunov", help="finite-time exponents across seeds")
    p.add_argument("--family", type=_family, required=True)
    p.add_argument("--z0", type=float, default=0.0)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seeds", type=int, default=1)

    p = sub.add_parser("survival", help="P(|Z_n| < 1) vs the exact bound k/(k+n)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--z0", type=float, default=None, help="default 2**-(k-1)")
    p.add_argument("--n", type=_checkpoints, default=(10, 100, 1000, 10_000))
    p.add_argument("--samples", type=int, required=True)

    p = sub.add_parser("pullback", help="pullback diameter exceedance curve")
    p.add_argument("--radius", type=float, default=10.0)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--n", type=_checkpoints, default=(10, 100, 1000, 10_000))
    p.add_argument("--samples", type=int, required=True)

    p = sub.add_parser("integrability", help="log-moment divergence diagnostic")
    p.add_argument("--family", type=_family, default=MapFamily.G)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--K0", dest="k0", type=int, default=20)

    p = sub.add_parser("probe-stable", help="stable-set probe fractions")
    p.add_argument("--family", type=_family, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--n", type=_checkpoints, default=(10, 100, 1000, 10_000))
    p.add_argument("--samples", type=int, required=True)

    p = sub.add_parser("probe-unstable", help="unstable-set probe exit fractions")
    p.add_argument("--family", type=_family, required=True)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--n", type=_checkpoints, default=(10, 100, 1000))
    p.add_argument("--samples", type=int, required=True)

    p = sub.add_parser("oracle", help="closed-form reference values")
    osub = p.add_subparsers(dest="oracle_name", required=True)
    q = osub.add_parser("survival-bound")
    q.add_argument("--k", type=int, required=True)
    q.add_argument("--n", type=int, required=True)
    q = osub.add_parser("exact-exponent")
    q.add_argument("--family", type=_family, required=True)
    q = osub.add_parser("truncated-log-moment")
    q.add_argument("--K0", dest="k0", type=int, default=None)
    q = osub.add_parser("tail-probability")
    q.add_argument("--k", type=int, required=True)

    sub.add_parser("selftest", help="run the invariant suite")
    return top


# ---------------------------------------------------------------------------
# command handlers: each returns (config echo, rows, exit code)
# ---------------------------------------------------------------------------


def _cmd_orbit(args, seed, runner):
    orbit = forward_orbit(args.family, _path_for(seed), args.z0, args.steps)
    rows = []
    cum = 0
    for step, state in enumerate(orbit.states):
        if step >= 1 and step - 1 < len(orbit.step_exp2):
            cum += orbit.step_exp2[step - 1]
        rows.append(
            {
                "step": step,
                "state": "escaped" if is_escaped(state) else state,
                "log2_slope_sum": cum,
            }
        )
    config = {
        "command": "orbit",
        "family": args.family.value,
        "z0": args.z0,
        "steps": args.steps,
    }
    return config, rows, 0


def _cmd_lyapunov(args, seed, runner):
    summary = lyapunov_over_seeds(args.family, args.z0, args.steps, args.seeds, seed)
    rows = [
        {"seed_index": j, "value": v} for j, v in enumerate(summary.values)
    ]
    config = {
        "command": "lyapunov",
        "family": args.family.value,
        "z0": args.z0,
        "steps": args.steps,
        "seeds": args.seeds,
    }
    return config, rows, 0


def _cmd_survival(args, seed, runner):
    z0 = args.z0 if args.z0 is not None else math.ldexp(1.0, -(args.k - 1))
    curve = survival_curve(args.k, z0, args.n, args.samples, seed, runner)
    rows = [
        {"n": r.n, "p_hat": r.p_hat, "half_width": r.half_width, "bound": r.bound}
        for r in curve.rows
    ]
    config = {
        "command": "survival",
        "k": args.k,
        "z0": z0,
        "n": list(args.n),
        "samples": args.samples,
    }
    return config, rows, 0


def _cmd_pullback(args, seed, runner):
    curve = pullback_diameter_curve(
        args.radius, args.epsilon, args.n, args.samples, seed, runner
    )
    rows = [
        {
            "n": r.n,
            "p_exceed": r.p_exceed,
            "half_width": r.half_width,
            "median_diameter": r.median_diameter,
        }
        for r in curve.rows
    ]
    config = {
        "command": "pullback",
        "radius": args.radius,
        "epsilon": args.epsilon,
        "n": list(args.n),
        "samples": args.samples,
    }
    return config, rows, 0


def _integrability_chunk(seed: int, start: int, stop: int) -> dict[str, np.ndarray]:
    return {"k": exponents_range(seed, start + 1, stop + 1)}


def _cmd_integrability(args, seed, runner):
    ks = runner(args.samples, partial(_integrability_chunk, seed))["k"]
    report = integrability_diagnostic(args.family, args.samples, args.k0, seed, ks=ks)
    rows = [
        {"kind": "running_mean", "n": c, "value": v} for c, v in report.checkpoints
    ]
    rows += [
        {"kind": "truncated_mean", "n": report.k0, "value": report.truncated_mean},
        {"kind": "truncated_se", "n": report.k0, "value": report.truncated_se},
        {"kind": "truncated_count", "n": report.k0, "value": report.truncated_count},
        {"kind": "analytic_truncated", "n": report.k0, "value": report.analytic_truncated},
    ]
    config = {
        "command": "integrability",
        "family": args.family.value,
        "samples": args.samples,
        "K0": args.k0,
    }
    return config, rows, 0


def _cmd_probe_stable(args, seed, runner):
    curve = stable_probe_fraction(
        args.family, args.y, args.mu, args.beta, args.n, args.samples, seed, runner
    )
    rows = [
        {"n": r.n, "fraction": r.fraction, "half_width": r.half_width}
        for r in curve.rows
    ]
    config = {
        "command": "probe-stable",
        "family": args.family.value,
        "y": args.y,
        "mu": args.mu,
        "beta": args.beta,
        "n": list(args.n),
        "samples": args.samples,
    }
    return config, rows, 0


def _cmd_probe_unstable(args, seed, runner):
    curve = unstable_probe_fraction(
        args.family, args.x0, args.mu, args.beta, args.n, args.samples, seed, runner
    )
    rows = [
        {"n": r.n, "fraction": r.fraction, "half_width": r.half_width}
        for r in curve.rows
    ]
    config = {
        "command": "probe-unstable",
        "family": args.family.value,
        "x0": args.x0,
        "mu": args.mu,
        "beta": args.beta,
        "n": list(args.n),
        "samples": args.samples,
    }
    return config, rows, 0


def _cmd_oracle(args, seed, runner):
    name = args.oracle_name
    config: dict = {"command": "oracle", "name": name}
    if name == "survival-bound":
        value = survival_bound(args.k, args.n)
        config.update(k=args.k, n=args.n)
        rows = [{"name": name, "value": value, "exact": str(value)}]
    elif name == "exact-exponent":
        config.update(family=args.family.value)
        rows = [{"name": name, "value": exact_exponent(args.family), "exact": ""}]
    elif name == "truncated-log-moment":
        config.update(K0=args.k0)
        rows = [{"name": name, "value": truncated_log_moment(args.k0), "exact": ""}]
    else:
        value = tail_probability(args.k)
        config.update(k=args.k)
        rows = [{"name": name, "value": value, "exact": str(value)}]
    return config, rows, 0


def _cmd_selftest(args, seed, runner):
    results = run_selftest()
    rows = [
        {"check": r.name, "ok": r.ok, "detail": r.detail} for r in results
    ]
    code = 0 if all(r.ok for r in results) else 1
    return {"command": "selftest"}, rows, code


_HANDLERS = {
    "orbit": _cmd_orbit,
    "lyapunov": _cmd_lyapunov,
    "survival": _cmd_survival,
    "pullback": _cmd_pullback,
    "integrability": _cmd_integrability,
    "probe-stable": _cmd_probe_stable,
    "probe-unstable": _cmd_probe_unstable,
    "oracle": _cmd_oracle,
    "selftest": _cmd_selftest,
}

_DEFAULT_FORMATS = {
    "orbit": "csv",
    "lyapunov": "json",
    "survival": "csv",
    "pullback": "csv",
    "integrability": "csv",
    "probe-stable": "csv",
    "probe-unstable": "csv",
    "oracle": "json",
    "selftest": "json",
}


def _path_for(seed: int) -> NoisePath:
    return NoisePath(seed)


def _resolve_seed(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(_SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValueError(f"${_SEED_ENV} must be an integer, got {env!r}") from exc
    return 0


def argv_from_config(config: dict, seed: int) -> list[str]:
    """Rebuild a command line from an echoed config (plus the echoed seed);
    running it reproduces the original report byte for byte."""
    cmd = config["command"]
    argv = [cmd, "--seed", str(seed)]
    if cmd == "oracle":
        argv = ["oracle", config["name"], "--seed", str(seed)]
    for key, value in config.items():
        if key in ("command", "name") or value is None:
            continue
        flag = "--" + key
        if key == "n" and isinstance(value, list):
            argv += [flag, ",".join(str(v) for v in value)]
        else:
            argv += [flag, str(value)]
    return argv


def run(argv: list[str] | None = None) -> int:
    """Parse argv, run the subcommand, write the report; returns exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        seed = _resolve_seed(args.seed)
        if args.workers < 1:
            raise ValueError(f"worker count must be >= 1, got {args.workers}")
        runner = make_chunk_runner(args.workers)
        config, rows, code = _HANDLERS[args.command](args, seed, runner)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        sys.stderr.write(json.dumps({"error": "config", "reason": str(exc)}) + "\n")
        return 2
    except EscapedOrbit as exc:
        sys.stderr.write(
            json.dumps({"error": "runtime", "reason": str(exc), "step": exc.step}) + "\n"
        )
        return 1
    fmt = args.format or _DEFAULT_FORMATS[args.command]
    _emit(_render(config, seed, rows, fmt), args.out)
    return code


def main() -> None:
    sys.exit(run())
