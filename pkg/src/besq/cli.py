"""Command-line surface: densities, samplers, hitting solver, conditional CDF,
and the identity verification suite.

One binary with subcommands (density, sample, hitting, cond, verify).  A JSON
config file can pre-populate any long flag; explicit flags win.  Every
command is deterministic given its flags and --seed (default 12345, fixed so
shipped numbers reproduce byte-for-byte).

Exit codes: 0 success; 1 verify found a failing identity; 2 argument or
config errors; 3 hitting-solver diagnostics exceeded thresholds.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .core import BesqParams, besq_transition_density, bessel_transition_density, sample_besq_transitions
from .bessel_time import bessel_time_marginal_samples, correlated_pair_samples, post_hit_samples
from .hitting import (
    mc_hitting_cdf,
    solve_hitting_density_direct,
    solve_hitting_density_kroute,
    solve_hitting_density_laplace,
    conditional_hitting_cdf,
)
from .rng import RngStream
from .suite import SuiteConfig, run_identity_suite

DEFAULT_SEED = 12345

# thresholds behind `hitting` exit code 3
_DIRECT_STABILITY_MIN = 1.0        # h / (2 beta)
_LAPLACE_UNSTABLE_FRACTION = 0.25  # fraction of grid points failing 12-vs-14


class CliError(Exception):
    pass


def _resolve_mu(args) -> float:
    mu = getattr(args, "mu", None)
    delta = getattr(args, "delta", None)
    if mu is None and delta is None:
        raise CliError("one of --mu or --delta is required")
    if mu is not None and delta is not None and delta != 2.0 * (mu + 1.0):
        raise CliError(f"--mu {mu} and --delta {delta} conflict (delta must equal 2*(mu+1))")
    if mu is None:
        mu = delta / 2.0 - 1.0
    if mu < 0:
        raise CliError("index must be nonnegative")
    return float(mu)


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise CliError(f"bad grid spec {spec!r}, expected lo:hi:step") from None
    if step <= 0 or hi <= lo:
        raise CliError(f"bad grid spec {spec!r}: need hi > lo and step > 0")
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n)


def _emit(args, header, rows) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if args.format == "json":
        payload = {"columns": header.split(","), "rows": [[float(v) for v in r] for r in rows]}
        text = json.dumps(payload, indent=2) + "\n"
    else:
        lines = [header]
        lines += [",".join("%.17g" % v for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _density_with_zero_limit(x: float, y: float, t: float, p: BesqParams) -> float:
    if y > 0:
        return besq_transition_density(x, y, t, p)
    if p.mu > 0:
        return 0.0
    return math.exp(-x / (2.0 * t)) / (2.0 * t)  # mu = 0 limit at y -> 0+


def cmd_density(args) -> int:
    mu = _resolve_mu(args)
    p = BesqParams(mu=mu)
    grid = _parse_grid(args.grid)
    if args.radius:
        if args.x0 <= 0:
            raise CliError("radius density needs x0 > 0")
        rows = [(x, bessel_transition_density(math.sqrt(args.x0), x, args.t, p))
                for x in grid if x > 0]
        _emit(args, "x,p", rows)
    else:
        rows = [(y, _density_with_zero_limit(args.x0, y, args.t, p)) for y in grid]
        _emit(args, "y,q", rows)
    return 0


def cmd_sample(args) -> int:
    mu = _resolve_mu(args)
    p = BesqParams(mu=mu)
    rng = RngStream(args.seed, 0)
    n = args.n
    if args.kind == "besq":
        gen = rng.generator()
        vals = sample_besq_transitions(args.x0, args.t, p, gen, size=n)
        _emit(args, "draw_index,value", np.column_stack([np.arange(n), vals]))
    elif args.kind == "xta":
        if args.x0 != 1.0:
            raise CliError("X(t,a) sampling requires x0 = 1")
        _, x = bessel_time_marginal_samples(args.t, args.a, p, n, rng)
        _emit(args, "draw_index,value", np.column_stack([np.arange(n), x]))
    elif args.kind == "pair":
        if args.x0 != 1.0:
            raise CliError("pair sampling requires x0 = 1")
        check_r, u = correlated_pair_samples(args.t, args.a, p, n, rng)
        _emit(args, "draw_index,check_r,u", np.column_stack([np.arange(n), check_r, u]))
    elif args.kind == "posthit":
        if args.x0 != 1.0:
            raise CliError("post-hit sampling requires x0 = 1")
        tau, vals = post_hit_samples(args.y, args.eps, p, args.step, n, rng)
        _emit(args, "draw_index,tau,value", np.column_stack([np.arange(n), tau, vals]))
    return 0


def cmd_hitting(args) -> int:
    mu = _resolve_mu(args)
    if args.method == "direct":
        sol = solve_hitting_density_direct(args.y, mu, args.t_max, args.n_steps, args.anchor)
    else:
        grid = np.geomspace(max(args.t_max / args.n_steps, 1e-3), args.t_max, min(args.n_steps, 120))
        if args.method == "laplace":
            sol = solve_hitting_density_laplace(args.y, mu, grid, args.anchor)
        else:
            sol = solve_hitting_density_kroute(args.y, mu, grid, args.anchor)
    out = args.out or f"hitting_y{args.y}_mu{mu}.csv"
    sol.to_csv(out)
    sidecar = out.rsplit(".", 1)[0] + ".json"
    sol.to_json_sidecar(sidecar)
    print(f"wrote {out} and {sidecar} (mass {sol.mass:.6f})")

    if args.check:
        rng = RngStream(args.seed, 1)
        mc = mc_hitting_cdf(args.y, mu, args.t_max, args.check_step, args.check_n, rng)
        tg = np.linspace(args.t_max / 400.0, args.t_max, 400)
        sup = float(np.max(np.abs(mc.cdf(tg) - sol.cdf(tg))))
        print(f"MC cross-check: sup CDF distance {sup:.5f} "
              f"(n={args.check_n}, step={args.check_step}, censored {mc.censored_mass:.5f})")

    bad = False
    diag = sol.diagnostics
    if diag.get("ill_conditioned"):
        bad = True
    if "stability_ratio" in diag and diag["stability_ratio"] < _DIRECT_STABILITY_MIN:
        bad = True
    if "unstable_points" in diag and len(diag["unstable_points"]) > _LAPLACE_UNSTABLE_FRACTION * len(sol.t_grid):
        bad = True
    if bad:
        print("solver diagnostics exceed thresholds (see sidecar)", file=sys.stderr)
        return 3
    return 0


def cmd_cond(args) -> int:
    mu = _resolve_mu(args)
    if args.t is not None and args.t > args.T:
        raise CliError("--t must not exceed --T")
    t_values = _parse_grid(args.grid) if args.grid else np.array([args.t])
    t_values = t_values[(t_values > 0) & (t_values <= args.T)]
    if t_values.size == 0:
        raise CliError("no conditional evaluation times inside (0, T]")
    t_max = max(args.t_max, float(t_values[-1]))
    sol = solve_hitting_density_direct(args.y, mu, t_max, args.n_steps, args.anchor)
    rows = [(t, conditional_hitting_cdf(args.y, float(t), args.T, args.x, sol, mu))
            for t in t_values]
    _emit(args, "t,p", rows)
    return 0


def cmd_verify(args) -> int:
    cfg = SuiteConfig(
        n=args.n,
        grid_step=args.grid_step,
        workers=args.workers,
        corrupt_identity=args.corrupt,
    )
    report = run_identity_suite(cfg, args.seed, only=args.only or None)
    print(report.table())
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(report.to_json())
        print(f"wrote {args.out}")
    return 0 if report.all_passed else 1


def _add_common(sp, mu_group=True):
    if mu_group:
        sp.add_argument("--mu", type=float, default=None, help="index (>= 0)")
        sp.add_argument("--delta", type=float, default=None, help="dimension 2*(mu+1); alternative to --mu")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"master seed (default {DEFAULT_SEED})")
    sp.add_argument("--out", type=str, default=None, help="output path (default stdout)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--workers", type=int, default=1, help="worker cap; never changes results")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="besq",
        description="Squared Bessel processes with stochastic time: densities, exact "
                    "samplers, first-hitting-time solver, and identity verification.",
    )
    ap.add_argument("--config", type=str, default=None,
                    help="JSON file of default flag values; explicit flags win")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("density", help="transition density table over a grid")
    _add_common(d)
    d.add_argument("--t", type=float, required=True, help="elapsed time (> 0)")
    d.add_argument("--x0", type=float, default=1.0, help="starting point")
    d.add_argument("--grid", type=str, required=True, help="evaluation grid lo:hi:step")
    d.add_argument("--radius", action="store_true",
                   help="emit the radius-process density p_t instead of q_t")
    d.set_defaults(fn=cmd_density)

    s = sub.add_parser("sample", help="exact draws of R(t), X(t,a), pairs, or post-hit values")
    s.add_argument("kind", choices=("besq", "xta", "pair", "posthit"))
    _add_common(s)
    s.add_argument("-n", type=int, default=10, help="number of draws")
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--a", type=float, default=0.0)
    s.add_argument("--x0", type=float, default=1.0)
    s.add_argument("--y", type=float, default=2.0, help="level for posthit")
    s.add_argument("--eps", type=float, default=0.1, help="post-hit lag factor")
    s.add_argument("--step", type=float, default=1e-3, help="hitting detection step")
    s.set_defaults(fn=cmd_sample)

    h = sub.add_parser("hitting", help="solve for the first-hitting-time density g_y")
    _add_common(h)
    h.add_argument("--y", type=float, required=True, help="level (> 0)")
    h.add_argument("--t-max", dest="t_max", type=float, default=5.0)
    h.add_argument("--n-steps", dest="n_steps", type=int, default=512)
    h.add_argument("--anchor", type=float, default=None,
                   help="anchor point x > y of the integral equation (default 1.1*y)")
    h.add_argument("--method", choices=("direct", "laplace", "laplace-k"), default="direct")
    h.add_argument("--check", action="store_true", help="run the Monte Carlo cross-check")
    h.add_argument("--check-n", dest="check_n", type=int, default=100_000)
    h.add_argument("--check-step", dest="check_step", type=float, default=1e-3)
    h.set_defaults(fn=cmd_hitting)

    c = sub.add_parser("cond", help="conditional CDF P(tau_y <= t | R(T) = x)")
    _add_common(c)
    c.add_argument("--y", type=float, required=True)
    c.add_argument("--T", type=float, required=True)
    c.add_argument("--t", type=float, default=None, help="single evaluation time")
    c.add_argument("--grid", type=str, default=None, help="evaluation grid lo:hi:step over t")
    c.add_argument("--x", type=float, required=True, help="conditioning value of R(T)")
    c.add_argument("--t-max", dest="t_max", type=float, default=5.0)
    c.add_argument("--n-steps", dest="n_steps", type=int, default=512)
    c.add_argument("--anchor", type=float, default=None)
    c.set_defaults(fn=cmd_cond)

    v = sub.add_parser("verify", help="run the distributional-identity suite")
    _add_common(v, mu_group=False)
    v.add_argument("--only", action="append", default=None, help="run only this identity id (repeatable)")
    v.add_argument("--n", type=int, default=100_000, help="draws per statistical test")
    v.add_argument("--grid-step", dest="grid_step", type=float, default=1e-3)
    v.add_argument("--corrupt", type=str, default=None,
                   help="test-mode hook: corrupt this identity's sampler")
    v.set_defaults(fn=cmd_verify)
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv):
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    try:
        path = argv[i + 1]
    except IndexError:
        raise CliError("--config needs a path") from None
    with open(path) as fh:
        defaults = json.load(fh)
    if not isinstance(defaults, dict):
        raise CliError("config file must hold a JSON object of flag defaults")
    out = list(argv)
    for key, val in defaults.items():
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flags win
        if isinstance(val, bool):
            if val:
                out.append(flag)
        else:
            out += [flag, str(val)]
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        argv = _apply_config_file(ap, argv)
        args = ap.parse_args(argv)
        if args.command == "cond" and args.t is None and args.grid is None:
            raise CliError("cond needs --t or --grid")
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
