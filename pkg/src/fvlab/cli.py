"""Unified command line front end.

Subcommands: rates, simulate, branching, bad-set, foster-check, scaling, qsd.
Every run echoes a JSON manifest (subcommand, parameters, seed, version,
timings) to stdout, writes CSV tables (and optional PNG figures) atomically
under --out, and exits 0 on success, 1 when a checked bound is violated, 2 on
usage errors.  Seeds are explicit: there is no wall-clock default.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .params import (Configuration, RngStream, Schedule, WalkParams, all_at,
                     make_schedule, read_config, schedule_from_big_a, validate_params)

EXIT_OK = 0
EXIT_BOUND_VIOLATED = 1
EXIT_USAGE = 2


# Output helpers ---------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> str:
    """Atomic CSV write: fixed column order, one header row, repr floats."""
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) for c in row) + "\n")
    os.replace(tmp, path)
    return str(path)


def write_json(path: Path, obj) -> str:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return str(path)


def _schedule_dict(schedule: Schedule) -> dict:
    return {
        "n_walks": schedule.n_walks,
        "big_a": schedule.big_a,
        "t_horizon": schedule.t_horizon,
        "l_threshold": schedule.l_threshold,
        "kappa": schedule.kappa,
        "delta0": schedule.delta0,
    }


def _manifest(args: argparse.Namespace, wall_time: float, outputs: list[str]) -> dict:
    parameters = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and not k.startswith("_")
    }
    return {
        "subcommand": args.subcommand,
        "parameters": parameters,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time_s": wall_time,
        "outputs": outputs,
    }


def _margin(args) -> float:
    m = getattr(args, "margin", None)
    return 0.01 if m is None else m


def _resolve_schedule(args, params: WalkParams, n_walks: int) -> Schedule:
    if getattr(args, "big_a", None) is not None:
        return schedule_from_big_a(params, n_walks, args.big_a)
    return make_schedule(params, n_walks, _margin(args))


def _parse_grid(text: str, cast=float) -> list:
    out = [cast(tok) for tok in text.split(",") if tok.strip()]
    if not out:
        raise ValueError(f"empty grid: {text!r}")
    return out


def _parse_start_token(token: str, l_threshold: float) -> int:
    token = token.strip()
    if token.lower().endswith("l"):
        mult = token[:-1]
        return math.ceil((float(mult) if mult else 1.0) * l_threshold)
    return int(token)


def _parse_init(text: str, n_walks: int, l_threshold: float) -> Configuration:
    if text.startswith("all-at:"):
        return all_at(n_walks, _parse_start_token(text.split(":", 1)[1], l_threshold))
    values = [int(tok) for tok in Path(text).read_text().split()]
    return Configuration(np.array(values, dtype=np.int64))


# Subcommand handlers -----------------------------------------------------------

def cmd_rates(args, out: Path, outputs: list[str]) -> int:
    from .rates import rate_i, rate_i_tilde

    params = validate_params(args.p)
    grid = np.linspace(args.x_min, args.x_max, args.steps)
    rows = []
    for x in grid:
        ri = rate_i(params, float(x))
        rt = rate_i_tilde(params, float(x))
        rows.append((float(x), ri.value, rt.value, ri.maximizer))
    outputs.append(write_csv(out / "rates.csv", ["x", "i", "i_tilde", "lambda_star"], rows))
    if args.plot:
        from . import plots
        outputs.append(plots.plot_rates(rows, out / "rates.png"))
    return EXIT_OK


def cmd_simulate(args, out: Path, outputs: list[str]) -> int:
    from .simulator import simulate

    params = validate_params(args.p)
    if args.horizon is not None:
        horizon = args.horizon
        schedule = None
    else:
        schedule = _resolve_schedule(args, params, args.n_walks)
        horizon = schedule.t_horizon
    config0 = all_at(args.n_walks, 1)
    rows = []
    per_replica = []
    for rep in range(args.replicas):
        _, stats, log = simulate(config0, params, horizon, RngStream(args.seed, rep))
        for t, m in zip(stats.max_times, stats.max_values):
            rows.append((rep, float(t), int(m)))
        per_replica.append({
            "replica": rep,
            "events": int(stats.jump_counts.sum()),
            "digest": f"{log.digest:016x}",
            "wall_time_s": stats.wall_time,
        })
    outputs.append(write_csv(out / "simulate_max_path.csv",
                             ["replica", "time", "max_position"], rows))
    summary = {
        "horizon": horizon,
        "replicas": per_replica,
        "total_events": sum(r["events"] for r in per_replica),
        "schedule": _schedule_dict(schedule) if schedule else None,
    }
    outputs.append(write_json(out / "simulate_summary.json", summary))
    if args.plot:
        from . import plots
        outputs.append(plots.plot_max_paths(rows, out / "simulate_max_path.png"))
    return EXIT_OK


def cmd_branching(args, out: Path, outputs: list[str]) -> int:
    from .branching import check_tail_lemma

    params = validate_params(args.p)
    if args.horizon is not None:
        horizon, schedule = args.horizon, None
    else:
        schedule = _resolve_schedule(args, params, args.n_types)
        horizon = schedule.t_horizon
    chi_grid = _parse_grid(args.chi_grid)
    report = check_tail_lemma(args.n_types, params, schedule, chi_grid,
                              args.replicas, RngStream(args.seed), horizon=horizon)
    rows = [(r.chi, r.frequency, r.ci_low, r.ci_high, r.bound) for r in report.rows]
    outputs.append(write_csv(out / "branching_tail.csv",
                             ["chi", "empirical_tail", "ci_low", "ci_high", "paper_bound"],
                             rows))
    summary = {
        "horizon": horizon,
        "n_types": args.n_types,
        "replicas": args.replicas,
        "rows": [vars(r) for r in report.rows],
        "schedule": _schedule_dict(schedule) if schedule else None,
        "all_passed": report.all_passed,
    }
    outputs.append(write_json(out / "branching_summary.json", summary))
    if args.plot:
        from . import plots
        outputs.append(plots.plot_tail(report.rows, out / "branching_tail.png"))
    return EXIT_OK if report.all_passed else EXIT_BOUND_VIOLATED


def cmd_bad_set(args, out: Path, outputs: list[str]) -> int:
    from .coloring import estimate_bad_probability

    params = validate_params(args.p)
    schedule = _resolve_schedule(args, params, args.n_walks)
    initial = _parse_init(args.init, args.n_walks, schedule.l_threshold)
    if initial.n != args.n_walks:
        raise ValueError(f"--init supplies {initial.n} positions for {args.n_walks} walks")
    estimate = estimate_bad_probability(initial, params, schedule,
                                        args.replicas, RngStream(args.seed))
    rows = [(r.event, r.frequency, r.ci_low, r.ci_high, r.bound) for r in estimate.rows]
    outputs.append(write_csv(out / "bad_set.csv",
                             ["event", "frequency", "ci_low", "ci_high", "bound"], rows))
    summary = {
        "kappa_t": estimate.kappa_t,
        "rows": [vars(r) for r in estimate.rows],
        "schedule": _schedule_dict(schedule),
        "union_vacuous": estimate.union.vacuous,
        "union_passed": estimate.union_passed,
    }
    outputs.append(write_json(out / "bad_set_summary.json", summary))
    if args.plot:
        from . import plots
        outputs.append(plots.plot_bad_set(estimate.rows, out / "bad_set.png"))
    failed = any(not r.vacuous and r.ci_high > r.bound for r in estimate.rows)
    return EXIT_BOUND_VIOLATED if failed else EXIT_OK


def cmd_foster_check(args, out: Path, outputs: list[str]) -> int:
    from .analysis import check_foster_drift

    params = validate_params(args.p)
    schedule = _resolve_schedule(args, params, args.n_walks)
    delta = args.delta if args.delta is not None else schedule.delta0 / 2.0
    starts = [_parse_start_token(tok, schedule.l_threshold)
              for tok in args.start_grid.split(",") if tok.strip()]
    report = check_foster_drift(params, schedule, delta, starts,
                                args.replicas, RngStream(args.seed))
    rows = [(r.m0, r.region, r.estimate.mean, r.estimate.se, r.estimate.lo,
             r.estimate.hi, r.estimate.n, r.k_bound,
             r.increment_moment.mean, r.increment_moment.hi, report.increment_bound,
             r.asserted, r.passed)
            for r in report.rows]
    outputs.append(write_csv(out / "foster_drift.csv",
                             ["m0", "region", "estimate", "se", "ci_low", "ci_high",
                              "replicas", "k_bound", "inc_moment", "inc_moment_hi",
                              "inc_bound", "asserted", "passed"], rows))
    summary = {
        "delta": delta,
        "schedule": _schedule_dict(schedule),
        "all_passed": report.all_passed,
        "increment_bound": report.increment_bound,
        "increment_bound_holds": report.increment_bound_holds,
    }
    outputs.append(write_json(out / "foster_summary.json", summary))
    if args.plot:
        from . import plots
        outputs.append(plots.plot_drift(report.rows, out / "foster_drift.png"))
    return EXIT_OK if report.all_passed else EXIT_BOUND_VIOLATED


def cmd_scaling(args, out: Path, outputs: list[str]) -> int:
    from .analysis import QUANTILES, stationary_scaling

    params = validate_params(args.p)
    n_grid = _parse_grid(args.n_grid, int)
    report = stationary_scaling(params, n_grid, args.delta, args.samples,
                                RngStream(args.seed), margin=_margin(args),
                                burn_in_multiplier=args.burn_in)
    header = (["n_walks", "t_horizon", "samples"] + [f"q{int(100 * q)}" for q in QUANTILES]
              + ["exp_moment", "exp_moment_se", "log_moment"])
    rows = []
    for r in report.rows:
        rows.append((r.n_walks, r.schedule.t_horizon, r.sample.n_samples,
                     *[r.quantiles[q] for q in QUANTILES],
                     r.exp_moment.mean, r.exp_moment.se, r.log_moment))
    outputs.append(write_csv(out / "scaling.csv", header, rows))
    summary = {
        "delta": report.delta,
        "slope": report.slope,
        "intercept": report.intercept,
        "r_squared": report.r_squared,
        "moment_slope": report.moment_slope,
        "growth_cap": report.growth_cap,
        "passed": report.passed,
        "schedules": {str(r.n_walks): _schedule_dict(r.schedule) for r in report.rows},
    }
    outputs.append(write_json(out / "scaling_summary.json", summary))
    if args.plot:
        from . import plots
        outputs.append(plots.plot_scaling(report.rows, report.slope, report.intercept,
                                          out / "scaling.png"))
    return EXIT_OK if report.passed else EXIT_BOUND_VIOLATED


def cmd_qsd(args, out: Path, outputs: list[str]) -> int:
    from .analysis import compute_qsd_oracle, qsd_tv_over_grid

    params = validate_params(args.p)
    oracle = compute_qsd_oracle(params, args.truncation, args.tol)
    mass_rows = [(k + 1, float(v)) for k, v in enumerate(oracle.distribution)]
    outputs.append(write_csv(out / "qsd_mass.csv", ["state", "mass"], mass_rows))
    tv_rows: list[tuple[int, float]] = []
    if args.n_grid:
        if args.seed is None:
            raise ValueError("--seed is required when --n-grid is given")
        tv_rows = qsd_tv_over_grid(params, _parse_grid(args.n_grid, int), oracle,
                                   args.samples, RngStream(args.seed),
                                   margin=_margin(args), burn_in_multiplier=args.burn_in)
        outputs.append(write_csv(out / "qsd_tv.csv", ["n_walks", "tv_distance"], tv_rows))
    summary = {
        "truncation": oracle.truncation,
        "decay_rate": oracle.decay_rate,
        "eigenvalue": oracle.eigenvalue,
        "residual": oracle.residual,
        "iterations": oracle.iterations,
        "ladder": [[m, c if math.isfinite(c) else None] for m, c in oracle.ladder],
        "flux_balance": abs(oracle.decay_rate - params.q * float(oracle.distribution[0])),
        "mean": oracle.mean(),
        "mode": oracle.mode(),
        "tv_by_n": [[n, tv] for n, tv in tv_rows],
        "tv_nonincreasing": all(b[1] <= a[1] for a, b in zip(tv_rows, tv_rows[1:]))
        if len(tv_rows) >= 2 else None,
    }
    outputs.append(write_json(out / "qsd_summary.json", summary))
    if args.plot:
        from . import plots
        outputs.append(plots.plot_qsd(mass_rows, tv_rows, out / "qsd.png"))
    return EXIT_OK


# Parser ------------------------------------------------------------------------

def _common(sub, seed_required=True):
    sub.add_argument("--out", default="./results", help="output directory (default ./results)")
    sub.add_argument("--no-plot", dest="plot", action="store_false",
                     help="skip the PNG figures rendered next to the CSVs")
    sub.add_argument("--config", default=None, help="flat key=value parameter file")
    sub.add_argument("--seed", type=int, default=None,
                     help="base seed (required)" if seed_required else "base seed")
    sub.set_defaults(_seed_required=seed_required)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fvlab",
        description="Interacting drifted walks with selection at the origin: "
                    "simulation and bound checks.")
    parser.add_argument("--version", action="version", version=f"fvlab {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    s = subs.add_parser("rates", help="rate-function table over a speed grid")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--x-min", type=float, default=0.0)
    s.add_argument("--x-max", type=float, default=1.5)
    s.add_argument("--steps", type=int, default=64)
    _common(s, seed_required=False)
    s.set_defaults(func=cmd_rates)

    s = subs.add_parser("simulate", help="raw trajectories of the interacting walks")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--n-walks", type=int, default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--big-a", type=float, default=None)
    s.add_argument("--margin", type=float, default=None)
    s.add_argument("--replicas", type=int, default=1)
    _common(s)
    s.set_defaults(func=cmd_simulate)

    s = subs.add_parser("branching", help="branching tail-bound check")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--n-types", type=int, default=5)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--big-a", type=float, default=None)
    s.add_argument("--margin", type=float, default=None)
    s.add_argument("--replicas", type=int, default=10000)
    s.add_argument("--chi-grid", default="1,2,3")
    _common(s)
    s.set_defaults(func=cmd_branching)

    s = subs.add_parser("bad-set", help="bad-set probability against 4 exp(-kappa T)")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--n-walks", type=int, default=None)
    s.add_argument("--big-a", type=float, default=None)
    s.add_argument("--margin", type=float, default=None)
    s.add_argument("--replicas", type=int, default=10000)
    s.add_argument("--init", default="all-at:1",
                   help="'all-at:K' or a file of positions (default all-at:1)")
    _common(s)
    s.set_defaults(func=cmd_bad_set)

    s = subs.add_parser("foster-check", help="drift of exp(delta max) over one horizon")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--n-walks", type=int, default=None)
    s.add_argument("--big-a", type=float, default=None)
    s.add_argument("--margin", type=float, default=None)
    s.add_argument("--delta", type=float, default=None, help="tilt (default delta0/2)")
    s.add_argument("--start-grid", default="1,L,3L,6L,10L",
                   help="comma list; suffix L scales the length threshold")
    s.add_argument("--replicas", type=int, default=10000)
    _common(s)
    s.set_defaults(func=cmd_foster_check)

    s = subs.add_parser("scaling", help="stationary rightmost-walk scaling in N")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--n-grid", default="10,50,200")
    s.add_argument("--delta", type=float, default=5e-4)
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--burn-in", type=float, default=20.0)
    s.add_argument("--margin", type=float, default=None)
    _common(s)
    s.set_defaults(func=cmd_scaling)

    s = subs.add_parser("qsd", help="truncated conditioned-evolution oracle")
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--truncation", type=int, default=64)
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--n-grid", default=None,
                   help="optional N grid for TV(empirical, oracle)")
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--burn-in", type=float, default=20.0)
    s.add_argument("--margin", type=float, default=None)
    _common(s, seed_required=False)
    s.set_defaults(func=cmd_qsd)

    return parser


def _apply_config(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    cfg = read_config(args.config)
    for key in ("p", "n_walks", "big_a", "margin", "seed"):
        if key in cfg and getattr(args, key, "absent") is None:
            setattr(args, key, cfg[key])
    if "n_walks" in cfg and getattr(args, "n_types", "absent") is None:
        args.n_types = int(cfg["n_walks"])


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    started = time.perf_counter()
    outputs: list[str] = []
    try:
        _apply_config(args)
        if args.p is None:
            raise ValueError("--p is required (flag or config file)")
        if getattr(args, "_seed_required", False) and args.seed is None:
            raise ValueError("--seed is required (flag or config file)")
        if getattr(args, "n_walks", "absent") is None:
            raise ValueError("--n-walks is required (flag or config file)")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = args.func(args, out, outputs)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUND_VIOLATED
    manifest = _manifest(args, time.perf_counter() - started, outputs)
    print(json.dumps(manifest, sort_keys=True))
    return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
