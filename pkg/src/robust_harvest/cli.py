"""``robust-harvest`` command line.

Exit status: 0 on success, 1 for invalid input or a refused time step, 2 when a
discrete invariant fails during a solve.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numba

from . import __version__
from .calibration import CalibrationGrid, Restriction, empirical_stats, fit_logistic, grid_search
from .config import RunConfig, parse_config, parse_variants, problem_overrides
from .csvio import (
    RunManifest,
    load_competition_sample,
    load_weight_series,
    write_array_csv,
    write_density_csv,
    write_grid_csv,
    write_rows_csv,
    write_trajectory_csv,
)
from .errors import FitError, InvariantViolation, ValidationError
from .hjb import SCHEMES, cfl_margin, compare_schemes, scheme_name, semi_implicit_margin, solve
from .policy import (
    DEFAULT_TERMINALS,
    backtrack_trajectory,
    distortion_along,
    low_harvest_plateaus,
    sensitivity_suite,
)

log = logging.getLogger("robust_harvest")

DEFAULT_DENSITY_TIMES = (0.0, 30.0, 60.0, 90.0, 119.0)


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    out = args.out or (cfg.get("out_dir") if cfg is not None else None)
    if not out:
        raise ValidationError("no output directory: pass --out or set out_dir in [output]")
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create {path}: {exc}") from None
    return path


def _set_workers(n: int) -> None:
    if n < 1:
        raise ValidationError("--workers must be at least 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _terminal_tag(x: float) -> str:
    return ("%g" % x).replace("-", "m")


def _solve_checked(problem, grid, scheme, force):
    value, policy = solve(problem, grid, scheme, force=force)
    summary = {
        "checked": True,
        "violations": 0,
        "monotone_in_n_checked": value.monotone_checked,
        "value_bound": problem.value_bound(value.scheme),
        "max_value": float(value.values.max()),
        "q_bound": problem.q_max,
        "max_q": float(policy.q.max()),
        "cfl_margin": cfl_margin(problem, grid),
        "semi_implicit_margin": semi_implicit_margin(problem, grid),
    }
    return value, policy, summary


# -- subcommands ---------------------------------------------------------------


def cmd_fit_logistic(args) -> int:
    series = load_weight_series(args.input)
    fit, sse = fit_logistic(series, return_residual=True)
    print(f"w0={fit.w0:.6g} w_max={fit.w_max:.6g} r={fit.r:.6g} sse={sse:.6g}")
    if args.out:
        out = _out_dir(args)
        started = time.perf_counter()
        manifest = RunManifest("fit-logistic", __version__)
        manifest.add_input(args.input)
        path = write_rows_csv(out / "logistic_fit.csv", ("w0", "w_max", "r", "sse"),
                              [(fit.w0, fit.w_max, fit.r, sse)])
        manifest.add_output(path)
        manifest.wall_clock_s = time.perf_counter() - started
        manifest.write(out)
    return 0


def cmd_calibrate(args) -> int:
    if bool(args.restrict) == bool(args.full):
        raise ValidationError("pass exactly one of --restrict RANGES or --full")
    if args.workers < 1:
        raise ValidationError("--workers must be at least 1")
    sample = load_competition_sample(args.competition, args.day)
    if args.restrict:
        rest = Restriction.parse(args.restrict)
        grid = CalibrationGrid.spanning(rest)
    else:
        rest, grid = None, CalibrationGrid()
    started = time.perf_counter()
    res = grid_search(args.w0, sample, grid=grid, restriction=rest, workers=args.workers)
    r, w_lo, w_hi, a, b = grid.decode(*res.indices)
    f, tgt = res.fitted_stats, empirical_stats(sample)
    header = ("w0", "w_lo", "w_hi", "a", "b", "r", "er", "mean", "std", "skew",
              "target_mean", "target_std", "target_skew", "i", "j", "k", "l", "m")
    row = (float(args.w0), w_lo, w_hi, a, b, r, res.er, f.mean, f.std, f.skew,
           tgt.mean, tgt.std, tgt.skew, *res.indices)
    print(f"W0={args.w0:g} W_lo={w_lo:g} W_hi={w_hi:g} a={a:.2f} b={b:.2f} r={r:.3f} "
          f"Er={res.er:.3g} mean={f.mean:.1f} std={f.std:.1f} skew={f.skew:.2f} "
          f"(target mean={tgt.mean:.1f} std={tgt.std:.1f} skew={tgt.skew:.2f})")
    if args.out:
        out = _out_dir(args)
        manifest = RunManifest("calibrate", __version__, parameters={
            "day": float(args.day), "w0": float(args.w0),
            "restrict": rest.format() if rest else None, "full": bool(args.full),
            "candidates": res.candidates, "skipped": res.skipped,
        })
        manifest.add_input(args.competition)
        manifest.add_output(write_rows_csv(out / "calibration.csv", header, [row]))
        manifest.wall_clock_s = time.perf_counter() - started
        manifest.write(out)
    return 0


def cmd_solve(args) -> int:
    cfg = parse_config(args.config)
    _set_workers(args.workers)
    out = _out_dir(args, cfg)
    started = time.perf_counter()
    scheme = scheme_name(args.scheme)
    problem, grid = cfg.problem, cfg.grid
    value, policy, summary = _solve_checked(problem, grid, scheme, args.force)
    manifest = RunManifest("solve", __version__, config=cfg.echo(), scheme=scheme,
                           invariants=summary, parameters={"t_stride": args.t_stride})
    manifest.add_input(args.config)
    manifest.add_output(write_grid_csv(value, out / "value.csv", args.t_stride))
    manifest.add_output(write_grid_csv(policy, out / "policy.csv", args.t_stride))
    manifest.wall_clock_s = time.perf_counter() - started
    manifest.write(out)
    print(f"{scheme}: max value {summary['max_value']:.6g}, max q {summary['max_q']:.6g}; wrote {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = parse_config(args.config)
    _set_workers(args.workers)
    out = _out_dir(args, cfg)
    started = time.perf_counter()
    problem, grid = cfg.problem, cfg.grid
    values, checks = {}, {}
    for name in SCHEMES:
        values[name], _, checks[name] = _solve_checked(problem, grid, name, args.force)
    diffs = compare_schemes(problem, grid, values=values)
    manifest = RunManifest("compare-schemes", __version__, config=cfg.echo(), scheme=",".join(SCHEMES),
                           invariants=checks, parameters={"t_stride": args.t_stride})
    manifest.add_input(args.config)
    rows = []
    for label, d in diffs.items():
        print(f"{label}: max |diff| = {d.max_abs:.6g}, signed mean = {d.signed_mean:.6g}")
        rows.append((label, d.max_abs, d.signed_mean))
        manifest.add_output(write_array_csv(values["explicit"].times, values["explicit"].ns, d.diff,
                                            out / f"diff_{label}.csv", t_stride=args.t_stride))
    manifest.add_output(write_rows_csv(out / "differences.csv", ("pair", "max_abs", "signed_mean"), rows))
    manifest.wall_clock_s = time.perf_counter() - started
    manifest.write(out)
    return 0


def _fan(value, terminals, out, manifest, density_times):
    problem = value.problem
    for tn in terminals:
        traj = backtrack_trajectory(value, tn)
        tag = _terminal_tag(tn)
        manifest.add_output(write_trajectory_csv(traj, out / f"trajectory_{tag}.csv"))
        dens = distortion_along(traj, density_times, problem)
        manifest.add_output(write_density_csv(dens, density_times, out / f"density_{tag}.csv"))
        plateaus = low_harvest_plateaus(traj)
        note = " (left domain)" if traj.left_domain else ""
        spans = ", ".join(f"t={traj.t[a]:.1f}..{traj.t[b - 1]:.1f}" for a, b in plateaus) or "none"
        print(f"terminal {tn:g}: start n={traj.n[0]:.4f}{note}; low-harvest plateaus: {spans}")


def cmd_trajectory(args) -> int:
    cfg = parse_config(args.config)
    _set_workers(args.workers)
    out = _out_dir(args, cfg)
    started = time.perf_counter()
    scheme = scheme_name(args.scheme)
    value, _, summary = _solve_checked(cfg.problem, cfg.grid, scheme, args.force)
    manifest = RunManifest("trajectory", __version__, config=cfg.echo(), scheme=scheme, invariants=summary,
                           parameters={"terminals": list(args.terminal), "density_times": list(args.density_times)})
    manifest.add_input(args.config)
    _fan(value, args.terminal, out, manifest, args.density_times)
    manifest.wall_clock_s = time.perf_counter() - started
    manifest.write(out)
    return 0


def cmd_sensitivity(args) -> int:
    cfg = parse_config(args.config)
    variants = parse_variants(args.variants)
    _set_workers(args.workers)
    out = _out_dir(args, cfg)
    started = time.perf_counter()
    scheme = scheme_name(args.scheme)
    overrides = [(label, problem_overrides(cfg, ov)) for label, ov in variants]
    reports = sensitivity_suite(cfg.problem, overrides, cfg.grid, scheme=scheme, terminals=args.terminal)
    manifest = RunManifest("sensitivity", __version__, config=cfg.echo(), scheme=scheme,
                           parameters={"variants": {label: ov for label, ov in variants},
                                       "terminals": list(args.terminal)})
    manifest.add_input(args.config)
    manifest.add_input(args.variants)
    rows = []
    for k, rep in enumerate(reports):
        tag = f"v{k}"
        for tn, traj in rep.trajectories.items():
            manifest.add_output(write_trajectory_csv(traj, out / f"{tag}_trajectory_{_terminal_tag(tn)}.csv"))
        manifest.add_output(write_trajectory_csv(rep.forward, out / f"{tag}_forward.csv"))
        rows.append((tag, rep.label, rep.max_abs_value_delta, rep.signed_mean_value_delta,
                     int(rep.value_below_nominal), float(rep.forward.n[0]), float(rep.forward.n[-1])))
        print(f"{rep.label}: max |dPhi| = {rep.max_abs_value_delta:.6g}, mean dPhi = "
              f"{rep.signed_mean_value_delta:.6g}, forward end n = {rep.forward.n[-1]:.4f}")
    manifest.add_output(write_rows_csv(
        out / "sensitivity.csv",
        ("tag", "label", "max_abs_delta", "signed_mean_delta", "below_nominal", "start_n", "end_n"), rows))
    manifest.wall_clock_s = time.perf_counter() - started
    manifest.write(out)
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-harvest",
                                description="Calibrate growth models, solve the robust harvesting HJB equation and trace policies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fit-logistic", help="least-squares logistic fit to an averaged weight series")
    s.add_argument("--input", required=True, help="CSV with header day,avg_weight_g")
    s.add_argument("--out", help="optional output directory")
    s.set_defaults(func=cmd_fit_logistic)

    s = sub.add_parser("calibrate", help="moment-matching grid search for the uncertain model")
    s.add_argument("--competition", required=True, help="CSV with header weight_g")
    s.add_argument("--day", type=float, required=True, help="competition growth-day (days since May 1)")
    s.add_argument("--w0", type=float, required=True, help="initial weight in grams")
    s.add_argument("--restrict", help="index box i0:i1,j0:j1,k0:k1,l0:l1,m0:m1")
    s.add_argument("--full", action="store_true", help="search the whole default lattice (slow)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="optional output directory")
    s.set_defaults(func=cmd_calibrate)

    def solver_args(s, scheme=True):
        s.add_argument("--config", required=True)
        if scheme:
            s.add_argument("--scheme", default="semi", help="explicit, semi or implicit")
        s.add_argument("--out", help="output directory (overrides out_dir in the config)")
        s.add_argument("--force", action="store_true", help="run even if the time-step condition fails")
        s.add_argument("--workers", type=int, default=1, help="threads for the omega lattice")

    s = sub.add_parser("solve", help="solve the HJB equation and write value and policy grids")
    solver_args(s)
    s.add_argument("--t-stride", type=int, default=1, help="write every k-th time row")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("compare-schemes", help="solve with all three schemes and difference them")
    solver_args(s, scheme=False)
    s.add_argument("--t-stride", type=int, default=1, help="write every k-th time row")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("trajectory", help="backtrack controlled paths from terminal populations")
    solver_args(s)
    s.add_argument("--terminal", type=float, nargs="+", default=list(DEFAULT_TERMINALS))
    s.add_argument("--density-times", type=float, nargs="+", default=list(DEFAULT_DENSITY_TIMES),
                   help="solver times for the worst-case weight densities")
    s.set_defaults(func=cmd_trajectory)

    s = sub.add_parser("sensitivity", help="compare parameter variants against the nominal problem")
    solver_args(s)
    s.add_argument("--variants", required=True, help="file of [label] sections with overrides")
    s.add_argument("--terminal", type=float, nargs="+", default=list(DEFAULT_TERMINALS))
    s.set_defaults(func=cmd_sensitivity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
