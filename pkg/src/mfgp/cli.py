"""Command-line interface: ``mfgp solve | diagnose | sweep <config.json>``.

Exit codes: 0 success, 1 configuration error, 2 solver did not converge
(solve/sweep) or a structural check failed (diagnose).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .diagnostics import diagnose, energy_drift, energy_series
from .discretization import TrajectoryGrid
from .exact import reference
from .model import ConfigurationError, Domain
from .optimizer import SolveResult, SolverStalledError, initial_guess, solve
from .quantile import cdf_points, cdf_sup_error

logger = logging.getLogger("mfgp")

STRUCTURAL_TOL = 1e-8
LP_TOL = 1e-6
ROUNDOFF = 1e-12


def fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_trajectory(path: Path, grid: TrajectoryGrid) -> None:
    X = grid.positions
    R = grid.densities()
    wrapped = X - np.floor(X) if grid.domain is Domain.TORUS else X
    rows = []
    for n in range(grid.N_T + 1):
        t = fmt(n * grid.dt)
        for i in range(grid.N):
            rows.append((n, t, i + 1, fmt(wrapped[n, i]), fmt(X[n, i]), fmt(R[n, i])))
    _write_csv(path, ("n", "t", "i", "x_wrapped", "x_lifted", "R_i"), rows)


def load_trajectory(path, domain: Domain | str, T: float | None = None) -> TrajectoryGrid:
    """Rebuild a :class:`TrajectoryGrid` from ``trajectory.csv``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = np.array([int(r["n"]) for r in rows])
    i = np.array([int(r["i"]) for r in rows])
    X = np.empty((n.max() + 1, i.max()))
    X[n, i - 1] = [float(r["x_lifted"]) for r in rows]
    N_T = X.shape[0] - 1
    if T is None:
        T = float(rows[-1]["t"])
    return TrajectoryGrid(X, T / N_T, Domain.parse(domain))


def _cdf_tables(cfg: RunConfig, grid: TrajectoryGrid):
    ref = reference(cfg.reference) if cfg.reference else None
    N = grid.N
    tables, errors = {}, {}
    for t in cfg.cdf_times:
        n = int(round(t / grid.dt))
        tn = n * grid.dt
        state = grid.state(n)
        right = cdf_points(state, tn)
        mid = cdf_points(state, tn, level_offset=1.0 / (2 * N))
        exact = ref.cdf(right.x, tn) if ref else None
        rows = []
        for k in range(N):
            row = [fmt(right.x[k]), fmt(right.levels[k]), fmt(mid.levels[k])]
            if exact is not None:
                row.append(fmt(exact[k]))
            rows.append(row)
        tables[t] = rows
        if ref:
            errors[t] = cdf_sup_error(mid, ref.cdf)
    return tables, errors


def run_solve(cfg: RunConfig) -> tuple[SolveResult, bool]:
    x0, xT = cfg.boundary_states()
    guess = initial_guess(x0, xT, cfg.problem.N_T, cfg.problem.T)
    try:
        res = solve(cfg.problem, cfg.solver, guess)
        return res, res.converged
    except SolverStalledError as exc:
        logger.warning("%s", exc)
        return exc.result, False


def _time_label(t: float) -> str:
    return format(t, "g")


def write_solve_outputs(cfg: RunConfig, res: SolveResult) -> dict:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(out / "trajectory.csv", res.grid)
    tables, errors = _cdf_tables(cfg, res.grid)
    header = ["x", "level", "level_midpoint"] + (["exact_level"] if cfg.reference else [])
    for t, rows in tables.items():
        _write_csv(out / f"cdf_t{_time_label(t)}.csv", header, rows)
    summary = {
        "config_digest": cfg.digest(),
        "objective": res.objective_value,
        "iterations": res.iterations,
        "grad_norm": res.final_grad_norm,
        "grad_tol": cfg.solver.grad_tol,
        "converged": bool(res.converged),
        "N": cfg.problem.N,
        "N_T": cfg.problem.N_T,
        "T": cfg.problem.T,
        "domain": cfg.problem.domain.value,
        "min_gap": res.grid.min_gap(),
        "potential_concavity_defect": cfg.problem.potential.concavity_defect(cfg.problem.domain, cfg.problem.T),
        "reference": cfg.reference.value if cfg.reference else None,
        "cdf_level_convention": "midpoint (i - 1/2)/N",
        "cdf_sup_errors": {_time_label(t): e for t, e in errors.items()},
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_solve(cfg: RunConfig) -> int:
    res, ok = run_solve(cfg)
    summary = write_solve_outputs(cfg, res)
    if summary["potential_concavity_defect"] > 0:
        logger.warning("potential is not concave in x (max V_xx %.3g); uniqueness is not guaranteed",
                       summary["potential_concavity_defect"])
    logger.info("objective %.12g  iterations %d  grad %.3e  converged %s",
                res.objective_value, res.iterations, res.final_grad_norm, res.converged)
    return 0 if ok else 2


def _load_or_solve(cfg: RunConfig) -> tuple[TrajectoryGrid, float, bool]:
    out = cfg.output_dir
    summary_path = out / "summary.json"
    traj_path = out / "trajectory.csv"
    if summary_path.exists() and traj_path.exists():
        summary = json.loads(summary_path.read_text())
        if summary.get("config_digest") == cfg.digest():
            grid = load_trajectory(traj_path, cfg.problem.domain, cfg.problem.T)
            return grid, float(summary["grad_norm"]), bool(summary["converged"])
    res, ok = run_solve(cfg)
    write_solve_outputs(cfg, res)
    return res.grid, res.final_grad_norm, ok


def structural_checks(cfg: RunConfig, grid: TrajectoryGrid, grad_norm: float, report) -> dict:
    spec = cfg.problem
    const_v = spec.potential.is_constant
    checks = {}

    def na(reason):
        return {"status": "not_applicable", "reason": reason}

    if "momentum" in cfg.series:
        if const_v and spec.domain is Domain.TORUS:
            M = report.momentum_series
            drift = float(np.max(np.abs(M - M[0])))
            bound = grad_norm * spec.N * max(spec.T, 1.0) + ROUNDOFF
            checks["momentum_drift"] = {"status": "pass" if drift <= bound else "fail",
                                        "value": drift, "tolerance": bound}
        else:
            checks["momentum_drift"] = na("requires constant V on the torus")
    if "displacement" in cfg.series:
        for u in cfg.U:
            key = f"displacement[{u.label}]"
            if not const_v:
                checks[key] = na("requires constant V")
            elif u.label not in report.displacement:
                checks[key] = na("real line requires U(0) = 0")
            else:
                d = report.displacement[u.label]
                worst = min(d.min_second_difference, d.chord_slack)
                checks[key] = {"status": "pass" if worst >= -STRUCTURAL_TOL else "fail",
                               "min_second_difference": d.min_second_difference,
                               "chord_slack": d.chord_slack, "tolerance": STRUCTURAL_TOL}
    if "lp" in cfg.series:
        for p, r in report.lp.items():
            key = f"logconvexity[p={p:g}]"
            if not const_v:
                checks[key] = na("requires constant V")
            else:
                checks[key] = {"status": "pass" if r.violation <= LP_TOL else "fail",
                               "value": r.violation, "tolerance": LP_TOL}
        for p, r in report.uniform_lp.items():
            key = f"uniform_lp[p={p:g}]"
            if not const_v:
                checks[key] = na("requires constant V")
            else:
                checks[key] = {"status": "pass" if r.slack <= LP_TOL else "fail",
                               "value": r.slack, "tolerance": LP_TOL}
    if "energy" in cfg.series:
        checks["energy_drift"] = {"status": "info", "value": report.energy_drift}
    if "el_residual" in cfg.series:
        checks["el_residual"] = {"status": "info", "value": report.el_residual_max}
    return checks


def cmd_diagnose(cfg: RunConfig) -> int:
    grid, grad_norm, _ = _load_or_solve(cfg)
    spec = cfg.problem
    report = diagnose(grid, spec, cfg.U, cfg.p)
    times = grid.times
    rows = []
    if "momentum" in cfg.series:
        rows += [("momentum", "", k, fmt(times[k]), fmt(v)) for k, v in enumerate(report.momentum_series)]
    if "energy" in cfg.series:
        rows += [("energy", "", k, fmt(times[k]), fmt(v)) for k, v in enumerate(report.energy_series)]
    if "displacement" in cfg.series:
        for label, d in report.displacement.items():
            rows += [("displacement", label, n, fmt(times[n]), fmt(v)) for n, v in enumerate(d.series)]
    if "lp" in cfg.series:
        for p, r in report.lp.items():
            rows += [("lp_sum", f"p={p:g}", n, fmt(times[n]), fmt(v)) for n, v in enumerate(r.series)]
        for p, r in report.uniform_lp.items():
            rows += [("lp_norm", f"p={p:g}", n, fmt(times[n]), fmt(v)) for n, v in enumerate(r.norms)]
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.output_dir / "diagnostics.csv", ("series", "key", "index", "t", "value"), rows)
    checks = structural_checks(cfg, grid, grad_norm, report)
    _write_json(cfg.output_dir / "checks.json", checks)
    failed = [k for k, v in checks.items() if v["status"] == "fail"]
    for k in failed:
        logger.error("check failed: %s", k)
    return 2 if failed else 0


def _sweep_member(cfg: RunConfig, axis: str, value: int) -> dict:
    row = {"value": value, "converged": False, "iterations": "", "cdf_error": "", "energy_drift": "",
           "runtime": "", "error": ""}
    try:
        member = cfg.with_overrides(**{axis: value})
        t0 = time.perf_counter()
        res, ok = run_solve(member)
        row["runtime"] = time.perf_counter() - t0
        row.update(converged=ok, iterations=res.iterations)
        if member.reference:
            ref = reference(member.reference)
            grid = res.grid
            n = int(round(member.problem.T / 2 / grid.dt))
            pts = cdf_points(grid.state(n), n * grid.dt, level_offset=1.0 / (2 * grid.N))
            row["cdf_error"] = cdf_sup_error(pts, ref.cdf)
        drift = energy_drift(energy_series(res.grid, member.problem))
        row["energy_drift"] = "" if drift is None else drift
    except ConfigurationError as exc:
        row["error"] = str(exc)
    return row


def cmd_sweep(cfg: RunConfig, axis: str, values: list[int]) -> int:
    if axis not in ("N", "N_T"):
        raise ConfigurationError("--axis must be N or N_T")
    workers = max(1, int(os.environ.get("MFGP_THREADS", "1") or 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda v: _sweep_member(cfg, axis, v), values))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    header = ("value", "converged", "iterations", "cdf_error", "energy_drift", "runtime", "error")
    _write_csv(cfg.output_dir / "sweep.csv", (axis,) + header[1:],
               [[r[h] if not isinstance(r[h], float) else fmt(r[h]) for h in header] for r in rows])
    checks = {}
    errs = [r["cdf_error"] for r in rows if r["cdf_error"] != ""]
    if axis == "N" and len(errs) >= 2:
        ok = all(b <= a for a, b in zip(errs, errs[1:]))
        checks["cdf_error_non_increasing_in_N"] = {"status": "pass" if ok else "fail", "soft": True,
                                                   "values": errs}
    drifts = [r["energy_drift"] for r in rows if r["energy_drift"] != ""]
    if axis == "N_T" and len(drifts) >= 2:
        ok = all(b <= a for a, b in zip(drifts, drifts[1:]))
        checks["energy_drift_non_increasing_in_N_T"] = {"status": "pass" if ok else "fail", "soft": True,
                                                        "values": drifts}
    _write_json(cfg.output_dir / "checks.json", checks)
    if any(r["error"] for r in rows) or not all(r["converged"] for r in rows):
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfgp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="path to the JSON run config")
        p.add_argument("--output-dir", help="override output_dir")
        p.add_argument("--grad-tol", type=float, help="override solver.grad_tol")
        p.add_argument("--max-iters", type=int, help="override solver.max_iters")

    common(sub.add_parser("solve", help="solve and write trajectory, CDF tables and summary"))
    common(sub.add_parser("diagnose", help="compute structural series and checks"))
    sw = sub.add_parser("sweep", help="repeat the solve over N or N_T")
    common(sw)
    sw.add_argument("--axis", choices=("N", "N_T"), required=True)
    sw.add_argument("--values", required=True, help="comma-separated integers, e.g. 10,25,50")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out = Path(args.output_dir).resolve() if args.output_dir else None
        cfg = cfg.with_overrides(grad_tol=args.grad_tol, max_iters=args.max_iters, output_dir=out)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "diagnose":
            return cmd_diagnose(cfg)
        try:
            values = [int(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigurationError(f"--values: expected comma-separated integers, got {args.values!r}") from None
        return cmd_sweep(cfg, args.axis, values)
    except ConfigurationError as exc:
        print(f"mfgp: configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
