"""Command-line front end.

Exit codes: 0 success, 1 criteria not met, 2 configuration or validation
error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import (
    convergence_report,
    lyapunov_v,
    settle_time,
    sliding_variables,
    stacked_observer_errors,
    tracking_errors,
)
from .config import apply_overrides, builtin_config, load_config, scenario_from_config
from .errors import ConfigError, DimensionError, DivergenceError, ScheduleExhaustedError
from .graph import check_jointly_connected
from .integrator import TrajectoryLog, integrate
from .leader import leader_output
from .scenario import Scenario, validate
from .verification import run_suite

log = logging.getLogger("elconsensus")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG) -> None:
        super().__init__(message)
        self.code = code


def _load_document(args: argparse.Namespace) -> dict:
    if args.builtin_example:
        doc = builtin_config()
    elif args.config:
        doc = load_config(args.config)
    else:
        raise CliError("give a config file or --builtin-example")
    overrides = list(getattr(args, "override", None) or [])
    if getattr(args, "horizon", None) is not None:
        overrides.append(f"integrator.horizon={args.horizon!r}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"initial.seed={args.seed}")
    return apply_overrides(doc, overrides)


def _build(doc: dict) -> Scenario:
    try:
        sc = scenario_from_config(doc)
    except DimensionError as exc:
        raise ConfigError(str(exc)) from exc
    problems = validate(sc)
    if problems:
        raise CliError("invalid scenario:\n  " + "\n  ".join(problems))
    return sc


def trajectory_table(log_: TrajectoryLog) -> tuple[list[str], np.ndarray]:
    """Header and rows for ``trajectory.csv``: time and raw state followed by derived channels."""
    sc = log_.scenario
    v = log_.views()[0]
    q0, dq0 = leader_output(sc.leader, v)
    eq, edq = tracking_errors(log_)
    s = sliding_variables(log_)
    V = lyapunov_v(log_, sc.stacked_plant(), sc.controller_gains)
    K = len(log_.times)
    header = ["t", *log_.layout.labels()]
    header += [f"q0_{k}" for k in range(sc.n)] + [f"dq0_{k}" for k in range(sc.n)]
    header += [f"eq{i}" for i in range(1, sc.N + 1)] + [f"edq{i}" for i in range(1, sc.N + 1)]
    header += [f"s{i}_{k}" for i in range(1, sc.N + 1) for k in range(sc.n)]
    header.append("V")
    rows = np.column_stack([log_.times, log_.states, q0, dq0, eq, edq, s.reshape(K, -1), V])
    return header, rows


def write_trajectory(path: Path, log_: TrajectoryLog) -> None:
    header, rows = trajectory_table(log_)
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def write_plots(out: Path, log_: TrajectoryLog) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = log_.times
    eq, edq = tracking_errors(log_)
    S_norm, eta_norm = stacked_observer_errors(log_)
    for name, channels, labels in (
        ("tracking.svg", np.column_stack([eq, edq]),
         [f"|q{i}-q0|" for i in range(1, eq.shape[1] + 1)] + [f"|dq{i}-dq0|" for i in range(1, eq.shape[1] + 1)]),
        ("observer.svg", np.column_stack([S_norm, eta_norm]), ["|S_hat|_F", "|eta_hat|"]),
    ):
        fig, ax = plt.subplots(figsize=(7, 4))
        for col, label in zip(channels.T, labels):
            ax.semilogy(t, np.maximum(col, 1e-16), label=label, lw=0.9)
        ax.set_xlabel("t [s]")
        ax.legend(fontsize="small", ncol=2)
        fig.tight_layout()
        fig.savefig(out / name)
        plt.close(fig)


def cmd_run(args: argparse.Namespace) -> int:
    sc = _build(_load_document(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        traj = integrate(sc)
    except DivergenceError as exc:
        print(f"diverged at t={exc.t:.6g} in {exc.component}", file=sys.stderr)
        return EXIT_DIVERGED
    report = convergence_report(traj)
    write_trajectory(out / "trajectory.csv", traj)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.kv").write_text(report.to_kv(), encoding="utf-8")
    if args.plot:
        write_plots(out, traj)
    print(report.to_text(), end="")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_check_graph(args: argparse.Namespace) -> int:
    sc = scenario_from_config(_load_document(args))
    eps = args.epsilon if args.epsilon is not None else sc.epsilon
    if not eps > 0:
        raise CliError(f"epsilon must be > 0, got {eps}")
    horizon = max(sc.integrator.horizon, 4 * eps)
    rep = check_jointly_connected(sc.network, horizon, eps)
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args: argparse.Namespace) -> int:
    sc = scenario_from_config(_load_document(args))
    results = run_suite(sc, samples=args.samples, seed=args.verify_seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"overall: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def parse_grid(specs: list[str]) -> list[tuple[str, list[str]]]:
    """``["gains.mu2=1,10"]`` -> ``[("gains.mu2", ["1", "10"])]``."""
    grid = []
    for spec in specs:
        if "=" not in spec:
            raise CliError(f"grid entry {spec!r} is not of the form section.key=v1,v2,...")
        key, values = spec.split("=", 1)
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise CliError(f"grid entry {spec!r} lists no values")
        grid.append((key.strip(), vals))
    return grid


SWEEP_FIELDS = ["status", "passed", "tracking_settle_max", "observer_settle", "final_tracking_max", "message"]


def run_cell(doc: dict, overrides: list[str]) -> dict:
    """Run one sweep cell; failures are returned as data, never raised."""
    row = dict.fromkeys(SWEEP_FIELDS, "")
    try:
        sc = _build(apply_overrides(doc, overrides))
        traj = integrate(sc)
    except DivergenceError as exc:
        row.update(status="diverged", passed="false", message=f"t={exc.t:.6g} {exc.component}")
        return row
    except (CliError, ConfigError, ScheduleExhaustedError) as exc:
        row.update(status="invalid", passed="false", message=str(exc).replace("\n", " "))
        return row
    cfg = sc.analysis
    t = traj.times
    eq, edq = tracking_errors(traj)
    settles = [settle_time(t, ch, cfg.tracking_tol) for ch in np.column_stack([eq, edq]).T]
    S_norm, eta_norm = stacked_observer_errors(traj)
    obs = [settle_time(t, S_norm, cfg.observer_tol), settle_time(t, eta_norm, cfg.observer_tol)]
    row.update(
        status="ok",
        passed="true" if convergence_report(traj).passed else "false",
        tracking_settle_max="never" if None in settles else repr(max(settles)),
        observer_settle="never" if None in obs else repr(max(obs)),
        final_tracking_max=repr(float(max(eq[-1].max(), edq[-1].max()))),
    )
    return row


def cmd_sweep(args: argparse.Namespace) -> int:
    doc = _load_document(args)
    grid = parse_grid(args.grid or [])
    keys = [k for k, _ in grid]
    cells = [] if not grid else list(itertools.product(*(vals for _, vals in grid)))
    jobs = [[f"{k}={v}" for k, v in zip(keys, cell)] for cell in cells]
    if args.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            rows = list(pool.map(run_cell, [doc] * len(jobs), jobs))
    else:
        rows = [run_cell(doc, job) for job in jobs]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", *keys, *SWEEP_FIELDS])
        for idx, (cell, row) in enumerate(zip(cells, rows)):
            writer.writerow([idx, *cell, *(row[f] for f in SWEEP_FIELDS)])
    for cell, row in zip(cells, rows):
        print(", ".join(f"{k}={v}" for k, v in zip(keys, cell)), "->", row["status"], row["passed"])
    print(f"{len(rows)} cells written to {out / 'sweep.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elconsensus",
        description="Leader-following consensus of uncertain Euler-Lagrange agents over switching networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", nargs="?", help="scenario TOML file")
        p.add_argument("--builtin-example", action="store_true", help="use the built-in four-arm scenario")
        p.add_argument("--override", action="append", metavar="KEY=VALUE", help="set section.key (repeatable)")
        p.add_argument("--seed", type=int, help="seed for random initial conditions")
        p.add_argument("--horizon", type=float, help="simulated time in seconds")

    p = sub.add_parser("run", help="simulate and write trajectory and report")
    common(p)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--plot", action="store_true", help="also write SVG error plots")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-graph", help="check joint connectivity of the switching network")
    common(p)
    p.add_argument("--epsilon", type=float, help="window length (defaults to network.epsilon)")
    p.set_defaults(func=cmd_check_graph)

    p = sub.add_parser("verify", help="randomized plant and observer property checks")
    common(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--verify-seed", type=int, default=0, help="seed for the random test states")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run a parameter grid")
    common(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="grid axis (repeatable)")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = getattr(logging, os.environ.get("ELC_LOG_LEVEL", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, DimensionError, ScheduleExhaustedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "code", EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
