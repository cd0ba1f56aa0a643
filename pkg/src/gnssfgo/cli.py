"""Command-line interface.

Subcommands: simulate, solve, evaluate, compare, matrix-dump, plot-data.
Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
Every run is deterministic given its input files and flags (all random
behavior is driven by explicit seeds).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import dataio
from .eliminator import EliminatorKind, build_eliminator
from .metrics import ErrorMetrics, evaluate
from .robust import RobustKernel
from .simulate import ScenarioConfig, TrajectoryKind, generate
from .solver import (
    EstimatorMode,
    SolveReport,
    SolverConfig,
    SolverError,
    solve_dataset,
)
from .types import Constellation

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3

#: convergence_reason values that count as a successful solve.
CONVERGED_REASONS = ("gradient", "step", "cost", "per-epoch")

COMPARE_MODES = (
    ("WLS", EstimatorMode.WLS_SPP),
    ("Sol1", EstimatorMode.PSR_DOP),
    ("Sol2", EstimatorMode.PSR_DOP_TDCP),
    ("Sol3", EstimatorMode.PSR_DOP_WCP),
)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _eliminator_kind(text: str) -> EliminatorKind:
    try:
        return EliminatorKind(text)
    except ValueError:
        names = ", ".join(k.value for k in EliminatorKind)
        raise ValueError(f"expected one of: {names}") from None


def _constellation_list(text: str) -> tuple[Constellation, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated constellation list")
    return tuple(Constellation(p.upper()) for p in parts)


def _velocity_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("expected three comma-separated numbers")
    east, north, up = (float(p) for p in parts)
    return (east, north, up)


def _kernel_name(text: str) -> str:
    RobustKernel.parse(text, 1.0)  # validate early so bad names are usage errors
    return text


def _window_length(text: str) -> int:
    n = int(text)
    if n < 2:
        raise ValueError("window length must be at least 2")
    return n


def _add_solver_flags(parser: argparse.ArgumentParser,
                      include_mode: bool = True) -> None:
    if include_mode:
        parser.add_argument("--mode", type=EstimatorMode.parse, default=None,
                            help="estimator mode: wls-spp, psr-dop, "
                                 "psr-dop-tdcp, psr-dop-wcp")
    parser.add_argument("--config", default=None, metavar="PATH",
                        help="key=value solver config file")
    parser.add_argument("--n-max", type=int, default=None,
                        help="maximum carrier-phase window length")
    parser.add_argument("--eliminator", type=_eliminator_kind, default=None,
                        help="ambiguity eliminator: orthonormal, "
                             "random-unitary, tdcp")
    parser.add_argument("--eliminator-seed", type=int, default=None,
                        help="seed for the random-unitary eliminator")
    parser.add_argument("--wcp-kernel", type=_kernel_name, default=None,
                        help="robust kernel for window factors: "
                             "none, huber, cauchy")
    parser.add_argument("--wcp-k", type=float, default=None,
                        help="robust kernel scale for window factors")


def _solver_config(args, mode: EstimatorMode | None = None) -> SolverConfig:
    """Resolve config file + flag overrides into a SolverConfig."""
    if args.config is not None:
        config = dataio.read_solver_config(args.config)
    else:
        config = SolverConfig()
    overrides = {}
    if mode is None:
        mode = getattr(args, "mode", None)
    if mode is not None:
        overrides["mode"] = mode
    if args.n_max is not None:
        overrides["n_max"] = args.n_max
    if args.eliminator is not None:
        overrides["eliminator_kind"] = args.eliminator
    if args.eliminator_seed is not None:
        overrides["eliminator_seed"] = args.eliminator_seed
    kernels = dict(config.kernels)
    if args.wcp_kernel is not None:
        k = args.wcp_k if args.wcp_k is not None else kernels["wcp"].k
        kernels["wcp"] = RobustKernel.parse(args.wcp_kernel, k)
    elif args.wcp_k is not None:
        kernels["wcp"] = replace(kernels["wcp"], k=args.wcp_k)
    overrides["kernels"] = kernels
    return replace(config, **overrides)


def _cmd_simulate(args) -> int:
    try:
        overrides = dict(
            duration_epochs=args.epochs,
            rate_hz=args.rate,
            n_satellites=args.satellites,
            constellations=args.constellations,
            trajectory=args.trajectory,
            base_latitude_deg=args.base_lat,
            base_longitude_deg=args.base_lon,
            base_height_m=args.base_height,
            velocity_enu=args.velocity_enu,
            sigma_pseudorange_m=args.sigma_pseudorange,
            sigma_phase_m=args.sigma_phase,
            sigma_doppler_mps=args.sigma_doppler,
            outlier_probability=args.outlier_prob,
            outlier_magnitude_m=(args.outlier_min, args.outlier_max),
            outlier_burst_epochs=args.outlier_burst,
            slip_probability=args.slip_prob,
            slip_cycles_min=args.slip_cycles_min,
            slip_cycles_max=args.slip_cycles_max,
            slip_flagged_fraction=args.slip_flagged_fraction,
            seed=args.seed,
        )
        if args.noiseless:
            overrides.update(sigma_pseudorange_m=0.0, sigma_phase_m=0.0,
                             sigma_doppler_mps=0.0, outlier_probability=0.0,
                             slip_probability=0.0)
        scenario = ScenarioConfig(**overrides)
    except ValueError as exc:
        print(f"{args.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    dataset, truth, injections = generate(scenario)
    dataio.write_dataset(dataset, args.out)
    dataio.write_trajectory(truth, args.truth)
    outputs = [args.out, args.truth]
    if args.injections is not None:
        dataio.write_injections(injections, args.injections)
        outputs.append(args.injections)
    kinds = sorted({r.kind for r in injections})
    counts = ", ".join(
        f"{kind}: {sum(1 for r in injections if r.kind == kind)}"
        for kind in kinds) or "none"
    print(f"simulated {len(dataset)} epochs x {scenario.n_satellites} "
          f"satellites (seed {scenario.seed})")
    print(f"injections: {counts}")
    print("wrote " + ", ".join(outputs))
    return EXIT_OK


def _print_report_summary(report: SolveReport) -> None:
    print(f"mode: {report.mode.value}")
    print(f"epochs: {len(report.states)}")
    print(f"iterations: {report.iterations}")
    print(f"initial cost: {report.initial_cost:.6g}")
    print(f"final cost: {report.final_cost:.6g}")
    print(f"stop reason: {report.convergence_reason}")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)


def _cmd_solve(args) -> int:
    config = _solver_config(args)
    dataset = dataio.read_dataset(args.dataset)
    report = solve_dataset(dataset, config)
    dataio.write_trajectory(report.trajectory, args.out)
    dataio.write_report(report, args.report)
    _print_report_summary(report)
    print(f"wrote {args.out}, {args.report}")
    if report.convergence_reason not in CONVERGED_REASONS:
        print(f"divergence: stopped on '{report.convergence_reason}' without "
              f"meeting gradient/step tolerances "
              f"(cost {report.initial_cost:.6g} -> {report.final_cost:.6g}); "
              "solution is unreliable", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _print_metrics(metrics: ErrorMetrics) -> None:
    print(metrics.table())


def _cmd_evaluate(args) -> int:
    estimated = dataio.read_trajectory(args.estimated)
    truth = dataio.read_trajectory(args.truth)
    metrics = evaluate(estimated, truth)
    _print_metrics(metrics)
    if args.errors_out is not None:
        _write_error_series(metrics, args.errors_out)
        print(f"wrote {args.errors_out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    dataset = dataio.read_dataset(args.dataset)
    truth = dataio.read_trajectory(args.truth)
    columns = []
    not_converged = []
    for label, mode in COMPARE_MODES:
        config = _solver_config(args, mode=mode)
        report = solve_dataset(dataset, config)
        metrics = evaluate(report.trajectory, truth)
        columns.append((label, metrics))
        if report.convergence_reason not in CONVERGED_REASONS:
            not_converged.append(
                f"{label} ({mode.value}): {report.convergence_reason}")

    width = 11
    header = "2D error (m)".ljust(14) + "".join(
        label.rjust(width) for label, _ in columns)
    print(header)
    for row_label, attribute in (("MEAN", "mean_2d"), ("STD", "std_2d"),
                                 ("Max", "max_2d")):
        cells = "".join(
            f"{getattr(metrics, attribute):{width}.4f}"
            for _, metrics in columns)
        print(row_label.ljust(14) + cells)
    print("columns: WLS=wls-spp, Sol1=psr-dop, Sol2=psr-dop-tdcp, "
          "Sol3=psr-dop-wcp")
    for line in not_converged:
        print(f"warning: not converged: {line}", file=sys.stderr)
    return EXIT_OK


def _cmd_matrix_dump(args) -> int:
    eliminator = build_eliminator(args.kind, args.n, seed=args.seed)
    lines = [",".join(repr(float(v)) for v in row)
             for row in eliminator.entries]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
        print(f"wrote {args.out}")
    return EXIT_OK


def _write_error_series(metrics: ErrorMetrics, path: str) -> None:
    lines = ["epoch_index,east_m,north_m,up_m,horizontal_m"]
    horizontal = metrics.horizontal
    for i, index in enumerate(metrics.epoch_indices):
        lines.append(",".join([
            str(int(index)),
            repr(float(metrics.east[i])),
            repr(float(metrics.north[i])),
            repr(float(metrics.up[i])),
            repr(float(horizontal[i])),
        ]))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def _cmd_plot_data(args) -> int:
    config = _solver_config(args)
    dataset = dataio.read_dataset(args.dataset)
    truth = dataio.read_trajectory(args.truth)
    report = solve_dataset(dataset, config)
    metrics = evaluate(report.trajectory, truth)

    _write_error_series(metrics, args.errors_out)

    lines = ["factor,value"]
    for kind in sorted(report.residuals_by_type):
        for value in np.asarray(report.residuals_by_type[kind]).ravel():
            lines.append(f"{kind},{repr(float(value))}")
    for window in report.window_diagnostics:
        for value in window.reweighted:
            lines.append(f"wcp_reweighted,{repr(float(value))}")
    with open(args.residuals_out, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")

    _print_metrics(metrics)
    print(f"wrote {args.errors_out}, {args.residuals_out}")
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="gnssfgo",
                     description="Batch GNSS positioning: simulate, solve, "
                                 "and evaluate trajectories.")
    commands = parser.add_subparsers(dest="command", required=True,
                                     parser_class=_Parser)

    sim = commands.add_parser("simulate",
                              help="generate a synthetic dataset + truth")
    sim.add_argument("--out", default="dataset.csv", metavar="PATH",
                     help="dataset output file")
    sim.add_argument("--truth", default="truth.csv", metavar="PATH",
                     help="ground-truth trajectory output file")
    sim.add_argument("--injections", default=None, metavar="PATH",
                     help="optional injected-fault log output file")
    base = ScenarioConfig()
    sim.add_argument("--epochs", type=int, default=base.duration_epochs)
    sim.add_argument("--rate", type=float, default=base.rate_hz,
                     help="epoch rate in Hz")
    sim.add_argument("--satellites", type=int, default=base.n_satellites)
    sim.add_argument("--constellations", type=_constellation_list,
                     default=base.constellations,
                     help="comma-separated list, e.g. GPS,BEIDOU")
    sim.add_argument("--trajectory", type=TrajectoryKind.parse,
                     default=base.trajectory,
                     help="static, constant-velocity, or waypoint-spline")
    sim.add_argument("--base-lat", type=float, default=base.base_latitude_deg,
                     help="receiver start latitude (deg)")
    sim.add_argument("--base-lon", type=float, default=base.base_longitude_deg,
                     help="receiver start longitude (deg)")
    sim.add_argument("--base-height", type=float, default=base.base_height_m,
                     help="receiver start height (m)")
    sim.add_argument("--velocity-enu", type=_velocity_triple,
                     default=base.velocity_enu, metavar="E,N,U",
                     help="constant velocity in local ENU (m/s)")
    sim.add_argument("--sigma-pseudorange", type=float,
                     default=base.sigma_pseudorange_m,
                     help="pseudorange noise sigma (m)")
    sim.add_argument("--sigma-phase", type=float, default=base.sigma_phase_m,
                     help="carrier-phase noise sigma (m)")
    sim.add_argument("--sigma-doppler", type=float,
                     default=base.sigma_doppler_mps,
                     help="range-rate noise sigma (m/s)")
    sim.add_argument("--outlier-prob", type=float,
                     default=base.outlier_probability,
                     help="per-track per-epoch NLOS outlier probability")
    sim.add_argument("--outlier-min", type=float,
                     default=base.outlier_magnitude_m[0])
    sim.add_argument("--outlier-max", type=float,
                     default=base.outlier_magnitude_m[1])
    sim.add_argument("--outlier-burst", type=float,
                     default=base.outlier_burst_epochs, metavar="EPOCHS",
                     help="mean NLOS burst length in epochs (1 = memoryless)")
    sim.add_argument("--slip-prob", type=float, default=base.slip_probability,
                     help="per-track per-epoch cycle-slip probability")
    sim.add_argument("--slip-cycles-min", type=int,
                     default=base.slip_cycles_min)
    sim.add_argument("--slip-cycles-max", type=int,
                     default=base.slip_cycles_max)
    sim.add_argument("--slip-flagged-fraction", type=float,
                     default=base.slip_flagged_fraction,
                     help="fraction of slips flagged by the lock indicator")
    sim.add_argument("--seed", type=int, default=base.seed)
    sim.add_argument("--noiseless", action="store_true",
                     help="zero all noise, outliers, and slips")
    sim.set_defaults(handler=_cmd_simulate, prog="gnssfgo simulate")

    solve = commands.add_parser("solve", help="estimate a trajectory")
    solve.add_argument("dataset", help="dataset file")
    solve.add_argument("--out", default="trajectory.csv", metavar="PATH",
                       help="estimated trajectory output file")
    solve.add_argument("--report", default="report.txt", metavar="PATH",
                       help="solve report output file")
    _add_solver_flags(solve)
    solve.set_defaults(handler=_cmd_solve, prog="gnssfgo solve")

    ev = commands.add_parser("evaluate",
                             help="compare a trajectory against truth")
    ev.add_argument("estimated", help="estimated trajectory file")
    ev.add_argument("truth", help="ground-truth trajectory file")
    ev.add_argument("--errors-out", default=None, metavar="PATH",
                    help="optional per-epoch error series CSV")
    ev.set_defaults(handler=_cmd_evaluate, prog="gnssfgo evaluate")

    cmp_parser = commands.add_parser(
        "compare", help="run all four estimator modes and tabulate errors")
    cmp_parser.add_argument("dataset", help="dataset file")
    cmp_parser.add_argument("--truth", required=True, metavar="PATH",
                            help="ground-truth trajectory file")
    _add_solver_flags(cmp_parser, include_mode=False)
    cmp_parser.set_defaults(handler=_cmd_compare, prog="gnssfgo compare")

    dump = commands.add_parser("matrix-dump",
                               help="emit an eliminator matrix as CSV")
    dump.add_argument("--kind", type=_eliminator_kind, required=True,
                      help="orthonormal, random-unitary, or tdcp")
    dump.add_argument("--n", type=_window_length, required=True,
                      help="window length (>= 2)")
    dump.add_argument("--seed", type=int, default=0)
    dump.add_argument("--out", default=None, metavar="PATH",
                      help="output file (default: stdout)")
    dump.set_defaults(handler=_cmd_matrix_dump, prog="gnssfgo matrix-dump")

    plot = commands.add_parser(
        "plot-data",
        help="solve and emit per-epoch errors + residual histogram CSVs")
    plot.add_argument("dataset", help="dataset file")
    plot.add_argument("--truth", required=True, metavar="PATH",
                      help="ground-truth trajectory file")
    plot.add_argument("--errors-out", default="plot_errors.csv",
                      metavar="PATH")
    plot.add_argument("--residuals-out", default="plot_residuals.csv",
                      metavar="PATH")
    _add_solver_flags(plot)
    plot.set_defaults(handler=_cmd_plot_data, prog="gnssfgo plot-data")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else int(exc.code)
    try:
        return args.handler(args)
    except SolverError as exc:
        print(f"gnssfgo: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"gnssfgo: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
