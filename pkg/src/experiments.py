import math
from pathlib import Path

import numpy as np
import pandas as pd
from tabulate import tabulate

from src.custom_exceptions import (
    DomainError,
    GardnerSolverError,
    InitializationError,
    NumericalBreakdownError,
)
from src.diagnostics import (
    amplification_factors,
    best_row,
    conservation,
    default_epsilon,
    linf_error,
    reduction_residual,
    scan_zeta_errors,
    zeta_scan,
)
from src.espline_basis import compute_basis_constants, compute_piece_coefficients
from src.models import (
    ConservationReport,
    ErrorReport,
    ProblemSpec,
    RunConfig,
    RunOutcome,
    SnapshotRecord,
    SnapshotSeries,
    SplineState,
    TableId,
)
from src.problem_model import custom_spec, example_spec
from src.solver_core import evaluate_solution_array, observation_steps, run
from src.utils import logger, save_key_values, save_to_csv


EXIT_SUCCESS = 0
EXIT_USAGE = 1
EXIT_BREAKDOWN = 2

TABLE_SCAN_RANGE = (1e-7, 1e-5)
TABLE_SCAN_POINTS = 40

# --- Published reference values ---

# N -> (L(2.5) zeta=1, zeta*, L(2.5) zeta*, L(5) zeta=1, zeta*, L(5) zeta*)
PUBLISHED_EXAMPLE1_ERRORS = {
    100: (1.1502e-4, 3e-6, 3.2331e-5, 2.1665e-4, 3e-6, 5.1481e-5),
    200: (4.1696e-5, 1e-6, 1.6622e-5, 5.7428e-5, 1e-6, 1.8886e-5),
    300: (2.3860e-5, 5e-6, 1.3923e-5, 2.9888e-5, 4e-6, 1.7006e-5),
    400: (1.6985e-5, 4e-6, 1.4470e-5, 1.8721e-5, 3e-6, 1.5404e-5),
}
# N -> (M0, E0, H0, C_M, C_E, C_H) at t = 5
PUBLISHED_EXAMPLE1_CONSERVATION = {
    100: (1.04458, 0.06013453, 0.00407022, 5.5668e-6, 2.6168e-8, 1.2174e-5),
    200: (1.04458, 0.06013453, 0.00407022, 2.9640e-6, 5.0740e-8, 1.0597e-6),
    300: (1.04458, 0.06013453, 0.00407022, 2.3326e-7, 2.2152e-8, 2.7126e-6),
    400: (1.04458, 0.06013453, 0.00407022, 1.1862e-6, 8.8551e-10, 3.3555e-6),
}
# N -> (L(12) zeta=1, zeta*, L(12) zeta*)
PUBLISHED_EXAMPLE2_ERRORS = {
    100: (3.8436e-4, 1e-6, 2.3022e-5),
    200: (1.0016e-4, 2e-6, 5.8623e-6),
    400: (2.5327e-5, 4e-6, 1.3684e-6),
    600: (1.1280e-5, 6e-6, 5.3420e-7),
    800: (6.3476e-6, 8e-6, 2.3800e-7),
}
# N -> (M0, E0, H0, C_M, C_E, C_H) at t = 12
# the printed drifts are one decade below the mass the kink carries in through x = a,
# 0.2 * (12 / 30) / M0 ~ 4.95e-3; kept as printed
PUBLISHED_EXAMPLE2_CONSERVATION = {
    100: (16.1599, 3.0129, 0.0979, 4.9493e-4, 5.3092e-4, 5.4405e-4),
    200: (16.0799, 2.9969, 0.0974, 4.9750e-4, 5.3387e-4, 5.4720e-4),
    400: (16.0399, 2.9889, 0.0971, 4.9875e-4, 5.3531e-4, 5.4871e-4),
    600: (16.0266, 2.9862, 0.0971, 4.9917e-4, 5.3578e-4, 5.4922e-4),
    800: (16.0199, 2.9849, 0.0970, 4.9937e-4, 5.3602e-4, 5.4947e-4),
}
# t -> (M0, E0, H0, C_M, C_E, C_H) for example 3 with N = 200; the t = 5 C_H entry is
# printed as "21608e-3" and read as 2.1608e-3
PUBLISHED_EXAMPLE3_CONSERVATION = {
    5.0: (5.2255, 1.5033, 1.5994, 1.2040e-6, 3.7180e-5, 2.1608e-3),
    10.0: (5.2255, 1.5033, 1.5994, 3.6819e-6, 5.2527e-5, 3.1907e-3),
    15.0: (5.2255, 1.5033, 1.5994, 8.9144e-6, 5.8526e-4, 3.5478e-3),
}
CONSERVATION_COLUMNS = ("M0", "E0", "H0", "C_M", "C_E", "C_H")


# --- Problem construction ---


def build_spec(config: RunConfig) -> ProblemSpec:
    if config.experiment == "custom":
        spec = custom_spec(
            a=config.a,
            b=config.b,
            N=config.N,
            dt=config.dt,
            zeta=config.zeta,
            t_end=config.t_end,
            mu1=config.mu1,
            mu2=config.mu2,
            mu3=config.mu3,
            initial_expression=config.initial,
        )
    else:
        spec = example_spec(
            config.experiment, N=config.N, dt=config.dt, zeta=config.zeta, t_end=config.t_end
        )
    return spec.model_copy(update={"boundary": config.boundary})


def snapshot_grid(spec: ProblemSpec, density: float) -> np.ndarray:
    """ceil(density * (b - a)) + 1 equally spaced points covering [a, b]."""
    count = math.ceil(density * (spec.grid.b - spec.grid.a)) + 1
    return np.linspace(spec.grid.a, spec.grid.b, count)


# --- Single run ---


SNAPSHOT_COLUMNS = ["t", "x", "u", "v"]


def _snapshot_frame(series: SnapshotSeries, with_error: bool) -> pd.DataFrame:
    """One row per (t, x); the `error` column holds u - u_exact when with_error is set."""
    columns = SNAPSHOT_COLUMNS + ["error"] if with_error else SNAPSHOT_COLUMNS
    frames = [
        pd.DataFrame(
            {"t": record.t, "x": record.x, "u": record.u, "v": record.v, "error": record.error}
        )[columns]
        for record in series.records
    ]
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)


def _conservation_frame(reports: list[ConservationReport]) -> pd.DataFrame:
    columns = ["t", "M", "E", "H", "C_M", "C_E", "C_H"]
    return pd.DataFrame(
        [[getattr(report, column) for column in columns] for report in reports],
        columns=columns,
    )


def _error_frame(reports: list[ErrorReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [[report.t, report.linf, report.argmax_x] for report in reports],
        columns=["t", "linf", "argmax_x"],
    )


def run_experiment(config: RunConfig) -> RunOutcome:
    """
    Run one configured simulation and write its result files into config.output_dir.

    Files: snapshots.csv (with the pointwise error u - u_exact when an analytical
    solution exists), conservation.csv, errors.csv (analytical solution only) and
    summary.txt. A numerical breakdown still writes everything recorded
    up to the failing step and returns exit code 2.
    """
    output_dir = Path(config.output_dir)
    spec = build_spec(config)
    constants = compute_basis_constants(spec.zeta, spec.grid.h)
    coeffs = compute_piece_coefficients(spec.zeta, spec.grid.h)
    xs = snapshot_grid(spec, config.snapshot_density)
    snapshot_steps = observation_steps(config.snapshot_times, spec.dt)
    report_steps = observation_steps(config.report_times, spec.dt)

    series = SnapshotSeries()
    conservation_reports: list[ConservationReport] = []
    error_reports: list[ErrorReport] = []
    tracker: dict[str, object] = {"baseline": None, "max_residual": 0.0, "last": None}

    def observe(state: SplineState) -> None:
        tracker["last"] = state
        tracker["max_residual"] = max(
            tracker["max_residual"], reduction_residual(state, constants)
        )
        if state.step_index == 0:
            tracker["baseline"] = conservation(
                state, spec, quadrature=config.quadrature, points=config.quadrature_points
            )
        if state.step_index in snapshot_steps:
            u, _, v = evaluate_solution_array(state, xs, coeffs, spec.grid)
            error = None if spec.analytical is None else u - spec.analytical(xs, state.t)
            series.records.append(SnapshotRecord(t=state.t, x=xs, u=u, v=v, error=error))
        if state.step_index in report_steps:
            conservation_reports.append(
                conservation(
                    state,
                    spec,
                    baseline=tracker["baseline"],
                    quadrature=config.quadrature,
                    points=config.quadrature_points,
                )
            )
            if spec.analytical is not None:
                error_reports.append(linf_error(state, spec, constants))

    summary: dict[str, object] = {
        **config.model_dump(),
        "h": spec.grid.h,
        "num_steps": spec.num_steps,
        "derivative_source": spec.derivative_source,
    }
    status = "success"
    exit_code = EXIT_SUCCESS
    message = None
    try:
        run(spec, [observe], observe_times=None, constants=constants)
    except NumericalBreakdownError as e:
        status, exit_code, message = "breakdown", EXIT_BREAKDOWN, str(e)
        summary["failed_step"] = e.step_index
        summary["pivot_row"] = e.pivot_row
        summary["pivot"] = e.pivot
    except InitializationError as e:
        status, exit_code, message = "breakdown", EXIT_BREAKDOWN, str(e)
        summary["failed_step"] = 0

    last: SplineState | None = tracker["last"]
    steps_completed = last.step_index if last is not None else 0
    final_time = last.t if last is not None else 0.0
    summary.update(
        {
            "status": status,
            "steps_completed": steps_completed,
            "final_time": final_time,
            "max_reduction_residual": tracker["max_residual"],
            "message": message,
        }
    )

    files = [output_dir / "snapshots.csv", output_dir / "conservation.csv"]
    save_to_csv(_snapshot_frame(series, spec.analytical is not None), files[0])
    save_to_csv(_conservation_frame(conservation_reports), files[1])
    if spec.analytical is not None:
        files.append(output_dir / "errors.csv")
        save_to_csv(_error_frame(error_reports), files[-1])
    files.append(output_dir / "summary.txt")
    save_key_values(summary, files[-1])

    if error_reports:
        logger.info(f"Final L-infinity error: {error_reports[-1].linf:.6e} at t={error_reports[-1].t:.6g}")
    logger.info(f"Run {status}: {steps_completed} steps, files written to {output_dir}")
    return RunOutcome(
        status=status,
        exit_code=exit_code,
        steps_completed=steps_completed,
        final_time=final_time,
        output_dir=str(output_dir),
        files=[str(path) for path in files],
        message=message,
    )


# --- Published tables ---


def table_scan_grid(points: int = TABLE_SCAN_POINTS) -> list[float]:
    low, high = TABLE_SCAN_RANGE
    return [float(z) for z in np.geomspace(low, high, points)] + [1.0]


def _conservation_at(
    spec: ProblemSpec, times: list[float]
) -> tuple[ConservationReport, dict[float, ConservationReport]]:
    constants = compute_basis_constants(spec.zeta, spec.grid.h)
    wanted = observation_steps(times, spec.dt)
    reports: dict[float, ConservationReport] = {}
    baseline: list[ConservationReport] = []

    def record(state: SplineState) -> None:
        if state.step_index == 0:
            baseline.append(conservation(state, spec, quadrature="nodal"))
        if state.step_index in wanted:
            reports[wanted[state.step_index]] = conservation(
                state, spec, baseline=baseline[0], quadrature="nodal"
            )

    run(spec, [record], observe_times=[0.0, *times], constants=constants)
    return baseline[0], reports


def _error_table(name: str, times: list[float], published: dict, scan_points: int) -> pd.DataFrame:
    rows = []
    for N, reference in published.items():
        row: dict[str, object] = {"N": N}
        try:
            spec = example_spec(name, N=N, t_end=max(times))
            scan_rows = scan_zeta_errors(spec, table_scan_grid(scan_points), times)
            unit_row = next(r for r in scan_rows if r.zeta == 1.0)
            for position, t in enumerate(times):
                label = f"{t:g}".replace(".", "_")
                best = best_row(scan_rows, t)
                row[f"linf_{label}_zeta1"] = unit_row.linf_by_time.get(t)
                row[f"published_linf_{label}_zeta1"] = reference[3 * position]
                row[f"best_zeta_{label}"] = best.zeta
                row[f"linf_{label}_best"] = best.linf_by_time[t]
                row[f"published_zeta_{label}"] = reference[3 * position + 1]
                row[f"published_linf_{label}_best"] = reference[3 * position + 2]
            failures = [r for r in scan_rows if r.error]
            row["error"] = f"{len(failures)} scan points failed" if failures else ""
        except GardnerSolverError as e:
            logger.error(f"Table row N={N} failed. Error: {e}")
            row["error"] = str(e)
        rows.append(row)
        logger.info(f"Table row N={N} done.")
    return pd.DataFrame(rows)


def _conservation_row(
    baseline: ConservationReport, report: ConservationReport, reference: tuple
) -> dict[str, object]:
    computed = (baseline.M, baseline.E, baseline.H, report.C_M, report.C_E, report.C_H)
    row: dict[str, object] = {}
    for column, value in zip(CONSERVATION_COLUMNS, computed):
        row[column] = value
    for column, value in zip(CONSERVATION_COLUMNS, reference):
        row[f"published_{column}"] = value
    row["error"] = ""
    return row


def _conservation_table(name: str, t_end: float, published: dict) -> pd.DataFrame:
    rows = []
    for N, reference in published.items():
        try:
            spec = example_spec(name, N=N, t_end=t_end)
            baseline, reports = _conservation_at(spec, [t_end])
            row = {"N": N, **_conservation_row(baseline, reports[t_end], reference)}
        except GardnerSolverError as e:
            logger.error(f"Table row N={N} failed. Error: {e}")
            row = {"N": N, "error": str(e)}
        rows.append(row)
        logger.info(f"Table row N={N} done.")
    return pd.DataFrame(rows)


def _example3_table() -> pd.DataFrame:
    times = sorted(PUBLISHED_EXAMPLE3_CONSERVATION)
    spec = example_spec("example3", N=200, t_end=max(times))
    try:
        baseline, reports = _conservation_at(spec, times)
    except GardnerSolverError as e:
        logger.error(f"Example 3 conservation run failed. Error: {e}")
        return pd.DataFrame([{"t": t, "error": str(e)} for t in times])
    published = PUBLISHED_EXAMPLE3_CONSERVATION
    return pd.DataFrame(
        [{"t": t, **_conservation_row(baseline, reports[t], published[t])} for t in times]
    )


def build_table(table_id: TableId, scan_points: int = TABLE_SCAN_POINTS) -> pd.DataFrame:
    """
    Recompute one published table.

    T2 and T4 are L-infinity errors with zeta = 1 and with the best zeta of a scan;
    T3 and T6 are initial conservation integrals and drifts of examples 1 and 2 over N;
    T5 follows example 3 at t = 5, 10, 15.
    """
    logger.info(f"Building table {table_id}")
    if table_id == "T2":
        return _error_table("example1", [2.5, 5.0], PUBLISHED_EXAMPLE1_ERRORS, scan_points)
    if table_id == "T3":
        return _conservation_table("example1", 5.0, PUBLISHED_EXAMPLE1_CONSERVATION)
    if table_id == "T4":
        return _error_table("example2", [12.0], PUBLISHED_EXAMPLE2_ERRORS, scan_points)
    if table_id == "T5":
        return _example3_table()
    if table_id == "T6":
        return _conservation_table("example2", 12.0, PUBLISHED_EXAMPLE2_CONSERVATION)
    raise DomainError("Unknown table id.", {"table_id": table_id})


def run_table(table_id: TableId, output: Path, scan_points: int = TABLE_SCAN_POINTS) -> Path:
    frame = build_table(table_id, scan_points)
    save_to_csv(frame, output)
    print(tabulate(frame, headers="keys", tablefmt="github", showindex=False, floatfmt=".5g"))
    return output


# --- Scan and stability commands ---


def scan_grid(zeta_min: float, zeta_max: float, points: int, log_spaced: bool) -> list[float]:
    if not (0 < zeta_min <= zeta_max) or points < 1:
        raise DomainError(
            "Scan range must satisfy 0 < zeta_min <= zeta_max with at least one point.",
            {"zeta_min": zeta_min, "zeta_max": zeta_max, "points": points},
        )
    if log_spaced:
        return [float(z) for z in np.geomspace(zeta_min, zeta_max, points)]
    return [float(z) for z in np.linspace(zeta_min, zeta_max, points)]


def run_scan(
    config: RunConfig,
    zeta_min: float,
    zeta_max: float,
    points: int,
    log_spaced: bool = False,
) -> Path:
    """Scan zeta at the configured N and dt, measuring the error at t_end; writes scan.csv."""
    spec = build_spec(config)
    result = zeta_scan(spec, scan_grid(zeta_min, zeta_max, points, log_spaced), config.t_end)
    frame = pd.DataFrame(
        [[row.zeta, row.linf, row.error or ""] for row in result.rows],
        columns=["zeta", "linf", "error"],
    )
    output = Path(config.output_dir) / "scan.csv"
    save_to_csv(frame, output)
    print(tabulate(frame, headers="keys", tablefmt="github", showindex=False, floatfmt=".5g"))
    print(f"best zeta: {result.best_zeta:.6g}")
    return output


def run_stability(config: RunConfig, epsilon: float | None = None, phases: int = 256) -> Path:
    """Amplification moduli over `phases` equally spaced phases in [0, pi]; writes stability.csv."""
    if phases < 2:
        raise DomainError("At least two phases are needed.", {"phases": phases})
    spec = build_spec(config)
    constants = compute_basis_constants(spec.zeta, spec.grid.h)
    if epsilon is None:
        epsilon = default_epsilon(spec, constants)
    samples = amplification_factors(
        spec, constants, epsilon, np.linspace(0.0, math.pi, phases)
    )
    frame = pd.DataFrame([sample.model_dump() for sample in samples])[
        ["phase", "epsilon", "rho_momentum", "rho_constraint"]
    ]
    output = Path(config.output_dir) / "stability.csv"
    save_to_csv(frame, output)
    print(
        tabulate(
            [
                ["max |rho| momentum", frame["rho_momentum"].max()],
                ["max |rho| constraint", frame["rho_constraint"].max()],
                ["epsilon", epsilon],
            ],
            tablefmt="github",
            floatfmt=".15g",
        )
    )
    return output
