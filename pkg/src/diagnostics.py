import asyncio
import math
from typing import Iterable, Literal

import numpy as np

from src.custom_exceptions import (
    DomainError,
    GardnerSolverError,
    UnsupportedDiagnosticError,
)
from src.espline_basis import compute_basis_constants, compute_piece_coefficients
from src.models import (
    AmplificationSample,
    BasisConstants,
    ConservationReport,
    ErrorReport,
    ProblemSpec,
    SplineState,
    ZetaScanResult,
    ZetaScanRow,
)
from src.solver_core import (
    build_initial_state,
    evaluate_solution_array,
    nodal_values,
    observation_steps,
    run,
)
from src.utils import logger


QuadratureRule = Literal["gauss", "nodal"]


# --- Error norms ---


def linf_error(
    state: SplineState, spec: ProblemSpec, constants: BasisConstants | None = None
) -> ErrorReport:
    """
    Discrete maximum norm of u(x_m, t) - U_m over the nodes.

    Raises:
        UnsupportedDiagnosticError: If the problem has no analytical solution.
    """
    if spec.analytical is None:
        raise UnsupportedDiagnosticError(
            "Error norms need an analytical solution.", {"problem": spec.name}
        )
    if constants is None:
        constants = compute_basis_constants(spec.zeta, spec.grid.h)
    nodes = spec.grid.nodes
    U = nodal_values(state, constants).U
    errors = np.abs(np.asarray(spec.analytical(nodes, state.t), dtype=float) - U)
    node = int(np.argmax(errors))
    return ErrorReport(
        t=state.t, linf=float(errors[node]), argmax_node=node, argmax_x=float(nodes[node])
    )


def reduction_residual(state: SplineState, constants: BasisConstants) -> float:
    """max_m |U_x(x_m) - V(x_m)|, how far V has drifted from the derivative of U."""
    nodal = nodal_values(state, constants)
    return float(np.max(np.abs(nodal.Ux - nodal.V)))


# --- Conservation laws ---


def _relative_change(current: float, initial: float) -> tuple[float, bool]:
    if initial == 0.0:
        return abs(current - initial), True
    return abs((current - initial) / initial), False


def conservation(
    state: SplineState,
    spec: ProblemSpec,
    baseline: ConservationReport | None = None,
    quadrature: QuadratureRule = "gauss",
    points: int = 4,
) -> ConservationReport:
    """
    M = int u, E = int u^2, H = int (mu1 u^3/3 + mu2 u^4/6 - mu3 u_x^2) over [a, b].

    Args:
        state: Spline coefficients to integrate.
        spec: Problem the state belongs to.
        baseline: Report at t = 0; when given, C_M, C_E, C_H are filled in.
        quadrature: "gauss" integrates the spline with a per-element Gauss-Legendre rule;
            "nodal" is the sum h * sum_m f(U_m, U_x,m) over the N+1 nodes.
        points: Gauss-Legendre points per element (4 or 6).

    Returns:
        The report. Quantities with a zero baseline get an absolute change and are
        listed in `absolute_fallback`.
    """
    grid = spec.grid
    params = spec.params
    if quadrature == "gauss":
        if points not in (4, 6):
            raise DomainError("Unsupported Gauss-Legendre rule.", {"points": points})
        abscissae, weights = np.polynomial.legendre.leggauss(points)
        left = grid.nodes[:-1, None]
        xs = left + 0.5 * grid.h * (abscissae + 1.0)
        w = np.broadcast_to(0.5 * grid.h * weights, xs.shape)
        coeffs = compute_piece_coefficients(spec.zeta, grid.h)
        u, ux, _ = evaluate_solution_array(state, xs, coeffs, grid)
    elif quadrature == "nodal":
        constants = compute_basis_constants(spec.zeta, grid.h)
        nodal = nodal_values(state, constants)
        u, ux = nodal.U, nodal.Ux
        w = np.full(u.shape, grid.h)
    else:
        raise DomainError("Unknown quadrature rule.", {"quadrature": quadrature})

    M = float(np.sum(w * u))
    E = float(np.sum(w * u**2))
    H = float(
        np.sum(w * (params.mu1 * u**3 / 3.0 + params.mu2 * u**4 / 6.0 - params.mu3 * ux**2))
    )
    if baseline is None:
        return ConservationReport(t=state.t, M=M, E=E, H=H)

    changes: dict[str, float] = {}
    fallback: list[str] = []
    for name, current, initial in (
        ("M", M, baseline.M),
        ("E", E, baseline.E),
        ("H", H, baseline.H),
    ):
        change, absolute = _relative_change(current, initial)
        changes[f"C_{name}"] = change
        if absolute:
            logger.warning(f"Baseline {name} is zero at t={state.t:.6g}; reporting absolute change.")
            fallback.append(name)
    return ConservationReport(
        t=state.t, M=M, E=E, H=H, absolute_fallback=tuple(fallback), **changes
    )


# --- Von Neumann analysis ---


def default_epsilon(spec: ProblemSpec, constants: BasisConstants) -> float:
    """max_m |U_m + U_m^2| of the initial state, the frozen value of the nonlinear factor."""
    U = nodal_values(build_initial_state(spec, constants), constants).U
    return float(np.max(np.abs(U + U**2)))


def amplification_pair(
    constants: BasisConstants, epsilon: float, phase: float, dt: float, mu3: float
) -> tuple[complex, complex]:
    """
    Complex amplification factors of the frozen-coefficient scheme for one Fourier mode.

    The momentum factor is (S^2 - i Theta)/(S^2 + i Theta) and the constraint factor is
    (S + i Z)/(-S - i Z) with S = 1 + 2 alpha1 cos(phase), Z = 2 beta1 sin(phase),
    Theta = (q/2) dt (epsilon S + mu3 G), q = -2 beta1 sin(phase),
    G = gamma2 + 2 gamma1 cos(phase).
    """
    c = constants
    cos_phase = math.cos(phase)
    sin_phase = math.sin(phase)
    S = c.alpha2 + 2.0 * c.alpha1 * cos_phase
    q = -2.0 * c.beta1 * sin_phase
    G = c.gamma2 + 2.0 * c.gamma1 * cos_phase
    theta = 0.5 * q * dt * (epsilon * S + mu3 * G)
    momentum = complex(S * S, -theta) / complex(S * S, theta)
    Z = 2.0 * c.beta1 * sin_phase
    constraint = complex(S, Z) / complex(-S, -Z)
    return momentum, constraint


def amplification_factors(
    spec: ProblemSpec,
    constants: BasisConstants,
    epsilon: float,
    phases: Iterable[float],
) -> list[AmplificationSample]:
    """
    Moduli of both amplification factors over the given phases.

    Raises:
        DomainError: If a phase lies outside [0, pi].
    """
    samples = []
    for phase in phases:
        if not 0.0 <= phase <= math.pi + 1e-12:
            raise DomainError("Phase must lie in [0, pi].", {"phase": phase})
        momentum, constraint = amplification_pair(
            constants, epsilon, phase, spec.dt, spec.params.mu3
        )
        samples.append(
            AmplificationSample(
                phase=phase,
                epsilon=epsilon,
                rho_momentum=abs(momentum),
                rho_constraint=abs(constraint),
            )
        )
    return samples


# --- Spline parameter scan ---


def _errors_for_zeta(spec_template: ProblemSpec, zeta: float, times: list[float]) -> dict[float, float]:
    spec = spec_template.model_copy(update={"zeta": zeta, "t_end": max(times)})
    constants = compute_basis_constants(zeta, spec.grid.h)
    errors: dict[float, float] = {}
    wanted = observation_steps(times, spec.dt)

    def record(state: SplineState) -> None:
        errors[wanted[state.step_index]] = linf_error(state, spec, constants).linf

    run(spec, [record], observe_times=times, constants=constants)
    return errors


async def scan_zeta_errors_async(
    spec_template: ProblemSpec, zeta_grid: Iterable[float], times: Iterable[float]
) -> list[ZetaScanRow]:
    """
    One solver run per zeta, each in a worker thread, observed at every time in `times`.

    Failed runs produce a row with `error` set instead of aborting the scan.
    """
    zetas = sorted(set(float(z) for z in zeta_grid))
    times = sorted(set(float(t) for t in times))
    if not zetas:
        raise DomainError("Zeta grid is empty.")
    if any(not (z > 0 and math.isfinite(z)) for z in zetas):
        raise DomainError("Zeta values must be positive.", {"zeta_grid": zetas})
    if not times:
        raise DomainError("No observation time given.")
    # colliding times are rejected here, before any worker starts
    observation_steps(times, spec_template.dt)
    if spec_template.analytical is None:
        raise UnsupportedDiagnosticError(
            "Zeta scan needs an analytical solution.", {"problem": spec_template.name}
        )

    logger.info(f"Starting zeta scan over {len(zetas)} values at t={times}")
    tasks = [asyncio.to_thread(_errors_for_zeta, spec_template, z, times) for z in zetas]
    results = await asyncio.gather(*tasks, return_exceptions=True)

    rows: list[ZetaScanRow] = []
    for zeta, result in zip(zetas, results):
        if isinstance(result, Exception):
            logger.warning(f"Scan point zeta={zeta} failed. Error: {result}")
            rows.append(ZetaScanRow(zeta=zeta, error=str(result)))
            continue
        rows.append(
            ZetaScanRow(zeta=zeta, linf=result[times[-1]], linf_by_time=result)
        )
    return rows


def scan_zeta_errors(
    spec_template: ProblemSpec, zeta_grid: Iterable[float], times: Iterable[float]
) -> list[ZetaScanRow]:
    return asyncio.run(scan_zeta_errors_async(spec_template, zeta_grid, times))


def best_row(rows: list[ZetaScanRow], metric_time: float) -> ZetaScanRow:
    """Row with the smallest error at metric_time; ties go to the smaller zeta."""
    candidates = [row for row in rows if metric_time in row.linf_by_time]
    if not candidates:
        raise GardnerSolverError("Every scan point failed.", {"points": len(rows)})
    return min(candidates, key=lambda row: (row.linf_by_time[metric_time], row.zeta))


def zeta_scan(
    spec_template: ProblemSpec, zeta_grid: Iterable[float], metric_time: float
) -> ZetaScanResult:
    """
    Run the solver once per zeta and pick the value with the smallest L-infinity error.

    Raises:
        UnsupportedDiagnosticError: If the problem has no analytical solution.
        DomainError: If the grid is empty or holds a non-positive value.
        GardnerSolverError: If every scan point failed.
    """
    metric_time = float(metric_time)
    rows = scan_zeta_errors(spec_template, zeta_grid, [metric_time])
    best = best_row(rows, metric_time)
    logger.info(f"Best zeta {best.zeta:.6g} with L-infinity error {best.linf:.6e}")
    return ZetaScanResult(best_zeta=best.zeta, metric_time=metric_time, rows=rows)
