"""
Crank-Nicolson collocation stepper for the order-reduced Gardner system

    u_t + mu1 u u_x + mu2 u^2 u_x + mu3 v_xx = 0,    v - u_x = 0,

with U = sum delta_m B_m and V = sum phi_m B_m. Products are linearised about level n
(U^n, V^n frozen per node), so each step is one banded solve of size 2N+2 with unknowns
interleaved as (delta_0, phi_0, ..., delta_N, phi_N).

The ghost coefficients c_{-1}, c_{N+1} are eliminated through a boundary closure:

    extrapolated  delta_{-1} = 2 delta_0 - delta_1,        phi_{-1} = 2 phi_0 - phi_1,
                  delta_{N+1} = 2 delta_N - delta_{N-1},   phi_{N+1} = 3 phi_N - 3 phi_{N-1} + phi_{N-2}
    neumann       c_{-1} = c_1, c_{N+1} = c_{N-1} for both families

Under the neumann fold the odd-even mode of delta has zero nodal slope, so nothing
damps it and the boundary rows feed it linearly in time; the extrapolated closure
keeps it bounded.
"""

from typing import Callable, Iterable, Literal

import numpy as np

from src.banded import banded_matvec, solve_banded_checked, solve_banded_no_pivot
from src.custom_exceptions import DomainError, NumericalBreakdownError, ZeroPivotError
from src.espline_basis import basis_values, compute_basis_constants
from src.models import (
    BandedSystem,
    BasisConstants,
    BoundaryClosure,
    Grid,
    NodalValues,
    ProblemSpec,
    SplinePieceCoefficients,
    SplineState,
)
from src.utils import logger


# (lower, upper) bandwidth of the interleaved step matrices
BANDWIDTHS: dict[str, tuple[int, int]] = {"extrapolated": (4, 3), "neumann": (3, 3)}
INTERPOLATION_BANDWIDTH = 2
PIVOT_TOLERANCE = 1e-14

Observer = Callable[[SplineState], None]
Family = Literal["delta", "phi"]
GhostMap = tuple[np.ndarray, np.ndarray]


# --- Nodal values ---


def _three_term(coefficients: np.ndarray, left: float, centre: float, right: float) -> np.ndarray:
    return left * coefficients[:-2] + centre * coefficients[1:-1] + right * coefficients[2:]


def nodal_values(state: SplineState, constants: BasisConstants) -> NodalValues:
    c = constants
    return NodalValues(
        U=_three_term(state.delta, c.alpha1, c.alpha2, c.alpha1),
        Ux=_three_term(state.delta, c.beta1, 0.0, c.beta2),
        Uxx=_three_term(state.delta, c.gamma1, c.gamma2, c.gamma1),
        V=_three_term(state.phi, c.alpha1, c.alpha2, c.alpha1),
        Vx=_three_term(state.phi, c.beta1, 0.0, c.beta2),
        Vxx=_three_term(state.phi, c.gamma1, c.gamma2, c.gamma1),
    )


# --- Boundary closure ---


def ghost_map(N: int, closure: BoundaryClosure, family: Family) -> GhostMap:
    """
    Extended coefficients c_{-1..N+1} as combinations of the interior c_{0..N}.

    Returns:
        (targets, weights), both of shape (N+3, 3): entry k of the extended vector is
        sum_j weights[k, j] * c[targets[k, j]]. Unused slots carry weight zero.
    """
    targets = np.zeros((N + 3, 3), dtype=int)
    weights = np.zeros((N + 3, 3))
    targets[1:-1, 0] = np.arange(N + 1)
    weights[1:-1, 0] = 1.0
    if closure == "neumann":
        left = ([1], [1.0])
        right = ([N - 1], [1.0])
    else:
        left = ([0, 1], [2.0, -1.0])
        if family == "phi":
            right = ([N, N - 1, N - 2], [3.0, -3.0, 1.0])
        else:
            right = ([N, N - 1], [2.0, -1.0])
    for row, (columns, row_weights) in ((0, left), (N + 2, right)):
        targets[row, : len(columns)] = columns
        weights[row, : len(row_weights)] = row_weights
    return targets, weights


def _with_ghosts(interior: np.ndarray, closure: BoundaryClosure, family: Family) -> np.ndarray:
    targets, weights = ghost_map(interior.size - 1, closure, family)
    return np.sum(weights * interior[targets], axis=1)


def _scatter(
    ab: np.ndarray,
    upper: int,
    rows: np.ndarray,
    extended: np.ndarray,
    coef: np.ndarray,
    ghosts: GhostMap,
    column: Callable[[np.ndarray], np.ndarray],
) -> None:
    """ab[row, column(c)] += coef * weight for every interior c behind extended index."""
    targets, weights = ghosts
    coef = np.broadcast_to(coef, rows.shape)
    for slot in range(targets.shape[1]):
        weight = weights[extended, slot]
        used = weight != 0.0
        columns = column(targets[extended, slot][used])
        np.add.at(ab, (upper + rows[used] - columns, columns), coef[used] * weight[used])


# --- Initial state ---


def _interpolate(
    values: np.ndarray, constants: BasisConstants, closure: BoundaryClosure, family: Family
) -> np.ndarray:
    """Coefficients c_{-1..N+1} whose spline takes `values` at every node."""
    N = values.size - 1
    width = INTERPOLATION_BANDWIDTH
    ghosts = ghost_map(N, closure, family)
    rows = np.arange(N + 1)
    ab = np.zeros((2 * width + 1, N + 1))
    for offset, weight in ((-1, constants.alpha1), (0, constants.alpha2), (1, constants.alpha1)):
        _scatter(ab, width, rows, rows + offset + 1, np.full(N + 1, weight), ghosts, lambda j: j)
    return _with_ghosts(solve_banded_checked(ab, width, width, values), closure, family)


def build_initial_state(spec: ProblemSpec, constants: BasisConstants) -> SplineState:
    """
    Coefficients at t = 0 interpolating u(x, 0) and v(x, 0) at every node.

    Raises:
        InitializationError: If either interpolation system is singular.
    """
    nodes = spec.grid.nodes
    u0 = np.asarray(spec.initial_u(nodes), dtype=float) + np.zeros_like(nodes)
    v0 = np.asarray(spec.initial_v(nodes), dtype=float) + np.zeros_like(nodes)
    delta = _interpolate(u0, constants, spec.boundary, "delta")
    phi = _interpolate(v0, constants, spec.boundary, "phi")
    logger.debug(f"Initial state for {spec.name}: max|delta|={np.max(np.abs(delta)):.6e}")
    return SplineState(t=0.0, delta=delta, phi=phi, step_index=0)


# --- Assembly ---


def assemble_step(
    state: SplineState,
    spec: ProblemSpec,
    constants: BasisConstants,
    dt: float | None = None,
) -> BandedSystem:
    """
    Matrices A and B of A x^{n+1} = B x^n for the current level.

    Row 2m collocates the momentum equation at x_m, row 2m+1 the relation v = u_x.
    Ghost columns are eliminated through spec.boundary.
    """
    dt = spec.dt if dt is None else dt
    c = constants
    mu1, mu2, mu3 = spec.params.mu1, spec.params.mu2, spec.params.mu3
    N = state.N
    size = 2 * N + 2
    lower, upper = BANDWIDTHS[spec.boundary]
    delta_ghosts = ghost_map(N, spec.boundary, "delta")
    phi_ghosts = ghost_map(N, spec.boundary, "phi")

    nodal = nodal_values(state, constants)
    K = nodal.U
    L = nodal.V
    P = 2.0 / dt + mu1 * L + 2.0 * mu2 * K * L
    Q = mu1 * K + mu2 * K**2
    R = 2.0 / dt + mu2 * K * L

    m = np.arange(N + 1)
    momentum_row = 2 * m
    constraint_row = 2 * m + 1
    ones = np.ones(N + 1)

    # (neighbour offset, delta coefficient, phi coefficient) per row kind
    a_momentum = [
        (-1, P * c.alpha1 + Q * c.beta1, mu3 * c.gamma1 * ones),
        (0, P * c.alpha2, mu3 * c.gamma2 * ones),
        (1, P * c.alpha1 + Q * c.beta2, mu3 * c.gamma1 * ones),
    ]
    b_momentum = [
        (-1, R * c.alpha1, -mu3 * c.gamma1 * ones),
        (0, R * c.alpha2, -mu3 * c.gamma2 * ones),
        (1, R * c.alpha1, -mu3 * c.gamma1 * ones),
    ]
    a_constraint = [
        (-1, -c.beta1 * ones, c.alpha1 * ones),
        (0, 0.0 * ones, c.alpha2 * ones),
        (1, -c.beta2 * ones, c.alpha1 * ones),
    ]

    def delta_column(j: np.ndarray) -> np.ndarray:
        return 2 * j

    def phi_column(j: np.ndarray) -> np.ndarray:
        return 2 * j + 1

    def bands(momentum, constraint_sign: float) -> np.ndarray:
        ab = np.zeros((lower + upper + 1, size))
        for rows, terms, sign in (
            (momentum_row, momentum, 1.0),
            (constraint_row, a_constraint, constraint_sign),
        ):
            for offset, delta_coef, phi_coef in terms:
                extended = m + offset + 1
                _scatter(ab, upper, rows, extended, sign * delta_coef, delta_ghosts, delta_column)
                _scatter(ab, upper, rows, extended, sign * phi_coef, phi_ghosts, phi_column)
        return ab

    return BandedSystem(
        size=size,
        lower_bandwidth=lower,
        upper_bandwidth=upper,
        a_bands=bands(a_momentum, 1.0),
        b_bands=bands(b_momentum, -1.0),
    )


def interleave(state: SplineState) -> np.ndarray:
    """(delta_0, phi_0, ..., delta_N, phi_N) without the ghost entries."""
    x = np.empty(2 * (state.N + 1))
    x[0::2] = state.delta[1:-1]
    x[1::2] = state.phi[1:-1]
    return x


# --- Time stepping ---


def step(
    state: SplineState,
    spec: ProblemSpec,
    constants: BasisConstants,
    dt: float | None = None,
) -> SplineState:
    """
    Advance one Crank-Nicolson step.

    `dt` overrides spec.dt; a negative value steps backwards in time.

    Raises:
        DomainError: If the step would overshoot t_end by more than half a step.
        NumericalBreakdownError: On a near-zero pivot or a non-finite solution.
    """
    dt = spec.dt if dt is None else dt
    if state.t + dt > spec.t_end + 0.5 * abs(dt):
        raise DomainError(
            "Step would pass the end time.", {"t": state.t, "dt": dt, "t_end": spec.t_end}
        )
    step_index = state.step_index + 1
    system = assemble_step(state, spec, constants, dt)
    lower, upper = system.lower_bandwidth, system.upper_bandwidth
    rhs = banded_matvec(system.b_bands, lower, upper, interleave(state))
    try:
        solution = solve_banded_no_pivot(system.a_bands, lower, upper, rhs, PIVOT_TOLERANCE)
    except ZeroPivotError as e:
        logger.error(f"Breakdown at step {step_index} (t={state.t + dt:.6g}). Error: {e}")
        raise NumericalBreakdownError(
            "Linear system became singular.", step_index, e.pivot_row, e.pivot
        ) from e
    if not np.all(np.isfinite(solution)):
        logger.error(f"Non-finite coefficients at step {step_index}.")
        raise NumericalBreakdownError("Solution is not finite.", step_index)

    return SplineState(
        t=state.t + dt,
        delta=_with_ghosts(solution[0::2], spec.boundary, "delta"),
        phi=_with_ghosts(solution[1::2], spec.boundary, "phi"),
        step_index=step_index,
    )


def observation_steps(times: Iterable[float], dt: float) -> dict[int, float]:
    """
    Map observation times to step indices round(t / dt).

    Repeated times collapse to one entry.

    Raises:
        DomainError: If two different times fall on the same step.
    """
    steps: dict[int, float] = {}
    for t in sorted({float(t) for t in times}):
        index = int(round(t / dt))
        if index in steps:
            raise DomainError(
                "Two observation times fall on the same step.",
                {"times": [steps[index], t], "step": index, "dt": dt},
            )
        steps[index] = t
    return steps


def run(
    spec: ProblemSpec,
    observers: Iterable[Observer] = (),
    observe_times: Iterable[float] | None = None,
    constants: BasisConstants | None = None,
) -> SplineState:
    """
    Integrate from t = 0 to spec.t_end in round(t_end / dt) steps.

    Args:
        spec: Problem to solve.
        observers: Callables receiving each observed state.
        observe_times: Times at which observers fire, rounded to the nearest step.
            None means the initial state and every step.
        constants: Precomputed basis constants for (spec.zeta, spec.grid.h).

    Returns:
        The final state.

    Raises:
        NumericalBreakdownError: Propagated from step, carrying the failing step index.
        DomainError: If two different observe_times fall on the same step.
    """
    observers = list(observers)
    if constants is None:
        constants = compute_basis_constants(spec.zeta, spec.grid.h)
    num_steps = spec.num_steps
    if observe_times is None:
        observed_steps = set(range(num_steps + 1))
    else:
        observed_steps = set(observation_steps(observe_times, spec.dt))

    def notify(state: SplineState) -> None:
        if state.step_index in observed_steps:
            for observer in observers:
                observer(state)

    logger.info(
        f"Running {spec.name}: N={spec.grid.N}, dt={spec.dt}, zeta={spec.zeta}, "
        f"boundary={spec.boundary}, t_end={spec.t_end} ({num_steps} steps)"
    )
    state = build_initial_state(spec, constants)
    notify(state)
    for _ in range(num_steps):
        try:
            state = step(state, spec, constants)
        except NumericalBreakdownError:
            logger.error(f"Run {spec.name} stopped after {state.step_index} completed steps.")
            raise
        logger.debug(f"Step {state.step_index} done, t={state.t:.6g}")
        notify(state)
    logger.info(f"Run {spec.name} finished at t={state.t:.6g}")
    return state


# --- Dense output ---


def evaluate_solution_array(
    state: SplineState, xs: np.ndarray, coeffs: SplinePieceCoefficients, grid: Grid
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    U, U_x and V at arbitrary points of [a, b] from the four basis functions supported there.

    Raises:
        DomainError: If any point lies outside [a, b].
    """
    xs = np.asarray(xs, dtype=float)
    slack = 1e-12 * (grid.b - grid.a)
    if np.any(xs < grid.a - slack) or np.any(xs > grid.b + slack):
        raise DomainError(
            "Evaluation point outside the domain.",
            {"min_x": float(np.min(xs)), "max_x": float(np.max(xs)), "a": grid.a, "b": grid.b},
        )
    h = grid.h
    element = np.clip(np.floor((xs - grid.a) / h).astype(int), 0, grid.N - 1)
    # basis indices m = j-1 .. j+2 live at delta[m + 1]
    indices = element[..., None] + np.arange(-1, 3)
    offsets = xs[..., None] - (grid.a + indices * h)
    values, slopes, _ = basis_values(offsets, coeffs)
    delta = state.delta[indices + 1]
    phi = state.phi[indices + 1]
    return (
        np.sum(delta * values, axis=-1),
        np.sum(delta * slopes, axis=-1),
        np.sum(phi * values, axis=-1),
    )


def evaluate_solution(
    state: SplineState, x: float, coeffs: SplinePieceCoefficients, grid: Grid
) -> tuple[float, float, float]:
    U, Ux, V = evaluate_solution_array(state, np.array([x]), coeffs, grid)
    return float(U[0]), float(Ux[0]), float(V[0])
