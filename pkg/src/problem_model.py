import math
from typing import Callable

import numpy as np
from pydantic import ValidationError

from src.custom_exceptions import DomainError, ExpressionError
from src.expressions import compile_expression
from src.models import EXPERIMENT_DEFAULTS, GardnerParameters, Grid, ProblemSpec
from src.utils import logger


SQRT14 = math.sqrt(14.0)
KINK_WAVENUMBER = math.sqrt(30.0) / 60.0


def make_grid(a: float, b: float, N: int) -> Grid:
    """
    Uniform grid x_m = a + m*h, m = 0..N.

    Raises:
        DomainError: If a >= b or N < 4.
    """
    try:
        return Grid(a=a, b=b, N=N)
    except ValidationError as e:
        logger.error(f"Rejected grid a={a}, b={b}, N={N}. Error: {e}")
        raise DomainError("Invalid grid.", {"a": a, "b": b, "N": N}) from e


# --- Example 1: positive pulse ---


def _pulse_phase(x, t):
    return -np.asarray(x, dtype=float) / 3.0 + 5.0 / 3.0 + t / 27.0


def example1_solution(x, t: float) -> np.ndarray:
    return 2.0 / (12.0 + 3.0 * SQRT14 * np.cosh(_pulse_phase(x, t)))


def example1_derivative(x, t: float) -> np.ndarray:
    theta = _pulse_phase(x, t)
    denominator = 12.0 + 3.0 * SQRT14 * np.cosh(theta)
    return 2.0 * SQRT14 * np.sinh(theta) / denominator**2


def example1_spec(
    N: int = 100, dt: float = 0.1, zeta: float = 1.0, t_end: float | None = None
) -> ProblemSpec:
    """Single soliton of u_t + 4 u u_x - 3 u^2 u_x + u_xxx = 0 on [-20, 30]."""
    return ProblemSpec(
        name="example1",
        params=GardnerParameters(mu1=4.0, mu2=-3.0, mu3=1.0),
        grid=make_grid(-20.0, 30.0, N),
        dt=dt,
        zeta=zeta,
        t_end=EXPERIMENT_DEFAULTS["example1"]["t_end"] if t_end is None else t_end,
        initial_u=lambda x: example1_solution(x, 0.0),
        initial_v=lambda x: example1_derivative(x, 0.0),
        analytical=example1_solution,
    )


# --- Example 2: kink ---


def example2_solution(x, t: float) -> np.ndarray:
    shifted = np.asarray(x, dtype=float) - t / 30.0
    return 0.1 - 0.1 * np.tanh(KINK_WAVENUMBER * shifted)


def example2_derivative(x, t: float) -> np.ndarray:
    shifted = np.asarray(x, dtype=float) - t / 30.0
    return -0.1 * KINK_WAVENUMBER / np.cosh(KINK_WAVENUMBER * shifted) ** 2


def example2_spec(
    N: int = 100, dt: float = 0.1, zeta: float = 1.0, t_end: float | None = None
) -> ProblemSpec:
    """Kink of u_t + u u_x - 5 u^2 u_x + u_xxx = 0 on [-80, 80]."""
    return ProblemSpec(
        name="example2",
        params=GardnerParameters(mu1=1.0, mu2=-5.0, mu3=1.0),
        grid=make_grid(-80.0, 80.0, N),
        dt=dt,
        zeta=zeta,
        t_end=EXPERIMENT_DEFAULTS["example2"]["t_end"] if t_end is None else t_end,
        initial_u=lambda x: example2_solution(x, 0.0),
        initial_v=lambda x: example2_derivative(x, 0.0),
        analytical=example2_solution,
    )


# --- Example 3: pulse that breaks into waves ---


def example3_initial(x) -> np.ndarray:
    theta = np.asarray(x, dtype=float) / 3.0 - 5.0 / 3.0
    return 10.0 / (3.0 * (4.0 + SQRT14 * np.cosh(theta)))


def example3_initial_derivative(x) -> np.ndarray:
    theta = np.asarray(x, dtype=float) / 3.0 - 5.0 / 3.0
    denominator = 4.0 + SQRT14 * np.cosh(theta)
    return -(10.0 * SQRT14 / 9.0) * np.sinh(theta) / denominator**2


def example3_spec(
    N: int = 200, dt: float = 0.1, zeta: float = 1.0, t_end: float | None = None
) -> ProblemSpec:
    """Pulse on [-40, 60] under u_t + 10 u u_x - 3 u^2 u_x + u_xxx = 0; no closed-form solution."""
    return ProblemSpec(
        name="example3",
        params=GardnerParameters(mu1=10.0, mu2=-3.0, mu3=1.0),
        grid=make_grid(-40.0, 60.0, N),
        dt=dt,
        zeta=zeta,
        t_end=EXPERIMENT_DEFAULTS["example3"]["t_end"] if t_end is None else t_end,
        initial_u=example3_initial,
        initial_v=example3_initial_derivative,
    )


EXAMPLE_BUILDERS: dict[str, Callable[..., ProblemSpec]] = {
    "example1": example1_spec,
    "example2": example2_spec,
    "example3": example3_spec,
}


def example_spec(
    name: str,
    N: int | None = None,
    dt: float = 0.1,
    zeta: float = 1.0,
    t_end: float | None = None,
) -> ProblemSpec:
    if name not in EXAMPLE_BUILDERS:
        raise DomainError("Unknown example.", {"name": name})
    if N is None:
        N = int(EXPERIMENT_DEFAULTS[name]["N"])
    return EXAMPLE_BUILDERS[name](N=N, dt=dt, zeta=zeta, t_end=t_end)


# --- User-supplied initial data ---


def finite_difference_derivative(
    func: Callable[[np.ndarray], np.ndarray], grid: Grid
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Fourth-order derivative of `func` with step h.

    Centred five-point stencil in the interior, one-sided five-point stencils within 2h
    of either end so `func` is never sampled outside [a, b].
    """
    h = grid.h

    def derivative(xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        near_left = xs - 2.0 * h < grid.a - 1e-12 * h
        near_right = (xs + 2.0 * h > grid.b + 1e-12 * h) & ~near_left
        centred = ~(near_left | near_right)
        result = np.empty_like(xs)

        def f(points: np.ndarray, offset: int) -> np.ndarray:
            return np.asarray(func(points + offset * h), dtype=float) + np.zeros_like(points)

        points = xs[centred]
        result[centred] = (
            f(points, -2) - 8.0 * f(points, -1) + 8.0 * f(points, 1) - f(points, 2)
        ) / (12.0 * h)
        points = xs[near_left]
        result[near_left] = (
            -25.0 * f(points, 0)
            + 48.0 * f(points, 1)
            - 36.0 * f(points, 2)
            + 16.0 * f(points, 3)
            - 3.0 * f(points, 4)
        ) / (12.0 * h)
        points = xs[near_right]
        result[near_right] = (
            25.0 * f(points, 0)
            - 48.0 * f(points, -1)
            + 36.0 * f(points, -2)
            - 16.0 * f(points, -3)
            + 3.0 * f(points, -4)
        ) / (12.0 * h)
        return result

    return derivative


def custom_spec(
    a: float,
    b: float,
    N: int,
    dt: float,
    zeta: float,
    t_end: float,
    mu1: float,
    mu2: float,
    mu3: float,
    initial_expression: str,
) -> ProblemSpec:
    """
    Problem with a user expression for u(x, 0) and a finite-difference v(x, 0).

    Raises:
        ExpressionError: If the expression cannot be compiled or is not finite on the grid.
        DomainError: If the grid is invalid.
    """
    grid = make_grid(a, b, N)
    initial_u = compile_expression(initial_expression)
    if not np.all(np.isfinite(initial_u(grid.nodes))):
        raise ExpressionError(
            "Initial condition is not finite on the grid.",
            {"expression": initial_expression},
        )
    logger.info(f"Custom problem on [{a}, {b}] with N={N}: u(x,0) = {initial_expression}")
    return ProblemSpec(
        name="custom",
        params=GardnerParameters(mu1=mu1, mu2=mu2, mu3=mu3),
        grid=grid,
        dt=dt,
        zeta=zeta,
        t_end=t_end,
        initial_u=initial_u,
        initial_v=finite_difference_derivative(initial_u, grid),
        derivative_source="finite_difference",
    )
