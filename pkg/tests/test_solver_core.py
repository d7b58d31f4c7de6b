import numpy as np
import pytest

from src.banded import banded_to_dense
from src.custom_exceptions import DomainError, NumericalBreakdownError
from src.diagnostics import reduction_residual
from src.espline_basis import compute_basis_constants, compute_piece_coefficients
from src.models import BasisConstants, GardnerParameters, ProblemSpec, SplineState
from src.problem_model import example1_spec, make_grid
from src.solver_core import (
    assemble_step,
    build_initial_state,
    evaluate_solution,
    evaluate_solution_array,
    interleave,
    nodal_values,
    observation_steps,
    run,
    step,
)


# ghost relations as (ghost index, [(interior index, weight), ...]) per closure and family
def ghost_relations(N: int, closure: str) -> dict[str, list]:
    if closure == "neumann":
        pair = [(-1, [(1, 1.0)]), (N + 1, [(N - 1, 1.0)])]
        return {"delta": pair, "phi": pair}
    return {
        "delta": [(-1, [(0, 2.0), (1, -1.0)]), (N + 1, [(N, 2.0), (N - 1, -1.0)])],
        "phi": [(-1, [(0, 2.0), (1, -1.0)]), (N + 1, [(N, 3.0), (N - 1, -3.0), (N - 2, 1.0)])],
    }


def with_ghosts(values: np.ndarray, relations: list) -> np.ndarray:
    extended = np.concatenate(([0.0], values, [0.0]))
    for ghost, terms in relations:
        extended[ghost + 1] = sum(weight * values[k] for k, weight in terms)
    return extended


def dense_step(state: SplineState, spec: ProblemSpec, c: BasisConstants) -> tuple[np.ndarray, np.ndarray]:
    """
    Reference step on all 2N+6 coefficients, ghosts included, with the boundary
    relations as four extra equations and a dense solve.
    """
    N = state.N
    n = N + 3
    mu1, mu2, mu3 = spec.params.mu1, spec.params.mu2, spec.params.mu3
    dt = spec.dt
    size = 2 * n
    A = np.zeros((size, size))
    B = np.zeros((size, size))

    def d(k):  # column of delta_k, k = -1..N+1
        return k + 1

    def p(k):
        return n + k + 1

    for m in range(N + 1):
        K = c.alpha1 * state.delta[m] + state.delta[m + 1] + c.alpha1 * state.delta[m + 2]
        L = c.alpha1 * state.phi[m] + state.phi[m + 1] + c.alpha1 * state.phi[m + 2]
        P = 2 / dt + mu1 * L + 2 * mu2 * K * L
        Q = mu1 * K + mu2 * K**2
        R = 2 / dt + mu2 * K * L
        row = 2 * m
        for k, value, slope, curvature in (
            (m - 1, c.alpha1, c.beta1, c.gamma1),
            (m, c.alpha2, 0.0, c.gamma2),
            (m + 1, c.alpha1, c.beta2, c.gamma1),
        ):
            A[row, d(k)] = P * value + Q * slope
            A[row, p(k)] = mu3 * curvature
            B[row, d(k)] = R * value
            B[row, p(k)] = -mu3 * curvature
            # v - u_x = 0 at x_m
            A[row + 1, d(k)] = -slope
            A[row + 1, p(k)] = value
            B[row + 1, d(k)] = slope
            B[row + 1, p(k)] = -value

    relations = ghost_relations(N, spec.boundary)
    row = 2 * N + 2
    for column, family in ((d, "delta"), (p, "phi")):
        for ghost, terms in relations[family]:
            A[row, column(ghost)] = 1.0
            for k, weight in terms:
                A[row, column(k)] -= weight
            row += 1

    x = np.concatenate((state.delta, state.phi))
    solution = np.linalg.solve(A, B @ x)
    return solution[:n], solution[n:]


@pytest.fixture
def pulse_spec():
    return ProblemSpec(
        name="pulse",
        params=GardnerParameters(mu1=4.0, mu2=-3.0, mu3=1.0),
        grid=make_grid(0.0, 10.0, 16),
        dt=0.1,
        zeta=1.0,
        t_end=1.0,
        initial_u=lambda x: 0.1 * np.exp(-((x - 5.0) ** 2)),
        initial_v=lambda x: -0.2 * (x - 5.0) * np.exp(-((x - 5.0) ** 2)),
    )


# --- Nodal values ---


def test_nodal_values_of_a_unit_coefficient():
    c = compute_basis_constants(1.0, 0.5)
    delta = np.zeros(11)
    delta[5] = 1.0  # basis function m = 4
    state = SplineState(t=0.0, delta=delta, phi=np.zeros(11))

    nodal = nodal_values(state, c)

    assert nodal.U.size == 9
    np.testing.assert_allclose(nodal.U[3:6], [c.alpha1, 1.0, c.alpha1])
    # rising to the left of the centre, falling to the right
    np.testing.assert_allclose(nodal.Ux[3:6], [c.beta2, 0.0, c.beta1])
    np.testing.assert_allclose(nodal.Uxx[3:6], [c.gamma1, c.gamma2, c.gamma1])
    assert np.count_nonzero(nodal.U) == 3
    np.testing.assert_array_equal(nodal.V, 0.0)


def test_state_is_read_only():
    state = SplineState(t=0.0, delta=np.zeros(9), phi=np.zeros(9))

    with pytest.raises(ValueError):
        state.delta[0] = 1.0


# --- Initial state ---


def test_initial_state_of_a_constant(constant_spec, constants_for):
    spec = constant_spec(c0=0.3)
    c = constants_for(spec)

    state = build_initial_state(spec, c)

    np.testing.assert_allclose(state.delta, 0.3 / (1.0 + 2.0 * c.alpha1), rtol=1e-12)
    np.testing.assert_allclose(state.phi, 0.0, atol=1e-15)
    assert state.t == 0.0
    assert state.delta.size == spec.grid.N + 3


@pytest.mark.parametrize("closure", ["extrapolated", "neumann"])
def test_initial_state_interpolates_at_every_node(small_example1, constants_for, closure):
    spec = small_example1.model_copy(update={"boundary": closure})
    c = constants_for(spec)
    nodes = spec.grid.nodes

    state = build_initial_state(spec, c)
    nodal = nodal_values(state, c)

    np.testing.assert_allclose(nodal.U, spec.initial_u(nodes), atol=1e-12)
    np.testing.assert_allclose(nodal.V, spec.initial_v(nodes), atol=1e-12)
    relations = ghost_relations(spec.grid.N, closure)
    np.testing.assert_allclose(state.delta, with_ghosts(state.delta[1:-1], relations["delta"]), atol=1e-15)
    np.testing.assert_allclose(state.phi, with_ghosts(state.phi[1:-1], relations["phi"]), atol=1e-15)


def test_neumann_start_has_zero_nodal_slope_at_the_ends(small_example1, constants_for):
    spec = small_example1.model_copy(update={"boundary": "neumann"})
    c = constants_for(spec)

    nodal = nodal_values(build_initial_state(spec, c), c)

    assert nodal.Ux[0] == pytest.approx(0.0, abs=1e-14)
    assert nodal.Ux[-1] == pytest.approx(0.0, abs=1e-14)


# --- Assembly ---


def test_assembly_of_the_zero_state(pulse_spec, constants_for):
    c = constants_for(pulse_spec)
    zero = SplineState(t=0.0, delta=np.zeros(19), phi=np.zeros(19))

    system = assemble_step(zero, pulse_spec, c)

    assert system.size == 34
    assert (system.lower_bandwidth, system.upper_bandwidth) == (4, 3)
    assert system.a_bands.shape == (8, 34)
    # momentum row of x_1: P = 2/dt, Q = 0
    row, column = 2, 2
    assert system.a_bands[3 + row - column, column] == pytest.approx(20.0)
    assert system.a_bands[3 + row - column - 2, column + 2] == pytest.approx(20.0 * c.alpha1)
    assert system.a_bands[3 + row - column - 1, column + 1] == pytest.approx(c.gamma2)


def test_constraint_rows_do_not_depend_on_the_state(pulse_spec, constants_for):
    c = constants_for(pulse_spec)
    first = build_initial_state(pulse_spec, c)
    zero = SplineState(t=0.0, delta=np.zeros(19), phi=np.zeros(19))

    busy = assemble_step(first, pulse_spec, c)
    idle = assemble_step(zero, pulse_spec, c)

    bandwidths = (busy.lower_bandwidth, busy.upper_bandwidth)
    busy_a = banded_to_dense(busy.a_bands, *bandwidths)
    idle_a = banded_to_dense(idle.a_bands, *bandwidths)
    busy_b = banded_to_dense(busy.b_bands, *bandwidths)
    np.testing.assert_array_equal(busy_a[1::2], idle_a[1::2])
    np.testing.assert_array_equal(busy_b[1::2], -busy_a[1::2])
    assert not np.array_equal(busy_a[0::2], idle_a[0::2])


# --- Stepping ---


@pytest.mark.parametrize("closure", ["extrapolated", "neumann"])
@pytest.mark.parametrize("N", [8, 16, 32])
def test_step_matches_dense_reference(N, closure):
    spec = ProblemSpec(
        name="random",
        params=GardnerParameters(mu1=4.0, mu2=-3.0, mu3=1.0),
        grid=make_grid(0.0, 10.0, N),
        dt=0.1,
        zeta=1.0,
        t_end=1.0,
        initial_u=np.zeros_like,
        initial_v=np.zeros_like,
        boundary=closure,
    )
    c = compute_basis_constants(spec.zeta, spec.grid.h)
    relations = ghost_relations(N, closure)
    rng = np.random.default_rng(N)

    for _ in range(5):
        state = SplineState(
            t=0.0,
            delta=with_ghosts(0.1 * rng.normal(size=N + 1), relations["delta"]),
            phi=with_ghosts(0.1 * rng.normal(size=N + 1), relations["phi"]),
        )
        expected_delta, expected_phi = dense_step(state, spec, c)

        result = step(state, spec, c)

        scale = max(np.max(np.abs(expected_delta)), np.max(np.abs(expected_phi)))
        np.testing.assert_allclose(result.delta, expected_delta, atol=1e-10 * scale)
        np.testing.assert_allclose(result.phi, expected_phi, atol=1e-10 * scale)
        assert result.t == pytest.approx(0.1)
        assert result.step_index == 1


def test_constant_state_is_a_fixed_point(constant_spec, constants_for):
    spec = constant_spec(c0=0.3)
    c = constants_for(spec)
    state = build_initial_state(spec, c)

    advanced = step(step(state, spec, c), spec, c)

    np.testing.assert_allclose(advanced.delta, state.delta, rtol=1e-12)
    np.testing.assert_allclose(advanced.phi, 0.0, atol=1e-12)


def test_zero_state_stays_zero(pulse_spec, constants_for):
    c = constants_for(pulse_spec)
    zero = SplineState(t=0.0, delta=np.zeros(19), phi=np.zeros(19))

    advanced = step(zero, pulse_spec, c)

    np.testing.assert_array_equal(advanced.delta, 0.0)
    np.testing.assert_array_equal(advanced.phi, 0.0)


def test_linear_steps_are_reversible(linear_pulse_spec, constants_for):
    c = constants_for(linear_pulse_spec)
    start = build_initial_state(linear_pulse_spec, c)

    forward = step(start, linear_pulse_spec, c)
    back = step(forward, linear_pulse_spec, c, dt=-linear_pulse_spec.dt)

    np.testing.assert_allclose(back.delta, start.delta, atol=1e-11)
    np.testing.assert_allclose(back.phi, start.phi, atol=1e-11)
    assert back.t == pytest.approx(0.0)


def test_step_past_the_end_time_is_rejected(small_example1, constants_for):
    c = constants_for(small_example1)
    state = build_initial_state(small_example1, c).model_copy(update={"t": 0.5})

    with pytest.raises(DomainError):
        step(state, small_example1, c)


def test_vanishing_pivot_reports_breakdown(constant_spec):
    c = compute_basis_constants(1.0, 0.5)
    phi_value = 0.2
    L = phi_value * (c.alpha2 + 2.0 * c.alpha1)
    dt = 0.1
    # P = 2/dt + mu1 L vanishes with K = 0 and mu2 = 0
    spec = constant_spec(c0=0.0, mu1=-(2.0 / dt) / L, mu2=0.0, dt=dt)
    state = SplineState(t=0.0, delta=np.zeros(19), phi=np.full(19, phi_value))

    with pytest.raises(NumericalBreakdownError) as excinfo:
        step(state, spec, c)

    assert excinfo.value.step_index == 1
    assert excinfo.value.pivot_row == 0


def test_interleave_drops_ghosts():
    delta = np.arange(9, dtype=float)
    phi = -np.arange(9, dtype=float)
    state = SplineState(t=0.0, delta=delta, phi=phi)

    x = interleave(state)

    np.testing.assert_array_equal(x[0::2], delta[1:-1])
    np.testing.assert_array_equal(x[1::2], phi[1:-1])


# --- Runs ---


def test_run_with_zero_end_time_returns_the_initial_state(small_example1):
    spec = small_example1.model_copy(update={"t_end": 0.0})
    seen = []

    final = run(spec, [seen.append])

    assert final.step_index == 0
    assert len(seen) == 1


def test_run_notifies_observers(small_example1):
    every, selected = [], []

    final = run(small_example1, [every.append])
    run(small_example1, [selected.append], observe_times=[0.2, 0.5])

    assert final.step_index == 5
    assert final.t == pytest.approx(0.5)
    assert [s.step_index for s in every] == [0, 1, 2, 3, 4, 5]
    assert [s.step_index for s in selected] == [2, 5]


def test_observation_steps_merge_repeats_and_reject_collisions():
    assert observation_steps([0.5, 0.0, 0.5, 0.2], 0.1) == {0: 0.0, 2: 0.2, 5: 0.5}

    with pytest.raises(DomainError) as excinfo:
        observation_steps([0.2, 0.21], 0.1)

    assert excinfo.value.details["times"] == [0.2, 0.21]


def test_run_rejects_colliding_observe_times(small_example1):
    with pytest.raises(DomainError):
        run(small_example1, observe_times=[0.3, 0.26])


def test_run_is_deterministic(small_example1):
    first = run(small_example1)
    second = run(small_example1)

    np.testing.assert_array_equal(first.delta, second.delta)
    np.testing.assert_array_equal(first.phi, second.phi)


def test_reduction_residual_keeps_its_size(small_example1, constants_for):
    c = constants_for(small_example1)
    residuals = []

    run(small_example1, [lambda s: residuals.append(reduction_residual(s, c))])

    assert residuals[0] > 0.0
    np.testing.assert_allclose(residuals, residuals[0], rtol=1e-8, atol=1e-13)


def test_soliton_is_tracked_over_a_short_run():
    spec = example1_spec(N=100, dt=0.1, t_end=1.0)
    c = compute_basis_constants(spec.zeta, spec.grid.h)

    final = run(spec, constants=c)

    nodes = spec.grid.nodes
    error = np.abs(nodal_values(final, c).U - spec.analytical(nodes, final.t))
    assert error.max() < 1e-4
    # the largest error sits near the pulse, not at the boundary
    assert -10.0 < nodes[np.argmax(error)] < 20.0


def test_extrapolated_closure_keeps_the_odd_even_mode_down():
    errors = {}
    for closure in ("extrapolated", "neumann"):
        spec = example1_spec(N=100, dt=0.1, t_end=5.0).model_copy(update={"boundary": closure})
        c = compute_basis_constants(spec.zeta, spec.grid.h)
        U = nodal_values(run(spec, constants=c), c).U
        errors[closure] = np.abs(U - spec.analytical(spec.grid.nodes, 5.0))
        # alternating-sign component of U, trapezoidal weights at the ends
        signs = (-1.0) ** np.arange(U.size)
        signs[[0, -1]] *= 0.5
        errors[f"{closure}_sawtooth"] = abs(np.sum(signs * U)) / spec.grid.N

    assert errors["extrapolated"].max() < 2.3e-4
    assert errors["extrapolated_sawtooth"] < 1e-6
    assert errors["neumann"].max() > 10 * errors["extrapolated"].max()
    assert np.argmax(errors["neumann"]) == 0


# --- Dense output ---


def test_evaluation_at_nodes_matches_nodal_values(small_example1, constants_for):
    c = constants_for(small_example1)
    coeffs = compute_piece_coefficients(small_example1.zeta, small_example1.grid.h)
    state = run(small_example1)
    nodes = small_example1.grid.nodes

    U, Ux, V = evaluate_solution_array(state, nodes, coeffs, small_example1.grid)
    nodal = nodal_values(state, c)

    np.testing.assert_allclose(U, nodal.U, atol=1e-12)
    np.testing.assert_allclose(Ux, nodal.Ux, atol=1e-11)
    np.testing.assert_allclose(V, nodal.V, atol=1e-12)


def test_constant_is_reproduced_between_nodes(constant_spec, constants_for):
    spec = constant_spec(c0=0.3)
    state = build_initial_state(spec, constants_for(spec))
    coeffs = compute_piece_coefficients(spec.zeta, spec.grid.h)
    xs = np.linspace(spec.grid.a, spec.grid.b, 77)

    U, Ux, V = evaluate_solution_array(state, xs, coeffs, spec.grid)

    np.testing.assert_allclose(U, 0.3, rtol=1e-12)
    np.testing.assert_allclose(Ux, 0.0, atol=1e-12)
    np.testing.assert_allclose(V, 0.0, atol=1e-12)


def test_neumann_slope_vanishes_at_the_boundary(small_example1, constants_for):
    spec = small_example1.model_copy(update={"boundary": "neumann"})
    state = build_initial_state(spec, constants_for(spec))
    coeffs = compute_piece_coefficients(spec.zeta, spec.grid.h)
    grid = spec.grid

    _, left_slope, _ = evaluate_solution(state, grid.a, coeffs, grid)
    _, right_slope, _ = evaluate_solution(state, grid.b, coeffs, grid)

    assert left_slope == pytest.approx(0.0, abs=1e-12)
    assert right_slope == pytest.approx(0.0, abs=1e-12)


def test_evaluation_outside_the_domain_is_rejected(small_example1, constants_for):
    state = build_initial_state(small_example1, constants_for(small_example1))
    coeffs = compute_piece_coefficients(small_example1.zeta, small_example1.grid.h)

    with pytest.raises(DomainError):
        evaluate_solution(state, 31.0, coeffs, small_example1.grid)
