"""
🧪 Finite-Volume Scheme Tests
Upstream mobilities, residual and Jacobian assembly, Newton and time stepping
"""

import numpy as np
import pytest

from src import metrics
from src.diagnostics import discrete_energy
from src.exceptions import NotStationaryError, StepUnderflowError
from src.mesh import potential_field
from src.params import FluidParams, PhysicalParams
from src.profiles import solve_profile
from src.scheme import (
    FiniteVolumeScheme,
    State,
    TimeStepper,
    advance,
    assemble_jacobian,
    assemble_residual,
    newton_solve,
    steady_residual,
    steady_solve,
    upwind_mobility,
)

SLOW_FLUID = FluidParams(rho=0.9, nu=2.0)


def finite_difference_jacobian(scheme, new, old, dt, eps=1e-7):
    x = new.stacked()
    columns = []
    for j in range(len(x)):
        step = np.zeros_like(x)
        step[j] = eps
        plus = scheme.residual(State.from_stacked(x + step, new.time), old, dt).stacked()
        minus = scheme.residual(State.from_stacked(x - step, new.time), old, dt).stacked()
        columns.append((plus - minus) / (2 * eps))
    return np.column_stack(columns)


@pytest.mark.unit
class TestState:
    """Per-cell state container"""

    def test_shape_mismatch(self):
        """Test that f and g must have equal lengths"""
        with pytest.raises(ValueError):
            State([1.0, 2.0], [1.0])

    def test_stacking(self):
        """Test the [f; g] layout"""
        state = State([1.0, 2.0], [3.0, 4.0], time=0.5)
        restored = State.from_stacked(state.stacked(), 0.5)
        np.testing.assert_array_equal(state.stacked(), [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(restored.g, state.g)

    def test_copy_is_independent(self):
        """Test that copies do not share arrays"""
        state = State([1.0], [2.0])
        clone = state.copy(time=3.0)
        clone.f[0] = 9.0
        assert state.f[0] == 1.0
        assert clone.time == 3.0

    def test_from_profile_rescales_masses(self, grid8):
        """Test that sampled profiles carry the requested discrete masses"""
        prof = solve_profile(PhysicalParams(rho=0.9, nu=1.0, mass_f=0.01, mass_g=0.005))
        state = State.from_profile(prof, grid8)
        mass_f, mass_g = state.masses(grid8)
        assert mass_f == pytest.approx(0.01, rel=1e-12)
        assert mass_g == pytest.approx(0.005, rel=1e-12)


@pytest.mark.unit
class TestUpwindMobility:
    """Positive part of the upstream value"""

    @pytest.mark.parametrize(
        "value_K, value_L, drop, expected",
        [
            (0.3, 0.7, 0.5, 0.3),
            (0.3, 0.7, -0.5, 0.7),
            (0.3, 0.7, 0.0, 0.3),
            (-0.2, 0.7, 1.0, 0.0),
            (0.3, -1e-13, -2.0, 0.0),
        ],
    )
    def test_examples(self, value_K, value_L, drop, expected):
        """Test the upstream choice and the positive part"""
        assert upwind_mobility(value_K, value_L, drop) == expected

    def test_vectorized(self):
        """Test elementwise evaluation"""
        result = upwind_mobility(np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([1.0, -1.0]))
        np.testing.assert_array_equal(result, [1.0, 4.0])


@pytest.mark.unit
class TestResidual:
    """Residual assembly"""

    def test_zero_state_is_steady(self, grid4, fluid):
        """Test that the empty state has zero residual"""
        b = potential_field(grid4)
        zero = State(np.zeros(grid4.n_cells), np.zeros(grid4.n_cells))
        assert steady_residual(zero, grid4, b, fluid).norm() == 0.0
        assert assemble_residual(zero, zero, 0.1, grid4, b, fluid).norm() == 0.0

    def test_single_edge_fluxes(self, two_cell_mesh, fluid):
        """Test the fluxes across the one shared edge by hand"""
        b = potential_field(two_cell_mesh)
        scheme = FiniteVolumeScheme(two_cell_mesh, b, fluid)
        state = State([0.3, 0.1], [0.2, 0.05])
        edge = scheme.fluxes(state)

        assert scheme.db[0] == 0.0
        assert edge.drop_f[0] == pytest.approx(0.35)
        assert edge.drop_g[0] == pytest.approx(0.9 * 0.2 + 0.15)
        assert edge.flux_f[0] == pytest.approx(2.0 * 1.0 * 0.3 * 0.35)
        assert edge.flux_g[0] == pytest.approx(2.0 * 0.2 * 0.33)

        residual = scheme.steady_residual(state)
        np.testing.assert_allclose(residual.res_f, [0.21, -0.21])
        np.testing.assert_allclose(residual.res_g, [0.132, -0.132])

    def test_downstream_empty_cell_receives_mass(self, two_cell_mesh, fluid):
        """Test that flux flows into an empty neighbour"""
        b = potential_field(two_cell_mesh)
        residual = steady_residual(State([0.4, 0.0], [0.0, 0.0]), two_cell_mesh, b, fluid)
        assert residual.res_f[0] > 0
        assert residual.res_f[1] < 0
        np.testing.assert_array_equal(residual.res_g, 0.0)

    def test_fluxes_telescope(self, grid8, rng):
        """Test that the flux part of the residual sums to zero"""
        b = potential_field(grid8)
        state = State(rng.uniform(0, 1, grid8.n_cells), rng.uniform(0, 1, grid8.n_cells))
        residual = steady_residual(state, grid8, b, SLOW_FLUID)
        assert residual.res_f.sum() == pytest.approx(0.0, abs=1e-12)
        assert residual.res_g.sum() == pytest.approx(0.0, abs=1e-12)

    def test_time_derivative_term(self, grid4, fluid):
        """Test m (f - f_old) / dt for a state with no mobility"""
        b = potential_field(grid4)
        old = State(np.zeros(grid4.n_cells), np.zeros(grid4.n_cells))
        new = State(-np.ones(grid4.n_cells), np.zeros(grid4.n_cells))
        residual = assemble_residual(new, old, 0.5, grid4, b, fluid)
        np.testing.assert_allclose(residual.res_f, -grid4.measures / 0.5)

    def test_cell_count_mismatch(self, grid4, grid8, fluid):
        """Test that states must match the mesh"""
        b = potential_field(grid4)
        small = State(np.zeros(grid4.n_cells), np.zeros(grid4.n_cells))
        large = State(np.zeros(grid8.n_cells), np.zeros(grid8.n_cells))
        with pytest.raises(ValueError):
            assemble_residual(large, small, 0.1, grid4, b, fluid)
        with pytest.raises(ValueError):
            FiniteVolumeScheme(grid8, b, fluid)


@pytest.mark.unit
class TestJacobian:
    """Analytic sparse Jacobian"""

    def test_matches_finite_differences(self, grid4, rng):
        """Test the analytic Jacobian against central differences"""
        b = potential_field(grid4)
        scheme = FiniteVolumeScheme(grid4, b, SLOW_FLUID)
        old = State(rng.uniform(0.1, 1.0, grid4.n_cells), rng.uniform(0.1, 1.0, grid4.n_cells))
        new = State(rng.uniform(0.1, 1.0, grid4.n_cells), rng.uniform(0.1, 1.0, grid4.n_cells))
        dt = 0.05

        analytic = assemble_jacobian(new, old, dt, grid4, b, SLOW_FLUID).toarray()
        numeric = finite_difference_jacobian(scheme, new, old, dt)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-6)

    def test_zero_state_is_mass_matrix(self, grid4, fluid):
        """Test J = diag(m / dt) when every mobility vanishes"""
        b = potential_field(grid4)
        zero = State(np.zeros(grid4.n_cells), np.zeros(grid4.n_cells))
        jacobian = assemble_jacobian(zero, zero, 0.25, grid4, b, fluid).toarray()
        expected = np.diag(np.concatenate([grid4.measures, grid4.measures]) / 0.25)
        np.testing.assert_allclose(jacobian, expected)

    def test_sparsity(self, grid8, bump_state):
        """Test that the Jacobian only couples neighbouring cells"""
        b = potential_field(grid8)
        state = bump_state(grid8)
        jacobian = assemble_jacobian(state, state, 0.1, grid8, b, SLOW_FLUID)
        n = grid8.n_cells
        assert jacobian.shape == (2 * n, 2 * n)
        assert jacobian.nnz <= 4 * (n + 2 * grid8.n_edges)


@pytest.mark.unit
class TestNewton:
    """Newton-Raphson for one implicit step"""

    def test_steady_state_needs_no_iteration(self, grid4, full_support_steady):
        """Test that a steady state is accepted before any update"""
        steady, _ = full_support_steady(grid4, SLOW_FLUID)
        scheme = FiniteVolumeScheme(grid4, potential_field(grid4), SLOW_FLUID)
        result = newton_solve(steady, 0.1, scheme)
        assert result.iterations == 0
        np.testing.assert_array_equal(result.state.f, steady.f)
        assert result.state.time == pytest.approx(0.1)

    def test_two_cell_step_converges_fast(self, two_cell_mesh, fluid):
        """Test convergence of a smooth step within a handful of iterations"""
        scheme = FiniteVolumeScheme(two_cell_mesh, potential_field(two_cell_mesh), fluid)
        old = State([0.6, 0.2], [0.3, 0.4])
        result = newton_solve(old, 0.01, scheme, tol=1e-12)
        assert result.iterations <= 6
        assert result.residual_history[-1] < 1e-12
        tail = result.residual_history[-3:]
        assert tail[-1] <= tail[0]
        assert sum(result.state.masses(two_cell_mesh)) == pytest.approx(
            sum(old.masses(two_cell_mesh)), rel=1e-12
        )

    def test_counts_iterations(self, two_cell_mesh, fluid):
        """Test that Newton iterations are counted in the metrics registry"""
        before = metrics.registry.get_sample_value("newton_iterations_total") or 0.0
        scheme = FiniteVolumeScheme(two_cell_mesh, potential_field(two_cell_mesh), fluid)
        result = newton_solve(State([0.6, 0.2], [0.3, 0.4]), 0.01, scheme)
        after = metrics.registry.get_sample_value("newton_iterations_total")
        assert after - before == result.iterations


@pytest.mark.unit
class TestTimeStepper:
    """Adaptive step control"""

    def test_halve_and_double(self):
        """Test halving on failure and capped doubling on success"""
        stepper = TimeStepper(dt_max=1e-2, dt_min=1e-6)
        stepper.on_failure(0.0)
        assert stepper.dt == pytest.approx(5e-3)
        stepper.on_success()
        stepper.on_success()
        assert stepper.dt == pytest.approx(1e-2)
        assert stepper.accepted == 2
        assert stepper.rejected == 1

    def test_underflow(self):
        """Test StepUnderflowError once dt drops below dt_min"""
        stepper = TimeStepper(dt_max=1e-3, dt_min=4e-4)
        stepper.on_failure(0.0)
        with pytest.raises(StepUnderflowError) as info:
            stepper.on_failure(0.25)
        assert info.value.time == 0.25

    @pytest.mark.parametrize("dt_max, dt_min", [(0.0, 1e-12), (1e-3, 1e-2), (1e-3, -1.0)])
    def test_invalid_bounds(self, dt_max, dt_min):
        """Test step bound validation"""
        with pytest.raises(ValueError):
            TimeStepper(dt_max=dt_max, dt_min=dt_min)


@pytest.mark.integration
class TestAdvance:
    """Time marching on small grids"""

    def test_reaches_target_time(self, grid8, bump_state):
        """Test that the last state sits exactly at t_target"""
        b = potential_field(grid8)
        stepper = TimeStepper(dt_max=3e-3)
        trajectory = advance(bump_state(grid8), stepper, 0.01, grid8, b, SLOW_FLUID)
        assert trajectory[-1].time == 0.01
        assert all(t1.time < t2.time for t1, t2 in zip(trajectory, trajectory[1:]))

    def test_conserves_mass_and_sign(self, grid8, bump_state):
        """Test mass conservation and nonnegativity along a trajectory"""
        b = potential_field(grid8)
        start = bump_state(grid8)
        trajectory = advance(start, TimeStepper(dt_max=5e-3), 0.05, grid8, b, SLOW_FLUID)
        mass_f, mass_g = start.masses(grid8)
        for state in trajectory:
            f_mass, g_mass = state.masses(grid8)
            assert f_mass == pytest.approx(mass_f, rel=1e-10)
            assert g_mass == pytest.approx(mass_g, rel=1e-10)
            assert state.f.min() >= -1e-12
            assert state.g.min() >= -1e-12

    def test_energy_does_not_increase(self, grid8, bump_state):
        """Test that the discrete energy is nonincreasing step by step"""
        b = potential_field(grid8)
        start = bump_state(grid8)
        trajectory = advance(start, TimeStepper(dt_max=5e-3), 0.05, grid8, b, SLOW_FLUID)
        energies = [discrete_energy(s, grid8, b, SLOW_FLUID) for s in [start] + trajectory]
        assert all(e2 <= e1 + 1e-11 for e1, e2 in zip(energies, energies[1:]))

    def test_single_phase_stays_single(self, grid8, bump_state):
        """Test that g = 0 stays identically zero"""
        b = potential_field(grid8)
        start = bump_state(grid8)
        start.g[:] = 0.0
        trajectory = advance(start, TimeStepper(dt_max=5e-3), 0.02, grid8, b, SLOW_FLUID)
        assert np.all(trajectory[-1].g == 0.0)

    def test_oversized_step_is_halved(self, grid8, bump_state):
        """Test that failed Newton solves halve dt and the run still lands on t_target"""
        b = potential_field(grid8)
        start = bump_state(grid8)
        stepper = TimeStepper(dt_max=5.0, newton_max_iter=2)
        trajectory = advance(start, stepper, 1.0, grid8, b, SLOW_FLUID)

        assert stepper.rejected > 0
        assert stepper.accepted == len(trajectory)
        assert trajectory[-1].time == 1.0
        for state in trajectory:
            assert state.f.min() >= -1e-12
            assert state.g.min() >= -1e-12
        energies = [discrete_energy(s, grid8, b, SLOW_FLUID) for s in [start] + trajectory]
        assert all(e2 <= e1 + 1e-11 for e1, e2 in zip(energies, energies[1:]))

    def test_underflow_propagates(self, grid8, bump_state):
        """Test that advance raises StepUnderflowError when halving cannot rescue Newton"""
        b = potential_field(grid8)
        stepper = TimeStepper(dt_max=1.0, dt_min=0.4, newton_max_iter=1)
        with pytest.raises(StepUnderflowError):
            advance(bump_state(grid8), stepper, 1.0, grid8, b, SLOW_FLUID)
        assert stepper.rejected == 2
        assert stepper.accepted == 0

    def test_target_in_the_past(self, grid4, fluid):
        """Test that advance refuses to step backwards"""
        state = State(np.zeros(grid4.n_cells), np.zeros(grid4.n_cells), time=1.0)
        with pytest.raises(ValueError):
            advance(state, TimeStepper(), 0.5, grid4, potential_field(grid4), fluid)


@pytest.mark.integration
class TestSteadySolve:
    """Time-marched discrete steady states"""

    def test_steady_input_returned(self, grid4, full_support_steady):
        """Test that a steady initial state is returned unchanged"""
        steady, _ = full_support_steady(grid4, SLOW_FLUID)
        result = steady_solve(grid4, potential_field(grid4), SLOW_FLUID, steady)
        np.testing.assert_array_equal(result.f, steady.f)
        assert result.time == 0.0

    def test_not_stationary_within_t_max(self, grid8, bump_state):
        """Test NotStationaryError when the horizon is far too short"""
        b = potential_field(grid8)
        with pytest.raises(NotStationaryError):
            steady_solve(grid8, b, SLOW_FLUID, bump_state(grid8), dt_max=1e-3, t_max=2e-3)

    @pytest.mark.slow
    def test_reaches_discrete_steady_state(self, grid8, bump_state):
        """Test that marching ends with a small steady residual and the same masses"""
        b = potential_field(grid8)
        start = bump_state(grid8)
        steady = steady_solve(grid8, b, SLOW_FLUID, start)
        assert steady_residual(steady, grid8, b, SLOW_FLUID).norm() < 1e-9
        assert steady.masses(grid8)[0] == pytest.approx(start.masses(grid8)[0], rel=1e-10)
