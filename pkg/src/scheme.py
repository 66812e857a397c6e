#!/usr/bin/env python3
"""
⚙️ Upstream-Mobility Finite-Volume Scheme
Implicit two-point-flux scheme for the rescaled seawater-intrusion system,
Newton-Raphson with an analytic sparse Jacobian, adaptive time stepping and
time-marched steady states.

Edge quantities are oriented from K to L for every interior edge K|L; a
positive flux leaves K. The unknown vector of the Newton solve is the
concatenation ``[f; g]``.
"""

import time as _time
from typing import Callable, Iterator, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.sparse.linalg import splu

from src import metrics
from src.exceptions import (
    LinearSolveFailure,
    NonConvergenceError,
    NotStationaryError,
    StepUnderflowError,
)
from src.mesh import Mesh, PotentialField
from src.params import FluidParams
from src.profiles import BarenblattProfile, StationaryProfile

logger = structlog.get_logger(__name__)

NONNEGATIVITY_SLACK = 1e-12


class State:
    """Per-cell freshwater height f and saltwater height g at one time level"""

    def __init__(self, f, g, time: float = 0.0):
        self.f = np.array(f, dtype=float)
        self.g = np.array(g, dtype=float)
        if self.f.shape != self.g.shape or self.f.ndim != 1:
            raise ValueError(
                f"f and g must be 1-D arrays of equal length, got {self.f.shape} and {self.g.shape}"
            )
        self.time = float(time)

    def __len__(self) -> int:
        return len(self.f)

    def copy(self, time: Optional[float] = None) -> "State":
        return State(self.f, self.g, self.time if time is None else time)

    def masses(self, mesh: Mesh) -> Tuple[float, float]:
        return float(mesh.measures @ self.f), float(mesh.measures @ self.g)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])

    @classmethod
    def from_stacked(cls, x: np.ndarray, time: float) -> "State":
        n = len(x) // 2
        return cls(x[:n], x[n:], time)

    @classmethod
    def from_profile(
        cls,
        prof: StationaryProfile,
        mesh: Mesh,
        center: Tuple[float, float] = (0.5, 0.5),
        masses: Optional[Tuple[float, float]] = None,
    ) -> "State":
        """Analytic profile sampled at cell centres, rescaled to exact discrete masses"""
        radii = np.hypot(*(mesh.centers - np.asarray(center)).T)
        f, g = prof.evaluate(radii)
        target_f, target_g = masses or (prof.params.mass_f, prof.params.mass_g)
        return cls(
            _rescale(f, mesh.measures, target_f, "f"),
            _rescale(g, mesh.measures, target_g, "g"),
        )

    @classmethod
    def from_barenblatt(
        cls,
        ref: BarenblattProfile,
        mesh: Mesh,
        center: Tuple[float, float] = (0.5, 0.5),
    ) -> "State":
        """Single-phase state: sampled Barenblatt f, no saltwater"""
        radii = np.hypot(*(mesh.centers - np.asarray(center)).T)
        f = _rescale(ref.evaluate(radii), mesh.measures, ref.mass, "f")
        return cls(f, np.zeros_like(f))


def _rescale(values: np.ndarray, measures: np.ndarray, mass: float, name: str) -> np.ndarray:
    discrete = float(measures @ values)
    if discrete <= 0.0:
        raise ValueError(f"Sampled {name} has no mass on this mesh")
    return values * (mass / discrete)


class Residual:
    """Per-cell residual of both phase equations"""

    def __init__(self, res_f: np.ndarray, res_g: np.ndarray):
        self.res_f = res_f
        self.res_g = res_g

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.res_f, self.res_g])

    def norm(self) -> float:
        """l-infinity norm over both phases"""
        if len(self.res_f) == 0:
            return 0.0
        return float(max(np.max(np.abs(self.res_f)), np.max(np.abs(self.res_g))))


def upwind_mobility(value_K, value_L, potential_drop):
    """Positive part of the upstream value; ties go to K"""
    return np.where(
        np.asarray(potential_drop) >= 0.0,
        np.maximum(value_K, 0.0),
        np.maximum(value_L, 0.0),
    )


class EdgeFluxes:
    """Potential drops, upstream mobilities and fluxes on every interior edge"""

    def __init__(self, scheme: "FiniteVolumeScheme", f: np.ndarray, g: np.ndarray):
        K, L = scheme.K, scheme.L
        rho, nu = scheme.params.rho, scheme.params.nu

        df = f[K] - f[L]
        dg = g[K] - g[L]
        self.drop_f = df + dg + scheme.db / nu
        self.drop_g = rho * df + dg + scheme.db
        self.upwind_f_is_K = self.drop_f >= 0.0
        self.upwind_g_is_K = self.drop_g >= 0.0
        self.mob_f = upwind_mobility(f[K], f[L], self.drop_f)
        self.mob_g = upwind_mobility(g[K], g[L], self.drop_g)
        self.flux_f = scheme.tau * nu * self.mob_f * self.drop_f
        self.flux_g = scheme.tau * self.mob_g * self.drop_g


class FiniteVolumeScheme:
    """Implicit upstream-mobility scheme on a fixed mesh and potential"""

    def __init__(self, mesh: Mesh, b: PotentialField, params: FluidParams):
        if len(b) != mesh.n_cells:
            raise ValueError("Potential field and mesh disagree on the number of cells")
        self.mesh = mesh
        self.params = params
        self.b = b.b_values
        self.K = mesh.edges[:, 0]
        self.L = mesh.edges[:, 1]
        self.tau = mesh.transmissibilities
        self.db = self.b[self.K] - self.b[self.L]
        self.D = mesh.difference_matrix()
        self.DT = self.D.T.tocsr()

    def fluxes(self, state: State) -> EdgeFluxes:
        return EdgeFluxes(self, state.f, state.g)

    def steady_residual(self, state: State) -> Residual:
        """Net outgoing flux per cell"""
        edge = self.fluxes(state)
        return Residual(self.DT @ edge.flux_f, self.DT @ edge.flux_g)

    def residual(self, new: State, old: State, dt: float) -> Residual:
        m = self.mesh.measures
        steady = self.steady_residual(new)
        return Residual(
            m * (new.f - old.f) / dt + steady.res_f,
            m * (new.g - old.g) / dt + steady.res_g,
        )

    def jacobian(self, new: State, dt: float) -> sp.csr_matrix:
        """Derivative of the residual in [f; g], upwind branches frozen"""
        f, g = new.f, new.g
        K, L = self.K, self.L
        rho, nu = self.params.rho, self.params.nu
        edge = self.fluxes(new)
        tau = self.tau

        up_f = edge.upwind_f_is_K
        up_g = edge.upwind_g_is_K
        dmob_f_K = np.where(up_f, (f[K] > 0.0).astype(float), 0.0)
        dmob_f_L = np.where(up_f, 0.0, (f[L] > 0.0).astype(float))
        dmob_g_K = np.where(up_g, (g[K] > 0.0).astype(float), 0.0)
        dmob_g_L = np.where(up_g, 0.0, (g[L] > 0.0).astype(float))

        flux_f_f = self._edge_matrix(
            tau * nu * (dmob_f_K * edge.drop_f + edge.mob_f),
            tau * nu * (dmob_f_L * edge.drop_f - edge.mob_f),
        )
        flux_f_g = self._edge_matrix(tau * nu * edge.mob_f, -tau * nu * edge.mob_f)
        flux_g_f = self._edge_matrix(tau * rho * edge.mob_g, -tau * rho * edge.mob_g)
        flux_g_g = self._edge_matrix(
            tau * (dmob_g_K * edge.drop_g + edge.mob_g),
            tau * (dmob_g_L * edge.drop_g - edge.mob_g),
        )

        mass = sp.diags(self.mesh.measures / dt)
        return sp.bmat(
            [
                [mass + self.DT @ flux_f_f, self.DT @ flux_f_g],
                [self.DT @ flux_g_f, mass + self.DT @ flux_g_g],
            ],
            format="csc",
        )

    def _edge_matrix(self, d_K: np.ndarray, d_L: np.ndarray) -> sp.csr_matrix:
        n_edges = len(self.K)
        rows = np.concatenate([np.arange(n_edges), np.arange(n_edges)])
        cols = np.concatenate([self.K, self.L])
        return sp.csr_matrix(
            (np.concatenate([d_K, d_L]), (rows, cols)),
            shape=(n_edges, self.mesh.n_cells),
        )


def assemble_residual(
    new: State, old: State, dt: float, mesh: Mesh, b: PotentialField, p: FluidParams
) -> Residual:
    """Residual of the implicit scheme for the candidate state ``new``"""
    if len(new) != len(old) or len(new) != mesh.n_cells:
        raise ValueError("States and mesh disagree on the number of cells")
    return FiniteVolumeScheme(mesh, b, p).residual(new, old, dt)


def assemble_jacobian(
    new: State, old: State, dt: float, mesh: Mesh, b: PotentialField, p: FluidParams
) -> sp.csc_matrix:
    """Sparse Jacobian of assemble_residual with respect to [f; g]"""
    if len(new) != len(old) or len(new) != mesh.n_cells:
        raise ValueError("States and mesh disagree on the number of cells")
    return FiniteVolumeScheme(mesh, b, p).jacobian(new, dt)


def steady_residual(
    state: State, mesh: Mesh, b: PotentialField, p: FluidParams
) -> Residual:
    """Flux part of the scheme: the discrete steady system"""
    return FiniteVolumeScheme(mesh, b, p).steady_residual(state)


class NewtonResult:
    """Container for a converged Newton solve"""

    def __init__(self, state: State, iterations: int, residual_history: List[float]):
        self.state = state
        self.iterations = iterations
        self.residual_history = residual_history


def newton_solve(
    old: State,
    dt: float,
    scheme: FiniteVolumeScheme,
    tol: float = 1e-9,
    max_iter: int = 30,
) -> NewtonResult:
    """One implicit step by Newton-Raphson from the previous time level"""
    started = _time.perf_counter()
    x = old.stacked()
    target_time = old.time + dt
    history: List[float] = []

    for iteration in range(max_iter + 1):
        current = State.from_stacked(x, target_time)
        residual = scheme.residual(current, old, dt)
        norm = residual.norm()
        history.append(norm)
        logger.debug("Newton iteration", iteration=iteration, residual=norm, dt=dt)

        if not np.isfinite(norm):
            break
        if norm < tol and min(current.f.min(initial=0.0), current.g.min(initial=0.0)) >= -NONNEGATIVITY_SLACK:
            metrics.newton_iterations_total.inc(iteration)
            metrics.newton_solve_seconds.observe(_time.perf_counter() - started)
            return NewtonResult(current, iteration, history)
        if iteration == max_iter:
            break

        jacobian = scheme.jacobian(current, dt)
        try:
            delta = splu(jacobian).solve(-residual.stacked())
        except RuntimeError as e:
            metrics.newton_iterations_total.inc(iteration)
            raise LinearSolveFailure(f"Jacobian factorization failed: {e}") from e
        x = x + delta

    metrics.newton_iterations_total.inc(len(history) - 1)
    raise NonConvergenceError(len(history) - 1, history[-1])


class TimeStepper:
    """Adaptive step control: halve on failure, double on success, cap at dt_max"""

    def __init__(
        self,
        dt_max: float = 2e-4,
        dt_min: float = 1e-12,
        newton_tol: float = 1e-9,
        newton_max_iter: int = 30,
        dt: Optional[float] = None,
    ):
        if dt_max <= 0 or dt_min <= 0 or dt_min > dt_max:
            raise ValueError(f"Invalid step bounds dt_min={dt_min!r}, dt_max={dt_max!r}")
        self.dt_max = dt_max
        self.dt_min = dt_min
        self.newton_tol = newton_tol
        self.newton_max_iter = newton_max_iter
        self.dt = dt_max if dt is None else min(dt, dt_max)
        self.accepted = 0
        self.rejected = 0

    def on_success(self):
        self.accepted += 1
        self.dt = min(2.0 * self.dt, self.dt_max)

    def on_failure(self, time: float):
        self.rejected += 1
        self.dt *= 0.5
        if self.dt < self.dt_min:
            raise StepUnderflowError(time, self.dt)


def iter_steps(
    state: State,
    stepper: TimeStepper,
    t_target: float,
    scheme: FiniteVolumeScheme,
) -> Iterator[State]:
    """Yield accepted states until t_target is reached"""
    current = state
    while current.time < t_target:
        dt = min(stepper.dt, t_target - current.time)
        try:
            result = newton_solve(
                current,
                dt,
                scheme,
                tol=stepper.newton_tol,
                max_iter=stepper.newton_max_iter,
            )
        except (NonConvergenceError, LinearSolveFailure) as e:
            metrics.time_steps_total.labels(outcome="rejected").inc()
            logger.warning("⚠️ Step rejected, halving dt", time=current.time, dt=dt, error=str(e))
            stepper.dt = dt
            try:
                stepper.on_failure(current.time)
            except StepUnderflowError as underflow:
                logger.error("❌ Time step underflow", time=current.time, error=str(underflow))
                raise
            continue

        metrics.time_steps_total.labels(outcome="accepted").inc()
        stepper.on_success()
        current = result.state
        if t_target - current.time <= 1e-14 * max(1.0, t_target):
            current.time = t_target
        yield current


def advance(
    state: State,
    stepper: TimeStepper,
    t_target: float,
    mesh: Mesh,
    b: PotentialField,
    p: FluidParams,
) -> List[State]:
    """Accepted states from state.time up to t_target"""
    if t_target < state.time:
        raise ValueError(f"t_target {t_target!r} lies before the state time {state.time!r}")
    scheme = FiniteVolumeScheme(mesh, b, p)
    trajectory = list(iter_steps(state, stepper, t_target, scheme))
    logger.info(
        "✅ Advanced",
        t=t_target,
        accepted=stepper.accepted,
        rejected=stepper.rejected,
    )
    return trajectory


def steady_solve(
    mesh: Mesh,
    b: PotentialField,
    p: FluidParams,
    initial: State,
    dt_max: float = 0.05,
    t_max: float = 500.0,
    residual_tol: float = 1e-9,
    energy_rate_tol: float = 1e-14,
    energy: Optional[Callable[[State], float]] = None,
) -> State:
    """Discrete steady state reached by energy-diminishing time marching"""
    from src.diagnostics import discrete_energy

    scheme = FiniteVolumeScheme(mesh, b, p)
    measure = energy or (lambda s: discrete_energy(s, mesh, b, p))
    stepper = TimeStepper(dt_max=dt_max)

    current = initial.copy(time=0.0)
    previous_energy = measure(current)
    residual = scheme.steady_residual(current).norm()
    if residual < residual_tol:
        return current

    for state in iter_steps(current, stepper, t_max, scheme):
        step = state.time - current.time
        value = measure(state)
        rate = (previous_energy - value) / step
        residual = scheme.steady_residual(state).norm()
        current, previous_energy = state, value
        if residual < residual_tol and rate < energy_rate_tol:
            logger.info(
                "✅ Steady state reached",
                time=state.time,
                residual=residual,
                steps=stepper.accepted,
            )
            return state

    logger.error("❌ Steady state not reached", t_max=t_max, residual=residual)
    raise NotStationaryError(
        f"Steady residual {residual:.3e} above {residual_tol:.1e} at t={t_max!r}"
    )
