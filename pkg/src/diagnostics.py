#!/usr/bin/env python3
"""
📉 Energy Diagnostics
Discrete energy, relative energy, entropy and dissipation of scheme states,
the exponential decay-rate fit and the viscosity-ratio sweep.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
import sympy
from pydantic import BaseModel, ConfigDict
from scipy.special import xlogy
from scipy.stats import linregress

from src import metrics
from src.config import RunConfig
from src.exceptions import (
    InsufficientDataError,
    IntrusionError,
    NonPositiveEnergyError,
)
from src.initial_conditions import initial_state
from src.mesh import Mesh, PotentialField, potential_field
from src.params import FluidParams, PhysicalParams
from src.profiles import barenblatt_reference, solve_profile
from src.scheme import FiniteVolumeScheme, State, TimeStepper, iter_steps, steady_solve

logger = structlog.get_logger(__name__)

MIN_FIT_POINTS = 10


class EnergyReport(BaseModel):
    """Energy-type quantities of one state"""

    model_config = ConfigDict(frozen=True)

    time: float
    energy: float
    relative_energy: float
    entropy: float
    entropy_lower_bound: float
    entropy_upper_bound: float
    dissipation_surrogate: float
    entropy_dissipation: float


class DecayRecord(BaseModel):
    """Relative-energy series and its log-linear fit C exp(-p t)"""

    model_config = ConfigDict(frozen=True)

    series: List[Tuple[float, float]]
    fitted_rate: float
    fitted_prefactor: float
    fit_window: Tuple[float, float]
    fit_residual: float
    nu: Optional[float] = None


class SweepOutcome(BaseModel):
    """Result of one viscosity ratio in a sweep: a decay record or an error"""

    nu: float
    record: Optional[DecayRecord] = None
    reports: List[EnergyReport] = []
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def energy_density(f, g, b, p: FluidParams) -> np.ndarray:
    rho, nu = p.rho, p.nu
    return 0.5 * rho * (f + g) ** 2 + 0.5 * (1.0 - rho) * g**2 + b * (rho / nu * f + g)


def discrete_energy(state: State, mesh: Mesh, b: PotentialField, p: FluidParams) -> float:
    """Sum over cells of m(K) times the energy density"""
    return float(mesh.measures @ energy_density(state.f, state.g, b.b_values, p))


def relative_energy(
    state: State,
    steady_state: State,
    mesh: Mesh,
    b: PotentialField,
    p: FluidParams,
) -> float:
    """Energy gap to the steady state"""
    return discrete_energy(state, mesh, b, p) - discrete_energy(steady_state, mesh, b, p)


def relative_energy_quadratic(
    state: State, steady_state: State, mesh: Mesh, p: FluidParams
) -> float:
    """Weighted squared distance to the steady state.

    Equals relative_energy for equal-mass states when the steady phase
    potentials are constant over both supports.
    """
    rho = p.rho
    df = state.f - steady_state.f
    dg = state.g - steady_state.g
    return float(
        mesh.measures @ (0.5 * rho * (df + dg) ** 2 + 0.5 * (1.0 - rho) * dg**2)
    )


def discrete_entropy(state: State, mesh: Mesh, p: FluidParams) -> float:
    """Sum of m(K) (rho f ln f + nu g ln g), with 0 ln 0 = 0"""
    density = p.rho * xlogy(state.f, state.f) + p.nu * xlogy(state.g, state.g)
    return float(mesh.measures @ density)


def entropy_upper_bound(state: State, mesh: Mesh, p: FluidParams) -> float:
    return float(mesh.measures @ (p.rho * state.f**2 + p.nu * state.g**2))


def second_moment(
    values: np.ndarray, mesh: Mesh, center: Tuple[float, float] = (0.5, 0.5)
) -> float:
    r2 = np.sum((mesh.centers - np.asarray(center)) ** 2, axis=1)
    return float(mesh.measures @ (r2 * values))


def entropy_lower_bound(
    state: State, mesh: Mesh, p: FluidParams, center: Tuple[float, float] = (0.5, 0.5)
) -> float:
    """-pi (rho + nu) + rho m2(f) + nu m2(g); reported, not enforced"""
    return (
        -math.pi * (p.rho + p.nu)
        + p.rho * second_moment(state.f, mesh, center)
        + p.nu * second_moment(state.g, mesh, center)
    )


def dissipation_surrogate(
    state: State, mesh: Mesh, b: PotentialField, p: FluidParams
) -> float:
    """Edge sum of tau (nu rho f_sigma drop_f**2 + g_sigma drop_g**2)"""
    edge = FiniteVolumeScheme(mesh, b, p).fluxes(state)
    return float(
        mesh.transmissibilities
        @ (p.nu * p.rho * edge.mob_f * edge.drop_f**2 + edge.mob_g * edge.drop_g**2)
    )


def entropy_dissipation(state: State, mesh: Mesh, p: FluidParams) -> float:
    """Edge sum of tau (nu rho jump(f + g)**2 + nu (1 - rho) jump(g)**2)"""
    D = mesh.difference_matrix()
    total_jump = D @ (state.f + state.g)
    g_jump = D @ state.g
    return float(
        mesh.transmissibilities
        @ (p.nu * p.rho * total_jump**2 + p.nu * (1.0 - p.rho) * g_jump**2)
    )


def discrete_moment_norm(
    values: np.ndarray, mesh: Mesh, center: Tuple[float, float] = (0.5, 0.5)
) -> float:
    """L2 norm squared plus the |x|**2-weighted L1 norm"""
    return float(mesh.measures @ values**2) + second_moment(np.abs(values), mesh, center)


def norm_equivalence_bounds(p: FluidParams, scale: float = 0.125) -> Tuple[float, float]:
    """Constants (C_lower, C_upper) bracketing the energy by N(f) + N(g)"""
    rho, nu = p.rho, p.nu
    lower = min(0.5 * rho, rho * scale / (2.0 * nu), 0.5 * scale, 0.5)
    upper = max(rho, 0.5 * (1.0 + rho), rho * scale / nu, scale)
    return lower, upper


def energy_hessian() -> Dict[str, sympy.Expr]:
    """Symbolic Hessian of the energy density in (f, g), with det and trace"""
    f, g, b = sympy.symbols("f g b", nonnegative=True)
    rho, nu = sympy.symbols("rho nu", positive=True)
    density = (
        rho / 2 * (f + g) ** 2 + (1 - rho) / 2 * g**2 + b * (rho / nu * f + g)
    )
    hessian = sympy.hessian(density, (f, g))
    return {
        "hessian": hessian,
        "det": sympy.factor(hessian.det()),
        "trace": sympy.simplify(hessian.trace()),
    }


def pme_energy(
    values: np.ndarray, mesh: Mesh, center: Tuple[float, float] = (0.5, 0.5)
) -> float:
    """Fokker-Planck porous-medium energy: sum of m(K) (|x|**2 u + 2 u**2)"""
    return second_moment(values, mesh, center) + 2.0 * float(mesh.measures @ values**2)


def pme_relative_energy(
    values: np.ndarray,
    reference: np.ndarray,
    mesh: Mesh,
    center: Tuple[float, float] = (0.5, 0.5),
) -> float:
    return pme_energy(values, mesh, center) - pme_energy(reference, mesh, center)


def analytic_state(
    p: FluidParams,
    masses: Tuple[float, float],
    mesh: Mesh,
    center: Tuple[float, float] = (0.5, 0.5),
) -> State:
    """Closed-form steady state sampled on the mesh with the given discrete masses.

    Two-phase data use the four-case profile; when one phase carries no mass
    the other follows its Barenblatt profile (nu_eff = nu for f, 1 for g).
    """
    mass_f, mass_g = masses
    if mass_f > 0.0 and mass_g > 0.0:
        params = PhysicalParams(rho=p.rho, nu=p.nu, mass_f=mass_f, mass_g=mass_g)
        return State.from_profile(solve_profile(params), mesh, center, masses)
    if mass_f > 0.0:
        return State.from_barenblatt(barenblatt_reference(mass_f, p.nu), mesh, center)
    if mass_g > 0.0:
        single = State.from_barenblatt(barenblatt_reference(mass_g, 1.0), mesh, center)
        return State(single.g, single.f)
    raise ValueError("Both phases are empty")


def l1_distance(state: State, other: State, mesh: Mesh) -> Tuple[float, float]:
    """Mass-weighted L1 distances of f and of g"""
    return (
        float(mesh.measures @ np.abs(state.f - other.f)),
        float(mesh.measures @ np.abs(state.g - other.g)),
    )


def energy_report(
    state: State,
    reference: State,
    mesh: Mesh,
    b: PotentialField,
    p: FluidParams,
    reference_energy: Optional[float] = None,
) -> EnergyReport:
    energy = discrete_energy(state, mesh, b, p)
    if reference_energy is None:
        reference_energy = discrete_energy(reference, mesh, b, p)
    return EnergyReport(
        time=state.time,
        energy=energy,
        relative_energy=energy - reference_energy,
        entropy=discrete_entropy(state, mesh, p),
        entropy_lower_bound=entropy_lower_bound(state, mesh, p, b.center),
        entropy_upper_bound=entropy_upper_bound(state, mesh, p),
        dissipation_surrogate=dissipation_surrogate(state, mesh, b, p),
        entropy_dissipation=entropy_dissipation(state, mesh, p),
    )


def energy_trajectory(
    initial: State,
    reference: State,
    mesh: Mesh,
    b: PotentialField,
    p: FluidParams,
    stepper: TimeStepper,
    t_max: float,
    on_step: Optional[Callable[[State, int], None]] = None,
) -> List[EnergyReport]:
    """Energy reports of the initial state and of every accepted step"""
    scheme = FiniteVolumeScheme(mesh, b, p)
    reference_energy = discrete_energy(reference, mesh, b, p)
    reports = [energy_report(initial, reference, mesh, b, p, reference_energy)]

    for step, state in enumerate(iter_steps(initial, stepper, t_max, scheme), start=1):
        report = energy_report(state, reference, mesh, b, p, reference_energy)
        metrics.relative_energy.set(report.relative_energy)
        reports.append(report)
        if on_step is not None:
            on_step(state, step)
    return reports


def fit_rate(
    series: Sequence[Tuple[float, float]],
    drop_fraction: float = 0.1,
    energy_floor: Optional[float] = 1e-12,
) -> DecayRecord:
    """Least-squares fit of ln(relative energy) against t; p is minus the slope"""
    points = [(float(t), float(e)) for t, e in series]
    if not points:
        raise InsufficientDataError("Empty relative-energy series")

    times = np.array([t for t, _ in points])
    values = np.array([e for _, e in points])
    t_start = times[0] + drop_fraction * (times[-1] - times[0])
    in_window = times >= t_start
    times, values = times[in_window], values[in_window]

    if energy_floor is None:
        if np.any(values <= 0.0):
            raise NonPositiveEnergyError(
                f"{int(np.sum(values <= 0.0))} non-positive relative energies in the fit window"
            )
    else:
        keep = values >= energy_floor
        times, values = times[keep], values[keep]

    if len(times) < MIN_FIT_POINTS:
        raise InsufficientDataError(
            f"Only {len(times)} usable points, need {MIN_FIT_POINTS}"
        )

    logs = np.log(values)
    fit = linregress(times, logs)
    residual = float(np.sqrt(np.mean((logs - (fit.intercept + fit.slope * times)) ** 2)))
    record = DecayRecord(
        series=points,
        fitted_rate=float(-fit.slope),
        fitted_prefactor=float(math.exp(fit.intercept)),
        fit_window=(float(times[0]), float(times[-1])),
        fit_residual=residual,
    )
    logger.info(
        "📈 Decay rate fitted",
        rate=record.fitted_rate,
        prefactor=record.fitted_prefactor,
        points=len(times),
        residual=residual,
    )
    return record


def decay_experiment(config: RunConfig) -> Tuple[DecayRecord, List[EnergyReport]]:
    """Run the configured experiment and fit the decay of its relative energy"""
    mesh = config.build_mesh()
    b = potential_field(mesh)
    fluid = config.fluid_params()
    start = initial_state(config, mesh)

    reference = steady_solve(
        mesh,
        b,
        fluid,
        start,
        dt_max=config.steady_dt_max,
        t_max=config.steady_t_max,
        residual_tol=config.newton_tol,
    )
    reports = energy_trajectory(
        start, reference, mesh, b, fluid, config.stepper(), config.t_max
    )
    series = [(r.time, r.relative_energy) for r in reports]
    record = fit_rate(series).model_copy(update={"nu": config.nu})
    return record, reports


def _sweep_one(config: RunConfig, nu: float) -> SweepOutcome:
    run_config = config.model_copy(update={"nu": nu})
    try:
        record, reports = decay_experiment(run_config)
    except (IntrusionError, ValueError) as e:
        logger.error("❌ Sweep run failed", nu=nu, error=str(e))
        return SweepOutcome(nu=nu, error=f"{type(e).__name__}: {e}")
    return SweepOutcome(nu=nu, record=record, reports=reports)


def nu_sweep(nus: Sequence[float], config: RunConfig, workers: int = 1) -> List[SweepOutcome]:
    """Decay experiment for every viscosity ratio, failures recorded per run"""
    if not nus:
        raise ValueError("Viscosity-ratio list is empty")

    logger.info("🔁 Starting sweep", nus=list(nus), workers=workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_one, [config] * len(nus), nus))
    else:
        outcomes = [_sweep_one(config, nu) for nu in nus]

    failed = [o.nu for o in outcomes if not o.ok]
    logger.info("✅ Sweep finished", runs=len(outcomes), failed=failed)
    return outcomes
