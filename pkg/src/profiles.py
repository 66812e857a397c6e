#!/usr/bin/env python3
"""
🌊 Stationary Profiles
Closed-form radially symmetric steady states (F, G) of the confined
two-phase system, their exact masses and energy, and the single-phase
Barenblatt reference.

Every profile is piecewise quadratic in r: each phase is a list of pieces
``c + slope * r**2`` on radial intervals. Working in ``s = r**2`` turns mass
and energy integrals into exact polynomial integrals, since the polar
measure ``2 pi r dr`` equals ``pi ds``.
"""

import math
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import structlog
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict

from src.exceptions import DegenerateCaseError, InfeasibleRootError
from src.params import (
    CLASSIFICATION_TOLERANCE,
    ConfigCase,
    PhysicalParams,
    classify,
    critical_nus,
)

logger = structlog.get_logger(__name__)

ROOT_CLAMP_TOLERANCE = 1e-10


class Piece(NamedTuple):
    """One quadratic piece ``c + slope * r**2`` on ``[r_lo, r_hi)``"""

    r_lo: float
    r_hi: float
    c: float
    slope: float

    def mass(self) -> float:
        s_lo, s_hi = self.r_lo**2, self.r_hi**2
        return math.pi * (
            self.c * (s_hi - s_lo) + 0.5 * self.slope * (s_hi**2 - s_lo**2)
        )


class RadialSample(NamedTuple):
    """Profile values at one radius"""

    r: float
    f_value: float
    g_value: float


class StationaryProfile(BaseModel):
    """Solved steady state: configuration tag, radii and constants"""

    model_config = ConfigDict(frozen=True)

    case: ConfigCase
    r1: float
    r2: float
    r3: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    c3: Optional[float] = None
    c4: Optional[float] = None
    params: PhysicalParams

    @property
    def slope_f(self) -> float:
        """Slope of F on the intersection of the supports"""
        p = self.params
        return (p.nu - 1.0) / (8.0 * p.nu * (1.0 - p.rho))

    @property
    def slope_g(self) -> float:
        """Slope of G on the intersection of the supports"""
        p = self.params
        return (p.rho - p.nu) / (8.0 * p.nu * (1.0 - p.rho))

    @property
    def support_radius(self) -> float:
        return self.r3 if self.r3 is not None else self.r2

    def f_pieces(self) -> List[Piece]:
        nu = self.params.nu
        case = self.case.formula_case
        if case == ConfigCase.CASE1:
            return [
                Piece(0.0, self.r1, self.c1, self.slope_f),
                Piece(self.r1, self.r2, self.c3, -1.0 / (8.0 * nu)),
            ]
        if case == ConfigCase.CASE2:
            return [Piece(0.0, self.r1, self.c1, self.slope_f)]
        if case == ConfigCase.CASE3:
            return [
                Piece(0.0, self.r1, self.c3, -1.0 / (8.0 * nu)),
                Piece(self.r1, self.r2, self.c1, self.slope_f),
            ]
        return [
            Piece(self.r1, self.r2, self.c1, self.slope_f),
            Piece(self.r2, self.r3, self.c3, -1.0 / (8.0 * nu)),
        ]

    def g_pieces(self) -> List[Piece]:
        case = self.case.formula_case
        if case == ConfigCase.CASE1:
            return [Piece(0.0, self.r1, self.c2, self.slope_g)]
        if case == ConfigCase.CASE2:
            return [
                Piece(0.0, self.r1, self.c2, self.slope_g),
                Piece(self.r1, self.r2, self.c4, -0.125),
            ]
        if case == ConfigCase.CASE3:
            return [
                Piece(self.r1, self.r2, self.c2, self.slope_g),
                Piece(self.r2, self.r3, self.c4, -0.125),
            ]
        return [
            Piece(0.0, self.r1, self.c4, -0.125),
            Piece(self.r1, self.r2, self.c2, self.slope_g),
        ]

    def evaluate(self, r) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorized (F(r), G(r)); zero outside the supports"""
        radii = np.asarray(r, dtype=float)
        return (
            _evaluate_pieces(self.f_pieces(), radii),
            _evaluate_pieces(self.g_pieces(), radii),
        )


class BarenblattProfile(BaseModel):
    """Single-phase steady state ``max(height - r**2 / (8 nu_eff), 0)``"""

    model_config = ConfigDict(frozen=True)

    mass: float
    nu_eff: float
    height: float
    radius: float

    def evaluate(self, r) -> np.ndarray:
        radii = np.asarray(r, dtype=float)
        return np.maximum(self.height - radii**2 / (8.0 * self.nu_eff), 0.0)

    def exact_mass(self) -> float:
        return Piece(0.0, self.radius, self.height, -1.0 / (8.0 * self.nu_eff)).mass()


def _evaluate_pieces(pieces: List[Piece], radii: np.ndarray) -> np.ndarray:
    values = np.zeros_like(radii, dtype=float)
    for piece in pieces:
        mask = (radii >= piece.r_lo) & (radii < piece.r_hi)
        values[mask] = piece.c + piece.slope * radii[mask] ** 2
    return np.maximum(values, 0.0)


def _check_denominator(name: str, value: float) -> float:
    if abs(value) <= CLASSIFICATION_TOLERANCE:
        raise DegenerateCaseError(name, value)
    return value


def _nonnegative_root(S: float, P: float) -> float:
    """Nonnegative root of ``X**2 - S X + P`` with S < 0 and P <= 0"""
    discriminant = max(S * S - 4.0 * P, 0.0)
    root = 0.5 * (S + math.sqrt(discriminant))
    if root < 0.0:
        if -root <= ROOT_CLAMP_TOLERANCE * max(1.0, abs(S)):
            return 0.0
        raise InfeasibleRootError(
            f"Selected root {root!r} is negative (S={S!r}, P={P!r})"
        )
    return root


def _solve_case1(p: PhysicalParams) -> dict:
    rho, nu, mf, mg = p.rho, p.nu, p.mass_f, p.mass_g
    a = 1.0 / (8.0 * nu * (1.0 - rho))
    nu_minus_rho = _check_denominator("nu - rho", nu - rho)
    s2 = math.sqrt(16.0 * nu * (mf + mg) / math.pi)
    s1 = min(math.sqrt(16.0 * nu * (1.0 - rho) * mg / (math.pi * nu_minus_rho)), s2)
    c2 = nu_minus_rho * a * s1
    c3 = s2 / (8.0 * nu)
    return {"r1": math.sqrt(s1), "r2": math.sqrt(s2), "c1": c3 - c2, "c2": c2, "c3": c3}


def _solve_case2(p: PhysicalParams) -> dict:
    rho, nu, mf, mg = p.rho, p.nu, p.mass_f, p.mass_g
    a = 1.0 / (8.0 * nu * (1.0 - rho))
    one_minus_nu = _check_denominator("1 - nu", 1.0 - nu)
    s2 = math.sqrt(16.0 * (rho * mf + mg) / math.pi)
    s1 = min(math.sqrt(16.0 * nu * (1.0 - rho) * mf / (math.pi * one_minus_nu)), s2)
    c1 = one_minus_nu * a * s1
    c4 = s2 / 8.0
    return {"r1": math.sqrt(s1), "r2": math.sqrt(s2), "c1": c1, "c2": c4 - rho * c1, "c4": c4}


def _solve_case3(p: PhysicalParams, inner_root: Optional[float] = None) -> dict:
    rho, nu, mf, mg = p.rho, p.nu, p.mass_f, p.mass_g
    a = 1.0 / (8.0 * nu * (1.0 - rho))
    rho_minus_nu = _check_denominator("rho - nu", rho - nu)
    one_minus_nu = _check_denominator("1 - nu", 1.0 - nu)

    S = -8.0 * nu * math.sqrt(mg * one_minus_nu / (math.pi * rho_minus_nu * rho))
    P = 16.0 * nu / math.pi * (nu * (1.0 - rho) * mg / (rho * rho_minus_nu) - mf)
    s1 = _nonnegative_root(S, P) if inner_root is None else inner_root
    s2 = s1 + 4.0 * nu * (1.0 - rho) * math.sqrt(
        mg / (math.pi * rho_minus_nu * rho * one_minus_nu)
    )
    s3 = (rho * one_minus_nu * s2 - rho_minus_nu * s1) / (nu * (1.0 - rho))

    c1 = one_minus_nu * a * s2
    c2 = -rho_minus_nu * a * s1
    return {
        "r1": math.sqrt(s1),
        "r2": math.sqrt(s2),
        "r3": math.sqrt(s3),
        "c1": c1,
        "c2": c2,
        "c3": c1 + c2,
        "c4": s3 / 8.0,
    }


def _solve_case4(p: PhysicalParams, inner_root: Optional[float] = None) -> dict:
    rho, nu, mf, mg = p.rho, p.nu, p.mass_f, p.mass_g
    a = 1.0 / (8.0 * nu * (1.0 - rho))
    nu_minus_rho = _check_denominator("nu - rho", nu - rho)
    nu_minus_one = _check_denominator("nu - 1", nu - 1.0)

    S = -8.0 * math.sqrt(mf * nu_minus_rho / (math.pi * nu * nu_minus_one))
    P = 16.0 / math.pi * ((1.0 - rho) * mf / nu_minus_one - mg)
    s1 = _nonnegative_root(S, P) if inner_root is None else inner_root
    s2 = s1 + 4.0 * (1.0 - rho) * math.sqrt(
        nu * mf / (math.pi * nu_minus_rho * nu_minus_one)
    )

    c1 = -nu_minus_one * a * s1
    c2 = nu_minus_rho * a * s2
    c3 = c1 + c2
    # G continuity at r1 links the inner G-only piece to the intersection
    c4 = c2 + rho * (1.0 - nu) * a * s1
    return {
        "r1": math.sqrt(s1),
        "r2": math.sqrt(s2),
        "r3": math.sqrt(8.0 * nu * c3),
        "c1": c1,
        "c2": c2,
        "c3": c3,
        "c4": c4,
    }


_SOLVERS = {
    ConfigCase.CASE1: _solve_case1,
    ConfigCase.CASE2: _solve_case2,
    ConfigCase.CASE3: _solve_case3,
    ConfigCase.CASE4: _solve_case4,
}

_VANISHING_INNER_ROOT = (ConfigCase.AT_NU1, ConfigCase.AT_NU3)


def solve_profile(p: PhysicalParams) -> StationaryProfile:
    """Unique radially symmetric stationary profile for the given parameters"""
    case = classify(p)
    # the quadratic degenerates to X (X - S) at nu1* and nu3*; take its limiting root
    extra = {"inner_root": 0.0} if case in _VANISHING_INNER_ROOT else {}
    try:
        fields = _SOLVERS[case.formula_case](p, **extra)
    except (DegenerateCaseError, InfeasibleRootError) as e:
        logger.error("❌ Profile solve failed", case=case.value, nu=p.nu, error=str(e))
        raise

    profile = StationaryProfile(case=case, params=p, **fields)
    logger.info(
        "✅ Profile solved",
        case=case.value,
        nu=p.nu,
        r1=profile.r1,
        r2=profile.r2,
        r3=profile.r3,
    )
    return profile


def eval_profile(prof: StationaryProfile, r: float) -> RadialSample:
    """(F(r), G(r)) at one radius"""
    if r < 0:
        raise ValueError(f"Radius must be nonnegative, got {r!r}")
    f_value, g_value = prof.evaluate([r])
    return RadialSample(float(r), float(f_value[0]), float(g_value[0]))


def profile_masses(prof: StationaryProfile) -> Tuple[float, float]:
    """Exact masses of F and G from the piecewise polynomials"""
    mass_f = sum(piece.mass() for piece in prof.f_pieces())
    mass_g = sum(piece.mass() for piece in prof.g_pieces())
    return mass_f, mass_g


def sample_cross_section(
    prof: StationaryProfile, n: int, r_max: float
) -> List[RadialSample]:
    """n uniformly spaced samples of (F, G) on [0, r_max]"""
    if n < 2:
        raise ValueError(f"Need at least two samples, got {n}")
    if r_max <= 0:
        raise ValueError(f"r_max must be positive, got {r_max!r}")

    radii = np.linspace(0.0, r_max, n)
    f_values, g_values = prof.evaluate(radii)
    return [
        RadialSample(float(r), float(f), float(g))
        for r, f, g in zip(radii, f_values, g_values)
    ]


def barenblatt_reference(mass: float, nu_eff: float = 1.0) -> BarenblattProfile:
    """Single-phase steady state of mass M under the confining potential b / nu_eff"""
    if mass <= 0:
        raise ValueError(f"Mass must be positive, got {mass!r}")
    if nu_eff <= 0:
        raise ValueError(f"nu_eff must be positive, got {nu_eff!r}")

    s = math.sqrt(16.0 * nu_eff * mass / math.pi)
    return BarenblattProfile(
        mass=mass, nu_eff=nu_eff, height=s / (8.0 * nu_eff), radius=math.sqrt(s)
    )


def pme_barenblatt_height(mass: float) -> float:
    """Height beta of ``max(beta - |x|**2 / 4, 0)``, whose mass is 2 pi beta**2"""
    return math.sqrt(mass / (2.0 * math.pi))


def _breakpoints(prof: StationaryProfile) -> List[float]:
    radii = {0.0, prof.r1, prof.r2}
    if prof.r3 is not None:
        radii.add(prof.r3)
    return sorted(radii)


def _piece_on(pieces: List[Piece], r_lo: float, r_hi: float) -> Polynomial:
    middle = 0.5 * (r_lo + r_hi)
    for piece in pieces:
        if piece.r_lo <= middle < piece.r_hi:
            return Polynomial([piece.c, piece.slope])
    return Polynomial([0.0])


def profile_energy(prof: StationaryProfile) -> float:
    """Continuous energy of the profile, integrated exactly in s = r**2"""
    rho, nu = prof.params.rho, prof.params.nu
    b = Polynomial([0.0, 0.125])
    f_pieces, g_pieces = prof.f_pieces(), prof.g_pieces()

    energy = 0.0
    radii = _breakpoints(prof)
    for r_lo, r_hi in zip(radii[:-1], radii[1:]):
        if r_hi <= r_lo:
            continue
        F = _piece_on(f_pieces, r_lo, r_hi)
        G = _piece_on(g_pieces, r_lo, r_hi)
        density = (
            0.5 * rho * (F + G) ** 2
            + 0.5 * (1.0 - rho) * G**2
            + b * (rho / nu * F + G)
        )
        antiderivative = density.integ()
        energy += math.pi * (antiderivative(r_hi**2) - antiderivative(r_lo**2))
    return float(energy)


def phase_fluxes(prof: StationaryProfile, r) -> Tuple[np.ndarray, np.ndarray]:
    """Radial fluxes F (F + G + b/nu)' and G (rho F + G + b)'"""
    rho, nu = prof.params.rho, prof.params.nu
    radii = np.asarray(r, dtype=float)
    f_values, g_values = prof.evaluate(radii)
    df = _slope_at(prof.f_pieces(), radii) * 2.0 * radii
    dg = _slope_at(prof.g_pieces(), radii) * 2.0 * radii
    db = radii / 4.0
    return f_values * (df + dg + db / nu), g_values * (rho * df + dg + db)


def _slope_at(pieces: List[Piece], radii: np.ndarray) -> np.ndarray:
    slopes = np.zeros_like(radii, dtype=float)
    for piece in pieces:
        mask = (radii >= piece.r_lo) & (radii < piece.r_hi)
        slopes[mask] = piece.slope
    return slopes


def profiles_near_critical(
    p: PhysicalParams, which: str = "nu2", delta: float = 1e-8
) -> List[StationaryProfile]:
    """Profiles at nu* - delta, nu* and nu* + delta around one critical value"""
    crit = critical_nus(p).as_dict()
    if which not in crit:
        raise ValueError(f"Unknown critical value {which!r}; expected one of {list(crit)}")

    center = crit[which]
    logger.info("🔍 Profiles around critical value", which=which, nu=center, delta=delta)
    return [solve_profile(p.with_nu(center + offset)) for offset in (-delta, 0.0, delta)]
