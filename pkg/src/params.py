#!/usr/bin/env python3
"""
⚖️ Physical Parameters
Density ratio, viscosity ratio and phase masses of the seawater-intrusion
system, the three critical viscosity ratios and the four-way classification
of the stationary configuration.
"""

from enum import Enum
from typing import Dict

import structlog
from pydantic import BaseModel, ConfigDict, Field

logger = structlog.get_logger(__name__)

CLASSIFICATION_TOLERANCE = 1e-12


class FluidParams(BaseModel):
    """Density ratio and viscosity ratio, without the phase masses"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    rho: float = Field(..., gt=0.0, lt=1.0, description="fresh/salt density ratio")
    nu: float = Field(..., gt=0.0, description="salt/fresh kinematic viscosity ratio")


class PhysicalParams(FluidParams):
    """Full parameter set: fluid ratios plus the freshwater and saltwater masses"""

    mass_f: float = Field(..., gt=0.0, description="freshwater mass M_f")
    mass_g: float = Field(..., gt=0.0, description="saltwater mass M_g")

    def with_nu(self, nu: float) -> "PhysicalParams":
        """Copy with a different viscosity ratio (revalidated)"""
        return PhysicalParams(
            rho=self.rho, nu=nu, mass_f=self.mass_f, mass_g=self.mass_g
        )

    @property
    def fluid(self) -> FluidParams:
        return FluidParams(rho=self.rho, nu=self.nu)


class CriticalNus(BaseModel):
    """The critical viscosity ratios nu1* < rho < nu2* < 1 < nu3*"""

    model_config = ConfigDict(frozen=True)

    nu1: float
    nu2: float
    nu3: float

    def as_dict(self) -> Dict[str, float]:
        return {"nu1": self.nu1, "nu2": self.nu2, "nu3": self.nu3}


class ConfigCase(str, Enum):
    """Support topology of the stationary profile"""

    CASE1 = "Case1"
    CASE2 = "Case2"
    CASE3 = "Case3"
    CASE4 = "Case4"
    AT_NU1 = "AtNu1"
    AT_NU2 = "AtNu2"
    AT_NU3 = "AtNu3"

    @property
    def is_boundary(self) -> bool:
        return self in (ConfigCase.AT_NU1, ConfigCase.AT_NU2, ConfigCase.AT_NU3)

    @property
    def formula_case(self) -> "ConfigCase":
        """Case whose closed-form formulas evaluate this configuration"""
        return _FORMULA_CASE.get(self, self)


# At nu1* and nu3* the root of the Case3/Case4 quadratic degenerates to 0,
# at nu2* the Case1 radii coincide.
_FORMULA_CASE = {
    ConfigCase.AT_NU1: ConfigCase.CASE3,
    ConfigCase.AT_NU2: ConfigCase.CASE1,
    ConfigCase.AT_NU3: ConfigCase.CASE4,
}


def critical_nus(p: PhysicalParams) -> CriticalNus:
    """Critical viscosity ratios separating the four configurations"""
    rho, mf, mg = p.rho, p.mass_f, p.mass_g
    nu1 = rho**2 * mf / (mg + rho * (mf - mg))
    nu2 = (rho * mf + mg) / (mf + mg)
    nu3 = 1.0 + (1.0 - rho) * mf / mg
    return CriticalNus(nu1=nu1, nu2=nu2, nu3=nu3)


def _near(nu: float, critical: float) -> bool:
    return abs(nu - critical) <= CLASSIFICATION_TOLERANCE * max(1.0, critical)


def classify(p: PhysicalParams) -> ConfigCase:
    """Configuration tag of the stationary profile for these parameters"""
    crit = critical_nus(p)
    nu = p.nu

    if _near(nu, crit.nu1):
        case = ConfigCase.AT_NU1
    elif _near(nu, crit.nu2):
        case = ConfigCase.AT_NU2
    elif _near(nu, crit.nu3):
        case = ConfigCase.AT_NU3
    elif nu < crit.nu1:
        case = ConfigCase.CASE3
    elif nu < crit.nu2:
        case = ConfigCase.CASE2
    elif nu < crit.nu3:
        case = ConfigCase.CASE1
    else:
        case = ConfigCase.CASE4

    logger.debug("Configuration classified", nu=nu, case=case.value, **crit.as_dict())
    return case
