#!/usr/bin/env python3
"""
🌱 Initial Conditions
Paraboloid bumps ``amplitude * (radius2 - |x - center|**2)^+`` evaluated at
the cell centres, and the named presets built from them.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from src.config import RunConfig
from src.mesh import Mesh
from src.scheme import State

logger = structlog.get_logger(__name__)


class BumpSpec(BaseModel):
    """Truncated paraboloid centred at ``center``"""

    model_config = ConfigDict(frozen=True)

    center: Tuple[float, float]
    radius2: float = Field(..., gt=0.0)
    amplitude: float = Field(..., gt=0.0)

    @classmethod
    def from_list(cls, values: List[float]) -> "BumpSpec":
        cx, cy, radius2, amplitude = values
        return cls(center=(cx, cy), radius2=radius2, amplitude=amplitude)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        offset = np.asarray(points, dtype=float) - np.asarray(self.center)
        return self.amplitude * np.maximum(self.radius2 - np.sum(offset**2, axis=1), 0.0)


FRESHWATER_BUMP = BumpSpec(center=(2 / 7, 2 / 7), radius2=1 / 16, amplitude=1 / 3)
SALTWATER_BUMP = BumpSpec(center=(5 / 7, 5 / 7), radius2=1 / 16, amplitude=1 / 3)

PRESETS: Dict[str, Tuple[Optional[BumpSpec], Optional[BumpSpec]]] = {
    "two-bumps": (FRESHWATER_BUMP, SALTWATER_BUMP),
    "single-phase-f": (FRESHWATER_BUMP, None),
    "single-phase-g": (None, SALTWATER_BUMP),
}


def paraboloid(mesh: Mesh, bump: Optional[BumpSpec]) -> np.ndarray:
    """Bump values at the cell centres (zeros when no bump is given)"""
    if bump is None:
        return np.zeros(mesh.n_cells)
    return bump.evaluate(mesh.centers)


def bumps_for(config: RunConfig) -> Tuple[Optional[BumpSpec], Optional[BumpSpec]]:
    if config.initial_condition == "custom":
        return (
            BumpSpec.from_list(config.f_bump) if config.f_bump else None,
            BumpSpec.from_list(config.g_bump) if config.g_bump else None,
        )
    return PRESETS[config.initial_condition]


def initial_state(config: RunConfig, mesh: Mesh) -> State:
    """Initial (f, g) on the mesh for the configured preset or custom bumps"""
    f_bump, g_bump = bumps_for(config)
    state = State(paraboloid(mesh, f_bump), paraboloid(mesh, g_bump), time=0.0)

    mass_f, mass_g = state.masses(mesh)
    if mass_f <= 0.0 and mass_g <= 0.0:
        raise ValueError("Initial condition carries no mass on this mesh")
    logger.info(
        "🌱 Initial state built",
        preset=config.initial_condition,
        mass_f=mass_f,
        mass_g=mass_g,
    )
    return state
