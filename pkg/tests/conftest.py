"""
🧪 Test Configuration and Shared Fixtures
Pytest configuration and shared fixtures for the seawater intrusion tests
"""

from typing import Tuple

import numpy as np
import pytest
import structlog

from src.config import RunConfig
from src.mesh import Mesh, build_square_grid, potential_field
from src.params import FluidParams, PhysicalParams
from src.scheme import State

# Configure structured logging for tests
structlog.configure(
    processors=[structlog.stdlib.filter_by_level, structlog.dev.ConsoleRenderer()],
    wrapper_class=structlog.stdlib.BoundLogger,
    logger_factory=structlog.stdlib.LoggerFactory(),
    cache_logger_on_first_use=True,
)


@pytest.fixture
def equal_mass_params() -> PhysicalParams:
    """rho = 0.9 with equal phase masses, nu inside the first interval"""
    return PhysicalParams(rho=0.9, nu=1.0, mass_f=0.1, mass_g=0.1)


@pytest.fixture
def fluid() -> FluidParams:
    return FluidParams(rho=0.9, nu=1.0)


@pytest.fixture
def grid4() -> Mesh:
    return build_square_grid(4)


@pytest.fixture
def grid8() -> Mesh:
    return build_square_grid(8)


@pytest.fixture
def two_cell_mesh() -> Mesh:
    """Unit square split into two rectangles sharing the edge x = 1/2"""
    vertices = [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]
    cells = [(0, 1, 4, 3), (1, 2, 5, 4)]
    return Mesh.from_cells(vertices, cells)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def bump_state():
    """Paraboloid bumps for f and g on any mesh"""

    def build(mesh: Mesh) -> State:
        x, y = mesh.centers[:, 0], mesh.centers[:, 1]
        f = np.maximum(0.1 - (x - 0.35) ** 2 - (y - 0.4) ** 2, 0.0)
        g = np.maximum(0.1 - (x - 0.6) ** 2 - (y - 0.55) ** 2, 0.0)
        return State(f, g)

    return build


@pytest.fixture
def full_support_steady():
    """Steady state with both phases positive everywhere (constant potentials)"""

    def build(
        mesh: Mesh, p: FluidParams, lambda_f: float = 2.0, lambda_g: float = 1.9
    ) -> Tuple[State, np.ndarray]:
        b = potential_field(mesh).b_values
        F = (lambda_f - lambda_g + b * (1.0 - 1.0 / p.nu)) / (1.0 - p.rho)
        G = lambda_f - F - b / p.nu
        assert F.min() > 0 and G.min() > 0
        return State(F, G), b

    return build


@pytest.fixture
def bump_config(tmp_path) -> RunConfig:
    """Two-bump initial data on a coarse grid, outputs under tmp_path"""
    return RunConfig(rho=0.9, nu=2.0, grid_n=8, t_max=0.01, out_dir=str(tmp_path / "out"))
