#!/usr/bin/env python3
"""
🛠️ Run Configuration
Validated run settings with three override layers on top of the defaults:
a flat ``key=value`` file, ``INTRUSION_*`` environment variables and
command-line flags (in increasing precedence).
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.exceptions import UsageError
from src.mesh import Mesh, build_square_grid, load_mesh
from src.params import FluidParams, PhysicalParams
from src.scheme import TimeStepper

logger = structlog.get_logger(__name__)

ENV_PREFIX = "INTRUSION_"
INITIAL_CONDITIONS = ("two-bumps", "single-phase-f", "single-phase-g", "custom")
LIST_FIELDS = ("nus", "f_bump", "g_bump")


class RunConfig(BaseModel):
    """All settings of a profile, run, sweep or steady computation"""

    model_config = ConfigDict(extra="forbid", validate_assignment=True, allow_inf_nan=False)

    rho: float = Field(0.9, gt=0.0, lt=1.0)
    nu: float = Field(1.0, gt=0.0)
    mass_f: Optional[float] = Field(None, gt=0.0)
    mass_g: Optional[float] = Field(None, gt=0.0)
    grid_n: int = Field(32, ge=2)
    mesh_file: Optional[str] = None
    t_max: float = Field(5.0, ge=0.0)
    dt_max: float = Field(2e-4, gt=0.0)
    dt_min: float = Field(1e-12, gt=0.0)
    newton_tol: float = Field(1e-9, gt=0.0)
    newton_max_iter: int = Field(30, ge=1)
    initial_condition: str = "two-bumps"
    f_bump: List[float] = Field(default_factory=list)
    g_bump: List[float] = Field(default_factory=list)
    out_dir: str = "output"
    seed: Optional[int] = None
    nus: List[float] = Field(default_factory=list)
    workers: int = Field(1, ge=1)
    checkpoint_every: int = Field(0, ge=0)
    steady_dt_max: float = Field(0.05, gt=0.0)
    steady_t_max: float = Field(500.0, gt=0.0)
    profile_samples: int = Field(1001, ge=2)
    log_level: str = "info"

    @field_validator("initial_condition")
    @classmethod
    def _known_initial_condition(cls, value: str) -> str:
        if value not in INITIAL_CONDITIONS:
            raise ValueError(f"initial_condition must be one of {INITIAL_CONDITIONS}")
        return value

    @field_validator("f_bump", "g_bump")
    @classmethod
    def _bump_shape(cls, value: List[float]) -> List[float]:
        if value and (len(value) != 4 or value[2] <= 0 or value[3] <= 0):
            raise ValueError("bump is cx,cy,radius2,amplitude with positive radius2 and amplitude")
        return value

    @field_validator("nus")
    @classmethod
    def _positive_nus(cls, value: List[float]) -> List[float]:
        if any(nu <= 0 for nu in value):
            raise ValueError("every nu must be positive")
        return value

    @field_validator("log_level")
    @classmethod
    def _log_level(cls, value: str) -> str:
        if value.lower() not in ("debug", "info", "warning", "error", "critical"):
            raise ValueError(f"Unknown log level {value!r}")
        return value.lower()

    def fluid_params(self) -> FluidParams:
        return FluidParams(rho=self.rho, nu=self.nu)

    def physical_params(self) -> PhysicalParams:
        if self.mass_f is None or self.mass_g is None:
            raise UsageError("Both --mass-f and --mass-g are required")
        return PhysicalParams(
            rho=self.rho, nu=self.nu, mass_f=self.mass_f, mass_g=self.mass_g
        )

    def build_mesh(self) -> Mesh:
        if self.mesh_file:
            return load_mesh(self.mesh_file)
        return build_square_grid(self.grid_n)

    def stepper(self, dt_max: Optional[float] = None) -> TimeStepper:
        return TimeStepper(
            dt_max=dt_max or self.dt_max,
            dt_min=self.dt_min,
            newton_tol=self.newton_tol,
            newton_max_iter=self.newton_max_iter,
        )

    def to_text(self) -> str:
        """Serialize as key=value lines read back by from_text"""
        lines = []
        for name in type(self).model_fields:
            value = getattr(self, name)
            if value is None:
                text = ""
            elif isinstance(value, list):
                text = ",".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{name}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(**parse_key_values(text))


def _coerce(name: str, raw: str) -> Any:
    raw = raw.strip()
    if name in LIST_FIELDS:
        return [float(item) for item in raw.split(",") if item.strip()]
    if raw == "":
        return None
    return raw


def parse_key_values(text: str) -> Dict[str, Any]:
    """Flat key=value text; '#' starts a comment"""
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"Config line {lineno} is not key=value: {line!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower().replace("-", "_")
        values[key] = _coerce(key, value)
    return values


def env_overrides(env: Mapping[str, str]) -> Dict[str, Any]:
    """Settings taken from INTRUSION_<FIELD> variables"""
    overrides: Dict[str, Any] = {}
    for name in RunConfig.model_fields:
        key = ENV_PREFIX + name.upper()
        if key in env:
            overrides[name] = _coerce(name, env[key])
    return overrides


def load_config(
    config_file: Optional[Union[str, Path]] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Defaults < config file < environment < explicit overrides"""
    values: Dict[str, Any] = {}
    if config_file:
        values.update(parse_key_values(Path(config_file).read_text()))
    values.update(env_overrides(os.environ if env is None else env))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    config = RunConfig(**values)
    logger.debug("Configuration resolved", source=str(config_file) if config_file else None)
    return config
