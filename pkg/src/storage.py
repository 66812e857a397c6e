#!/usr/bin/env python3
"""
💾 Result Files
CSV exports of profiles, cell data, energy series and sweep summaries, and
the checkpoint format: ``#`` header lines carrying the mesh hash, t and dt,
followed by per-cell ``cell,f,g`` rows.

Floats are written with the shortest round-trip representation and read
back with ``float_precision="round_trip"``, so checkpoints restore states
bit for bit.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from src.exceptions import CheckpointError
from src.mesh import Mesh
from src.profiles import RadialSample
from src.scheme import State

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


def _write(frame: pd.DataFrame, path: PathLike, kind: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False)
    logger.info("💾 CSV written", kind=kind, path=str(target), rows=len(frame))
    return target


def cross_section_frame(samples: Sequence[RadialSample]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "r": [s.r for s in samples],
            "F": [s.f_value for s in samples],
            "G": [s.g_value for s in samples],
        }
    )


def write_cross_section(samples: Sequence[RadialSample], path: PathLike) -> Path:
    return _write(cross_section_frame(samples), path, "cross_section")


def write_cell_data(
    mesh: Mesh, columns: Dict[str, np.ndarray], path: PathLike
) -> Path:
    """One row per cell: id, centre and the given value columns"""
    frame = pd.DataFrame(
        {"cell": np.arange(mesh.n_cells), "x": mesh.centers[:, 0], "y": mesh.centers[:, 1]}
    )
    for name, values in columns.items():
        frame[name] = np.asarray(values, dtype=float)
    return _write(frame, path, "cell_data")


def write_energy_series(reports: Sequence, path: PathLike) -> Path:
    frame = pd.DataFrame(
        {
            "t": [r.time for r in reports],
            "energy": [r.energy for r in reports],
            "relative_energy": [r.relative_energy for r in reports],
            "entropy": [r.entropy for r in reports],
            "entropy_lower_bound": [r.entropy_lower_bound for r in reports],
            "entropy_upper_bound": [r.entropy_upper_bound for r in reports],
            "dissipation_surrogate": [r.dissipation_surrogate for r in reports],
            "entropy_dissipation": [r.entropy_dissipation for r in reports],
        }
    )
    return _write(frame, path, "energy_series")


def write_sweep_summary(outcomes: Sequence, path: PathLike) -> Path:
    rows = []
    for outcome in outcomes:
        record = outcome.record
        rows.append(
            {
                "nu": outcome.nu,
                "p": record.fitted_rate if record else np.nan,
                "C": record.fitted_prefactor if record else np.nan,
                "fit_residual": record.fit_residual if record else np.nan,
                "error": outcome.error or "",
            }
        )
    return _write(pd.DataFrame(rows, columns=["nu", "p", "C", "fit_residual", "error"]), path, "sweep_summary")


def write_table(rows: List[Dict], path: PathLike, kind: str = "table") -> Path:
    return _write(pd.DataFrame(rows), path, kind)


def write_checkpoint(state: State, mesh: Mesh, dt: float, path: PathLike) -> Path:
    """Header (mesh hash, t, dt) plus per-cell f, g"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"cell": np.arange(len(state)), "f": state.f, "g": state.g})
    with target.open("w", newline="") as handle:
        handle.write(f"# mesh_hash={mesh.mesh_hash()}\n")
        handle.write(f"# t={state.time!r}\n")
        handle.write(f"# dt={float(dt)!r}\n")
        frame.to_csv(handle, index=False)
    logger.debug("Checkpoint written", path=str(target), t=state.time)
    return target


def read_checkpoint(
    path: PathLike, mesh: Optional[Mesh] = None
) -> Tuple[State, float, str]:
    """Restore (state, dt, mesh hash); verifies the hash when a mesh is given"""
    source = Path(path)
    header: Dict[str, str] = {}
    with source.open() as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()

    missing = {"mesh_hash", "t", "dt"} - set(header)
    if missing:
        raise CheckpointError(f"Checkpoint {source} lacks header fields {sorted(missing)}")

    frame = pd.read_csv(source, comment="#", float_precision="round_trip")
    if list(frame.columns) != ["cell", "f", "g"]:
        raise CheckpointError(f"Unexpected checkpoint columns {list(frame.columns)}")
    if mesh is not None:
        if header["mesh_hash"] != mesh.mesh_hash():
            raise CheckpointError(f"Checkpoint {source} was written for another mesh")
        if len(frame) != mesh.n_cells:
            raise CheckpointError("Checkpoint and mesh disagree on the number of cells")

    state = State(
        frame["f"].to_numpy(dtype=float),
        frame["g"].to_numpy(dtype=float),
        time=float(header["t"]),
    )
    return state, float(header["dt"]), header["mesh_hash"]
