#!/usr/bin/env python3
"""
🔷 Admissible Meshes
Two-point-flux meshes of a bounded polygonal domain: structured square
grids, a plain-text mesh loader/writer, cell measures, edge
transmissibilities and the per-cell confining potential.

Mesh file format::

    # comment
    VERTICES
    <id> <x> <y>
    CELLS
    <id> <vertex id> <vertex id> <vertex id> [...]
    CENTERS            (optional)
    <id> <x> <y>

Cells missing from CENTERS get their circumcenter (triangles) or their
centroid (other polygons).
"""

import hashlib
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
import structlog

from src.exceptions import AdmissibilityError, MeshParseError, NegativeMeasureError

logger = structlog.get_logger(__name__)

ORTHOGONALITY_TOLERANCE = 1e-10
SECTIONS = ("VERTICES", "CELLS", "CENTERS")


class PotentialField:
    """Confining potential b evaluated at the cell centres"""

    def __init__(self, b_values: np.ndarray, center: Tuple[float, float], scale: float):
        self.b_values = np.asarray(b_values, dtype=float)
        self.center = center
        self.scale = scale

    def __len__(self) -> int:
        return len(self.b_values)


class Mesh:
    """Admissible mesh: cells, interior edges and their geometry"""

    def __init__(
        self,
        vertices: np.ndarray,
        cells: List[Tuple[int, ...]],
        centers: np.ndarray,
        measures: np.ndarray,
        edges: np.ndarray,
        edge_measures: np.ndarray,
        edge_distances: np.ndarray,
        boundary_edges: List[Tuple[int, int]],
    ):
        self.vertices = vertices
        self.cells = cells
        self.centers = centers
        self.measures = measures
        self.edges = edges
        self.edge_measures = edge_measures
        self.edge_distances = edge_distances
        self.boundary_edges = boundary_edges
        self.transmissibilities = edge_measures / edge_distances

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def domain_area(self) -> float:
        """Area enclosed by the boundary edges (shoelace over CCW boundary)"""
        if not self.boundary_edges:
            return 0.0
        pairs = np.asarray(self.boundary_edges)
        a, b = self.vertices[pairs[:, 0]], self.vertices[pairs[:, 1]]
        return float(0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))

    @classmethod
    def from_cells(
        cls,
        vertices: Sequence[Sequence[float]],
        cells: Sequence[Sequence[int]],
        centers: Optional[Dict[int, Tuple[float, float]]] = None,
    ) -> "Mesh":
        """Build and validate a mesh from vertex coordinates and cell vertex lists"""
        points = np.asarray(vertices, dtype=float)
        centers = centers or {}

        oriented: List[Tuple[int, ...]] = []
        measures = np.empty(len(cells))
        cell_centers = np.empty((len(cells), 2))
        for k, cell in enumerate(cells):
            polygon = tuple(int(v) for v in cell)
            area = _signed_area(points[list(polygon)])
            if area == 0.0:
                raise NegativeMeasureError(f"Cell {k} has zero area")
            if area < 0.0:
                logger.warning("⚠️ Clockwise cell reoriented", cell=k)
                polygon = polygon[::-1]
                area = -area
            oriented.append(polygon)
            measures[k] = area
            if k in centers:
                cell_centers[k] = centers[k]
            else:
                cell_centers[k] = _default_center(points[list(polygon)])

        owners: Dict[Tuple[int, int], List[Tuple[int, Tuple[int, int]]]] = {}
        for k, polygon in enumerate(oriented):
            for a, b in zip(polygon, polygon[1:] + polygon[:1]):
                key = (min(a, b), max(a, b))
                owners.setdefault(key, []).append((k, (a, b)))

        edges, edge_measures, edge_distances = [], [], []
        boundary: List[Tuple[int, int]] = []
        for key, sharing in owners.items():
            if len(sharing) > 2:
                raise MeshParseError(f"Edge {key} is shared by {len(sharing)} cells")
            if len(sharing) == 1:
                boundary.append(sharing[0][1])
                continue

            (K, _), (L, _) = sorted(sharing)
            if K == L:
                raise MeshParseError(f"Edge {key} repeated within cell {K}")
            tangent = points[key[1]] - points[key[0]]
            length = float(np.hypot(*tangent))
            link = cell_centers[L] - cell_centers[K]
            distance = float(np.hypot(*link))
            if distance == 0.0:
                raise AdmissibilityError(
                    f"Cells {K} and {L} share their centre; d_sigma vanishes",
                    edge=(K, L),
                )
            cosine = abs(float(np.dot(link, tangent))) / (distance * length)
            if cosine > ORTHOGONALITY_TOLERANCE:
                raise AdmissibilityError(
                    f"Centre segment of cells {K}|{L} is not orthogonal to "
                    f"their edge (|cos| = {cosine:.3e})",
                    edge=(K, L),
                )
            edges.append((K, L))
            edge_measures.append(length)
            edge_distances.append(distance)

        order = sorted(range(len(edges)), key=lambda i: edges[i])
        mesh = cls(
            vertices=points,
            cells=oriented,
            centers=cell_centers,
            measures=measures,
            edges=np.asarray([edges[i] for i in order], dtype=int).reshape(-1, 2),
            edge_measures=np.asarray([edge_measures[i] for i in order]),
            edge_distances=np.asarray([edge_distances[i] for i in order]),
            boundary_edges=boundary,
        )
        logger.debug("Mesh assembled", cells=mesh.n_cells, interior_edges=mesh.n_edges)
        return mesh

    def difference_matrix(self) -> sp.csr_matrix:
        """Sparse E x N matrix with +1 at K and -1 at L for each edge K|L"""
        n_edges = self.n_edges
        rows = np.repeat(np.arange(n_edges), 2)
        cols = self.edges.reshape(-1)
        data = np.tile([1.0, -1.0], n_edges)
        return sp.csr_matrix((data, (rows, cols)), shape=(n_edges, self.n_cells))

    def laplacian(self) -> sp.csr_matrix:
        """Two-point-flux operator D^T diag(tau) D"""
        D = self.difference_matrix()
        return (D.T @ sp.diags(self.transmissibilities) @ D).tocsr()

    def mesh_hash(self) -> str:
        """sha256 fingerprint of the mesh geometry"""
        digest = hashlib.sha256()
        for array in (self.centers, self.measures, self.edges, self.transmissibilities):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()


def _signed_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _default_center(polygon: np.ndarray) -> np.ndarray:
    if len(polygon) == 3:
        return _circumcenter(polygon)
    x, y = polygon[:, 0], polygon[:, 1]
    x_next, y_next = np.roll(x, -1), np.roll(y, -1)
    cross = x * y_next - x_next * y
    area = 0.5 * cross.sum()
    return np.array(
        [
            np.sum((x + x_next) * cross) / (6.0 * area),
            np.sum((y + y_next) * cross) / (6.0 * area),
        ]
    )


def _circumcenter(triangle: np.ndarray) -> np.ndarray:
    (ax, ay), (bx, by), (cx, cy) = triangle
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    return np.array(
        [
            (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d,
            (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d,
        ]
    )


def build_square_grid(n: int, size: float = 1.0) -> Mesh:
    """Uniform n x n grid of square cells on [0, size]^2"""
    if n < 2:
        raise ValueError(f"Grid needs at least 2 cells per side, got {n}")

    h = size / n
    coords = np.arange(n + 1) * h
    vertices = [(x, y) for y in coords for x in coords]

    def vid(i: int, j: int) -> int:
        return j * (n + 1) + i

    cells, centers = [], {}
    for j in range(n):
        for i in range(n):
            k = len(cells)
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
            centers[k] = ((i + 0.5) * h, (j + 0.5) * h)

    mesh = Mesh.from_cells(vertices, cells, centers)
    logger.info("🔷 Square grid built", n=n, cells=mesh.n_cells, interior_edges=mesh.n_edges)
    return mesh


def parse_mesh(text: str) -> Mesh:
    """Parse the plain-text mesh description"""
    section: Optional[str] = None
    vertex_ids: Dict[int, int] = {}
    vertices: List[Tuple[float, float]] = []
    cell_ids: Dict[int, int] = {}
    cells: List[Tuple[int, ...]] = []
    raw_centers: Dict[int, Tuple[Tuple[float, float], int]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.upper() in SECTIONS:
            section = line.upper()
            continue
        if section is None:
            raise MeshParseError(f"Data before any section header: {line!r}", lineno)

        tokens = line.split()
        try:
            ident = int(tokens[0])
            if section == "VERTICES":
                if len(tokens) != 3:
                    raise MeshParseError("Vertex needs an id and two coordinates", lineno)
                if ident in vertex_ids:
                    raise MeshParseError(f"Duplicate vertex id {ident}", lineno)
                vertex_ids[ident] = len(vertices)
                vertices.append((float(tokens[1]), float(tokens[2])))
            elif section == "CELLS":
                if len(tokens) < 4:
                    raise MeshParseError("Cell needs at least three vertices", lineno)
                if ident in cell_ids:
                    raise MeshParseError(f"Duplicate cell id {ident}", lineno)
                members = [int(t) for t in tokens[1:]]
                if len(set(members)) != len(members):
                    raise MeshParseError(f"Cell {ident} repeats a vertex", lineno)
                unknown = [v for v in members if v not in vertex_ids]
                if unknown:
                    raise MeshParseError(f"Cell {ident} uses unknown vertices {unknown}", lineno)
                cell_ids[ident] = len(cells)
                cells.append(tuple(vertex_ids[v] for v in members))
            else:
                if len(tokens) != 3:
                    raise MeshParseError("Centre needs a cell id and two coordinates", lineno)
                if ident in raw_centers:
                    raise MeshParseError(f"Duplicate centre for cell {ident}", lineno)
                raw_centers[ident] = ((float(tokens[1]), float(tokens[2])), lineno)
        except ValueError as e:
            raise MeshParseError(f"Malformed number in {line!r}: {e}", lineno) from e

    if not vertices or not cells:
        raise MeshParseError("Mesh needs both VERTICES and CELLS sections")

    centers: Dict[int, Tuple[float, float]] = {}
    for ident, (point, lineno) in raw_centers.items():
        if ident not in cell_ids:
            raise MeshParseError(f"Centre given for unknown cell {ident}", lineno)
        centers[cell_ids[ident]] = point

    return Mesh.from_cells(vertices, cells, centers)


def load_mesh(path: Union[str, Path]) -> Mesh:
    """Read and validate a mesh file"""
    source = Path(path)
    try:
        mesh = parse_mesh(source.read_text())
    except (MeshParseError, AdmissibilityError, NegativeMeasureError) as e:
        logger.error("❌ Mesh rejected", path=str(source), error=str(e))
        raise

    logger.info(
        "🔷 Mesh loaded",
        path=str(source),
        cells=mesh.n_cells,
        interior_edges=mesh.n_edges,
    )
    return mesh


def format_mesh(mesh: Mesh) -> str:
    lines = ["VERTICES"]
    lines += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    lines.append("CELLS")
    lines += [f"{k} " + " ".join(str(v) for v in cell) for k, cell in enumerate(mesh.cells)]
    lines.append("CENTERS")
    lines += [f"{k} {x!r} {y!r}" for k, (x, y) in enumerate(mesh.centers.tolist())]
    return "\n".join(lines) + "\n"


def write_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    """Write a mesh in the format read by load_mesh"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(format_mesh(mesh))
    logger.info("💾 Mesh written", path=str(target), cells=mesh.n_cells)
    return target


def potential_field(
    mesh: Mesh, center: Tuple[float, float] = (0.5, 0.5), scale: float = 0.125
) -> PotentialField:
    """b_K = scale * |x_K - center|**2 for every cell"""
    offset = mesh.centers - np.asarray(center, dtype=float)
    values = scale * np.sum(offset**2, axis=1)
    return PotentialField(values, center=center, scale=scale)
