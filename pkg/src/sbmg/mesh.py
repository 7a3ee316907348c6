"""Hierarchical Cartesian background meshes and active-cell classification.

Level l covers [-1.01, 1.01]^2 with 4 * 2^l cells per direction.  Cells are
classified active when their volume fraction outside the domain is at most
the threshold lambda; the surrogate boundary is the set of faces separating
active cells from inactive cells (or from the outside of the box).

Cell and vertex ids are lexicographic with x fastest: id = iy * n + ix.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .geometry import LevelSetGeometry, volume_fraction_inside

DOMAIN_LO = -1.01
DOMAIN_HI = 1.01
BASE_CELLS = 4
LAMBDA_EPS = 1e-10

# face order: 0 = -x, 1 = +x, 2 = -y, 3 = +y
FACE_NORMALS = (
    np.array([-1.0, 0.0]),
    np.array([1.0, 0.0]),
    np.array([0.0, -1.0]),
    np.array([0.0, 1.0]),
)


@dataclass(frozen=True)
class SurrogateFace:
    """One face of an active cell whose neighbor is inactive or absent."""

    active_cell: int
    face_index: int

    @property
    def outward_normal(self) -> np.ndarray:
        return FACE_NORMALS[self.face_index]


@dataclass
class MeshLevel:
    """One uniform grid level with classification results.

    active and fraction_inside are (n, n) arrays indexed [cy, cx] so the
    flat index equals the lexicographic cell id.
    """

    level: int
    cells_per_dim: int
    h: float
    origin: np.ndarray
    active: np.ndarray
    fraction_inside: np.ndarray
    surrogate_faces: List[SurrogateFace] = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return self.cells_per_dim * self.cells_per_dim

    def cell_id(self, cx: int, cy: int) -> int:
        return cy * self.cells_per_dim + cx

    def cell_xy(self, cell: int):
        return cell % self.cells_per_dim, cell // self.cells_per_dim

    def cell_origin(self, cell: int) -> np.ndarray:
        cx, cy = self.cell_xy(cell)
        return self.origin + self.h * np.array([cx, cy])

    def cell_bounds(self, cell: int):
        lo = self.cell_origin(cell)
        return lo, lo + self.h

    def cell_has_surrogate_face(self) -> np.ndarray:
        """(n, n) bool: cells owning at least one surrogate face."""
        n = self.cells_per_dim
        flag = np.zeros((n, n), dtype=bool)
        for face in self.surrogate_faces:
            cx, cy = self.cell_xy(face.active_cell)
            flag[cy, cx] = True
        return flag


def level_geometry(level: int):
    n = BASE_CELLS * (2 ** level)
    h = (DOMAIN_HI - DOMAIN_LO) / n
    return n, h


def classify_cells(level: int, geom: LevelSetGeometry, lam: float, max_depth: int = 8) -> MeshLevel:
    """Classify the cells of one level against the geometry.

    A cell is active iff (1 - fraction_inside) <= lambda + 1e-10.  Fully
    inside/outside cells are resolved by vectorized corner + inscribed-ball
    fast paths (exact corner containment for convex phi); only the band of
    undecided cells runs the recursive volume-fraction rule.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    n, h = level_geometry(level)
    origin = np.array([DOMAIN_LO, DOMAIN_LO])

    xs = DOMAIN_LO + h * np.arange(n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    corners = np.stack([gx, gy], axis=-1)  # [jy, jx, 2]
    phi_corner = np.asarray(geom.evaluate(corners))
    if np.any(np.isnan(phi_corner)):
        raise ValueError("level set returned NaN at grid corners")

    centers_1d = xs[:-1] + 0.5 * h
    cx_grid, cy_grid = np.meshgrid(centers_1d, centers_1d, indexing="xy")
    phi_center = np.asarray(geom.evaluate(np.stack([cx_grid, cy_grid], axis=-1)))

    half_diag = 0.5 * h * np.sqrt(2.0)
    c00 = phi_corner[:-1, :-1]
    c10 = phi_corner[:-1, 1:]
    c01 = phi_corner[1:, :-1]
    c11 = phi_corner[1:, 1:]
    all_neg = (c00 <= 0) & (c10 <= 0) & (c01 <= 0) & (c11 <= 0)
    all_pos = (c00 >= 0) & (c10 >= 0) & (c01 >= 0) & (c11 >= 0)

    frac = np.full((n, n), np.nan)
    frac[(phi_center < -half_diag) & all_neg] = 1.0
    frac[(phi_center > half_diag) & all_pos] = 0.0
    if geom.convex:
        frac[all_neg] = 1.0

    unresolved = np.argwhere(np.isnan(frac))
    for cy, cx in unresolved:
        lo = origin + h * np.array([cx, cy])
        frac[cy, cx] = volume_fraction_inside((lo, lo + h), geom, max_depth=max_depth)

    active = (1.0 - frac) <= lam + LAMBDA_EPS
    m = MeshLevel(
        level=level,
        cells_per_dim=n,
        h=h,
        origin=origin,
        active=active,
        fraction_inside=frac,
    )
    m.surrogate_faces = extract_surrogate_boundary(m)
    return m


def extract_surrogate_boundary(m: MeshLevel) -> List[SurrogateFace]:
    """Faces of active cells whose neighbor is inactive or absent, once each."""
    n = m.cells_per_dim
    act = m.active
    padded = np.zeros((n + 2, n + 2), dtype=bool)
    padded[1:-1, 1:-1] = act

    faces = []
    # neighbor offsets in (dy, dx) matching face order -x, +x, -y, +y
    neighbor = [(0, -1), (0, 1), (-1, 0), (1, 0)]
    for face_index, (dy, dx) in enumerate(neighbor):
        nbr = padded[1 + dy:n + 1 + dy, 1 + dx:n + 1 + dx]
        expose = act & ~nbr
        cys, cxs = np.nonzero(expose)
        for cy, cx in zip(cys.tolist(), cxs.tolist()):
            faces.append(SurrogateFace(active_cell=cy * n + cx, face_index=face_index))
    faces.sort(key=lambda f: (f.active_cell, f.face_index))
    return faces


def vertex_active_counts(m: MeshLevel) -> np.ndarray:
    """(n+1, n+1) array of active cells adjacent to each grid vertex."""
    n = m.cells_per_dim
    counts = np.zeros((n + 1, n + 1), dtype=np.int32)
    act = m.active.astype(np.int32)
    counts[:-1, :-1] += act
    counts[:-1, 1:] += act
    counts[1:, :-1] += act
    counts[1:, 1:] += act
    return counts


def vertex_active_cell_count(m: MeshLevel, vertex: int) -> int:
    """Number of active cells adjacent to a grid vertex (lex id, x fastest)."""
    n = m.cells_per_dim
    vx, vy = vertex % (n + 1), vertex // (n + 1)
    count = 0
    for cy in (vy - 1, vy):
        for cx in (vx - 1, vx):
            if 0 <= cx < n and 0 <= cy < n and m.active[cy, cx]:
                count += 1
    return count


def dump_classification(m: MeshLevel, path) -> None:
    """Debug CSV: one row (i, j, fraction_inside, active) per cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "fraction_inside", "active"])
        n = m.cells_per_dim
        for cy in range(n):
            for cx in range(n):
                writer.writerow(
                    [cx, cy, repr(float(m.fraction_inside[cy, cx])), str(bool(m.active[cy, cx])).lower()]
                )
