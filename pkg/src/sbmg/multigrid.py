"""Multigrid hierarchy (h- or p-coarsening) and the V-cycle preconditioner.

Per-level systems are re-assembled from per-level classification rather
than formed as Galerkin products, so every level is a genuine SBM system.
Transfer operators act on all background DoFs.  On tensor-product grids the
natural embedding factorizes exactly as P = P1 (x) P1, so levels store one
1D factor per pair and apply transfers as two thin sparse-dense products;
the assembled 2D prolongation matrices remain available (and are what the
tests exercise) through build_h_prolongation / build_p_prolongation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from .assembly import SbmSystem, assemble, constant_one, constant_zero
from .fem import DofHandler, gauss_lobatto_points, lagrange_values
from .geometry import LevelSetGeometry
from .linalg import CoarseSolver, SparseMatrix, coarse_factorize
from .mesh import MeshLevel, classify_cells
from .smoother import PatchSet, build_patches, smooth

WRITE_CONSISTENCY_TOL = 1e-12


def _transfer_factor_1d(
    n_coarse: int,
    h_coarse: float,
    p_coarse: int,
    n_fine: int,
    h_fine: float,
    p_fine: int,
    origin: float,
) -> sp.csr_matrix:
    """1D embedding matrix: coarse nodal values -> fine nodal values.

    Rows are fine nodes; each row holds the coarse-cell basis evaluated at
    the fine node location.  Fine nodes on cell interfaces are written once
    (left owner) after verifying both candidate writers agree.
    """
    W_f = p_fine * n_fine + 1
    W_c = p_coarse * n_coarse + 1
    gl_f = gauss_lobatto_points(p_fine + 1)
    nodes_c = gauss_lobatto_points(p_coarse + 1)

    idx = np.arange(W_f)
    cell_f = np.minimum(idx // p_fine, n_fine - 1)
    x = origin + h_fine * (cell_f + gl_f[idx - p_fine * cell_f])

    ratio = round(h_coarse / h_fine)
    owner = np.minimum(cell_f // ratio, n_coarse - 1)
    xi = (x - (origin + h_coarse * owner)) / h_coarse
    vals = lagrange_values(nodes_c, xi)  # (W_f, p_c + 1)

    # duplicate-write check: interface nodes evaluated from the other owner
    on_iface = (idx % p_fine == 0) & (idx > 0) & (idx < W_f - 1)
    for i in np.nonzero(on_iface)[0]:
        alt_owner = min((idx[i] // p_fine - 1) // ratio, n_coarse - 1)
        if alt_owner == owner[i]:
            continue
        xi_alt = (x[i] - (origin + h_coarse * alt_owner)) / h_coarse
        v_alt = lagrange_values(nodes_c, np.array([xi_alt]))[0]
        row = np.zeros(W_c)
        row[p_coarse * owner[i] + np.arange(p_coarse + 1)] = vals[i]
        row_alt = np.zeros(W_c)
        row_alt[p_coarse * alt_owner + np.arange(p_coarse + 1)] = v_alt
        if np.max(np.abs(row - row_alt)) > WRITE_CONSISTENCY_TOL:
            raise ValueError(f"inconsistent duplicate prolongation writes at fine node {i}")

    cols = (p_coarse * owner[:, None] + np.arange(p_coarse + 1)[None, :]).ravel()
    indptr = np.arange(W_f + 1) * (p_coarse + 1)
    return sp.csr_matrix((vals.ravel(), cols, indptr), shape=(W_f, W_c))


@dataclass
class TensorTransfer:
    """Separable prolongation between two levels, applied as P1 V P1^T."""

    p1: sp.csr_matrix

    @property
    def W_fine(self) -> int:
        return self.p1.shape[0]

    @property
    def W_coarse(self) -> int:
        return self.p1.shape[1]

    def prolong(self, coarse_vec: np.ndarray) -> np.ndarray:
        V = coarse_vec.reshape(self.W_coarse, self.W_coarse)
        tmp = self.p1 @ V  # (W_f, W_c)
        return (self.p1 @ tmp.T).T.ravel()

    def restrict(self, fine_vec: np.ndarray) -> np.ndarray:
        R = fine_vec.reshape(self.W_fine, self.W_fine)
        tmp = self.p1.T @ R  # (W_c, W_f)
        return (self.p1.T @ tmp.T).T.ravel()

    def to_sparse(self) -> SparseMatrix:
        out = sp.kron(self.p1, self.p1, format="csr")
        out.sort_indices()
        return out


def _h_factor(coarse: MeshLevel, fine: MeshLevel, p: int) -> sp.csr_matrix:
    return _transfer_factor_1d(
        coarse.cells_per_dim, coarse.h, p, fine.cells_per_dim, fine.h, p, coarse.origin[0]
    )


def _p_factor(mesh: MeshLevel, p_coarse: int, p_fine: int) -> sp.csr_matrix:
    return _transfer_factor_1d(
        mesh.cells_per_dim, mesh.h, p_coarse, mesh.cells_per_dim, mesh.h, p_fine, mesh.origin[0]
    )


def build_h_prolongation(coarse: MeshLevel, fine: MeshLevel, p: int) -> SparseMatrix:
    """Assembled 2D embedding: fine DoFs x coarse DoFs over the full mesh."""
    if fine.cells_per_dim != 2 * coarse.cells_per_dim:
        raise ValueError("fine mesh is not the uniform refinement of the coarse mesh")
    return TensorTransfer(_h_factor(coarse, fine, p)).to_sparse()


def build_p_prolongation(mesh: MeshLevel, p_coarse: int, p_fine: Optional[int] = None) -> SparseMatrix:
    if p_fine is None:
        p_fine = p_coarse + 1
    return TensorTransfer(_p_factor(mesh, p_coarse, p_fine)).to_sparse()


def restrict(P: SparseMatrix, r_fine: np.ndarray) -> np.ndarray:
    """Residual restriction: the transpose of the prolongation."""
    return P.T @ r_fine


@dataclass
class LevelData:
    mesh: MeshLevel
    dh: DofHandler
    system: SbmSystem
    patches: Optional[PatchSet]
    transfer: Optional[TensorTransfer]  # from the next-coarser level to this one


@dataclass(frozen=True)
class VCycleConfig:
    """Equal pre/post stage counts and the smoother settings."""

    smooth_steps: int = 3
    shyness: int = 3


@dataclass
class MgHierarchy:
    mode: str  # "h" or "p"
    levels: List[LevelData]
    coarse: CoarseSolver
    config: VCycleConfig

    @property
    def finest(self) -> LevelData:
        return self.levels[-1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """One V-cycle as the preconditioner application."""
        return v_cycle(self, len(self.levels) - 1, v)


def v_cycle(hier: MgHierarchy, level: int, rhs: np.ndarray, stage_count: Optional[int] = None) -> np.ndarray:
    """One V-cycle correction from `level` down to the direct coarse solve."""
    if level == 0:
        return hier.coarse.solve(rhs)
    ld = hier.levels[level]
    s = hier.config.smooth_steps if stage_count is None else stage_count
    A = ld.system.matrix
    x = np.zeros_like(rhs)
    smooth(A, x, rhs, ld.patches, s, reverse=False)
    r = rhs - A @ x
    rc = ld.transfer.restrict(r)
    xc = v_cycle(hier, level - 1, rc, stage_count)
    x += ld.transfer.prolong(xc)
    smooth(A, x, rhs, ld.patches, s, reverse=True)
    return x


def build_h_hierarchy(
    refinements: int,
    p: int,
    geom: LevelSetGeometry,
    lam: float,
    shyness: int = 3,
    smooth_steps: int = 3,
    sigma: float = 5.0,
    f: Callable = constant_one,
    g: Callable = constant_zero,
    zero_shift: bool = False,
) -> MgHierarchy:
    """Mesh-coarsened hierarchy: levels 0..refinements at fixed degree p."""
    levels: List[LevelData] = []
    prev: Optional[LevelData] = None
    for lev in range(refinements + 1):
        mesh = classify_cells(lev, geom, lam)
        dh = DofHandler(mesh, p)
        system = assemble(mesh, dh, geom, sigma=sigma, f=f, g=g, zero_shift=zero_shift)
        patches = None
        transfer = None
        if lev > 0:
            patches = build_patches(mesh, dh, system.matrix, shyness)
            transfer = TensorTransfer(_h_factor(prev.mesh, mesh, p))
        ld = LevelData(mesh, dh, system, patches, transfer)
        levels.append(ld)
        prev = ld
    inactive = np.nonzero(~levels[0].dh.dof_is_active())[0]
    coarse = coarse_factorize(levels[0].system.matrix, inactive_dofs=inactive)
    return MgHierarchy("h", levels, coarse, VCycleConfig(smooth_steps, shyness))


def build_p_hierarchy(
    refinements: int,
    p: int,
    geom: LevelSetGeometry,
    lam: float,
    shyness: int = 3,
    smooth_steps: int = 3,
    sigma: float = 5.0,
    f: Callable = constant_one,
    g: Callable = constant_zero,
    zero_shift: bool = False,
) -> MgHierarchy:
    """Degree-coarsened hierarchy p, p-1, .., 1 on the finest mesh."""
    if p < 2:
        raise ValueError("p-multigrid needs degree >= 2")
    mesh = classify_cells(refinements, geom, lam)
    levels: List[LevelData] = []
    for q in range(1, p + 1):
        dh = DofHandler(mesh, q)
        system = assemble(mesh, dh, geom, sigma=sigma, f=f, g=g, zero_shift=zero_shift)
        patches = None
        transfer = None
        if q > 1:
            patches = build_patches(mesh, dh, system.matrix, shyness)
            transfer = TensorTransfer(_p_factor(mesh, q - 1, q))
        levels.append(LevelData(mesh, dh, system, patches, transfer))
    inactive = np.nonzero(~levels[0].dh.dof_is_active())[0]
    coarse = coarse_factorize(levels[0].system.matrix, inactive_dofs=inactive)
    return MgHierarchy("p", levels, coarse, VCycleConfig(smooth_steps, shyness))
