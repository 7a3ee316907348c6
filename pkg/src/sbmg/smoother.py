"""Full-residual shy-patch smoother.

Patches are vertex-centered: the member cells are the active cells around a
grid vertex, and the subspace keeps only DoFs whose complete set of active
supporting cells lies inside the patch, so local residuals equal global
ones.  A vertex forms a patch only when it has at least `shyness` active
cells around it.

Patches are swept multiplicatively in a four-color order (vertex parity,
lexicographic inside each color).  Two same-color patches share no cell, so
their subspaces are disjoint and uncoupled, which makes the batched
per-color update identical to the sequential sweep in that order; interior
patches all share one translation-invariant local matrix and are solved as
one multi-RHS triangular solve.  Sweep 1 of a stage covers all patches,
sweeps 2..s only the patches containing surrogate-boundary cells.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .fem import DofHandler
from .linalg import DenseFactor, SparseMatrix, factorize_dense
from .mesh import MeshLevel, vertex_active_counts

log = logging.getLogger(__name__)

COLOR_ORDER = ((0, 0), (1, 0), (0, 1), (1, 1))


class SingularPatchError(RuntimeError):
    def __init__(self, vertex: int):
        self.vertex = vertex
        super().__init__(f"singular local matrix for patch at vertex {vertex}")


@dataclass(frozen=True)
class SmootherConfig:
    """Shyness threshold and stage count for the multi-stage schedule."""

    shyness: int = 3
    steps: int = 3

    def validate(self, dim: int = 2) -> None:
        if self.shyness < 1 or self.shyness > 2 ** dim:
            raise ValueError(f"shyness must be in [1, {2 ** dim}], got {self.shyness}")
        if self.steps < 1:
            raise ValueError(f"smoothing steps must be >= 1, got {self.steps}")


@dataclass
class Patch:
    """One subspace: center vertex, member cells, DoFs, factored local matrix."""

    center_vertex: int
    cells: tuple
    subspace_dofs: np.ndarray
    local_factor: Optional[DenseFactor]
    is_boundary: bool


@dataclass
class _IrregularPatch:
    vertex: int
    cells: tuple
    dofs: np.ndarray
    factor: Optional[DenseFactor]
    is_boundary: bool
    rows: Optional[SparseMatrix]


class PatchSet(Sequence):
    """All patches of one level, stored columnwise for batched sweeps."""

    def __init__(self, p: int, W: int, ndofs: int, shyness: int):
        self.p = p
        self.W = W
        self.ndofs = ndofs
        self.shyness = shyness
        self.reg_vertices = [np.empty((0, 2), dtype=np.int64) for _ in COLOR_ORDER]
        self.reg_dofs = [np.empty((0, 0), dtype=np.int64) for _ in COLOR_ORDER]
        self.rep_factor: Optional[DenseFactor] = None
        self.irr_by_color: List[List[_IrregularPatch]] = [[] for _ in COLOR_ORDER]
        self.bnd_by_color: List[List[_IrregularPatch]] = [[] for _ in COLOR_ORDER]
        self.uncovered_dofs = np.empty(0, dtype=np.int64)
        self._flat: Optional[list] = None

    # -- sequence protocol over the canonical sweep order -------------------
    def _flatten(self):
        if self._flat is None:
            flat = []
            n_vert = None
            for ci in range(len(COLOR_ORDER)):
                for vy, vx in self.reg_vertices[ci]:
                    flat.append(("reg", ci, int(vy), int(vx)))
                for k, pk in enumerate(self.irr_by_color[ci]):
                    flat.append(("irr", ci, k, pk))
            self._flat = flat
        return self._flat

    def __len__(self):
        return len(self._flatten())

    def __getitem__(self, i) -> Patch:
        kind, ci, a, b = self._flatten()[i]
        if kind == "irr":
            pk = b
            return Patch(pk.vertex, pk.cells, pk.dofs, pk.factor, pk.is_boundary)
        vy, vx = a, b
        p, W = self.p, self.W
        n_cells = (W - 1) // p
        vert = vy * (n_cells + 1) + vx
        cells = tuple(
            cy * n_cells + cx for cy in (vy - 1, vy) for cx in (vx - 1, vx)
        )
        off = np.arange(-(p - 1), p)
        jy = p * vy + off
        jx = p * vx + off
        dofs = (jy[:, None] * W + jx[None, :]).ravel()
        return Patch(vert, cells, dofs, self.rep_factor, False)

    @property
    def n_boundary(self) -> int:
        return sum(len(b) for b in self.bnd_by_color)


def build_patches(
    m: MeshLevel,
    dh: DofHandler,
    A: Optional[SparseMatrix],
    shyness: int,
    factorize: bool = True,
) -> PatchSet:
    """Build the patch decomposition for one level.

    Returns the PatchSet whose `uncovered_dofs` lists every active DoF that
    ended up in no patch (the coverage report).  A = None (with
    factorize=False) builds the index structure only, for coverage runs.
    """
    SmootherConfig(shyness=shyness).validate()
    if factorize and A is None:
        raise ValueError("need the assembled matrix to factorize patches")
    p = dh.p
    n = m.cells_per_dim
    W = dh.nodes_per_dim
    ps = PatchSet(p, W, dh.ndofs, shyness)

    counts = vertex_active_counts(m)
    has_sface = m.cell_has_surrogate_face()
    eligible = counts >= shyness

    # interior vertices whose 2x2 cell block is active and surrogate-free:
    # translation-invariant patches with the closed-form (2p-1)^2 subspace
    full_block = counts == 4
    blk = np.zeros_like(full_block)
    blk[1:-1, 1:-1] = (
        has_sface[:-1, :-1] | has_sface[:-1, 1:] | has_sface[1:, :-1] | has_sface[1:, 1:]
    )
    regular = full_block & ~blk & eligible
    irregular = eligible & ~regular

    covered = np.zeros(dh.ndofs, dtype=bool)
    off = np.arange(-(p - 1), p)

    vy_all, vx_all = np.nonzero(regular)
    for ci, (py, px) in enumerate(COLOR_ORDER):
        sel = (vy_all % 2 == py) & (vx_all % 2 == px)
        vys = vy_all[sel]
        vxs = vx_all[sel]
        ps.reg_vertices[ci] = np.stack([vys, vxs], axis=1)
        jy = (p * vys)[:, None] + off[None, :]
        jx = (p * vxs)[:, None] + off[None, :]
        dofs = (jy[:, :, None] * W + jx[:, None, :]).reshape(len(vys), -1)
        ps.reg_dofs[ci] = dofs
        if len(dofs):
            covered[dofs.ravel()] = True

    if factorize and any(len(v) for v in ps.reg_vertices):
        for ci in range(len(COLOR_ORDER)):
            if len(ps.reg_dofs[ci]):
                d0 = ps.reg_dofs[ci][0]
                rep = A[np.ix_(d0, d0)].toarray()
                try:
                    ps.rep_factor = factorize_dense(rep)
                except np.linalg.LinAlgError:
                    vy, vx = ps.reg_vertices[ci][0]
                    raise SingularPatchError(int(vy) * (n + 1) + int(vx))
                break

    iy_all, ix_all = np.nonzero(irregular)
    active = m.active
    for vy, vx in zip(iy_all.tolist(), ix_all.tolist()):
        cells = [
            cy * n + cx
            for cy in (vy - 1, vy)
            for cx in (vx - 1, vx)
            if 0 <= cx < n and 0 <= cy < n and active[cy, cx]
        ]
        member = set(cells)
        cand = np.unique(np.concatenate([dh.cell_dofs(c) for c in cells]))
        keep = []
        for d in cand.tolist():
            sup = [c for c in dh.dof_supporting_cells(d) if active[c // n, c % n]]
            if all(c in member for c in sup):
                keep.append(d)
        vert = vy * (n + 1) + vx
        if not keep:
            log.info("patch at vertex %d has an empty subspace; discarded", vert)
            continue
        dofs = np.asarray(keep, dtype=np.int64)
        is_boundary = any(has_sface[c // n, c % n] for c in cells)
        factor = None
        rows = None
        if factorize:
            local = A[np.ix_(dofs, dofs)].toarray()
            try:
                factor = factorize_dense(local)
            except np.linalg.LinAlgError:
                raise SingularPatchError(vert)
            rows = A[dofs, :].tocsr()
        pk = _IrregularPatch(vert, tuple(cells), dofs, factor, is_boundary, rows)
        ci = COLOR_ORDER.index((vy % 2, vx % 2))
        ps.irr_by_color[ci].append(pk)
        if is_boundary:
            ps.bnd_by_color[ci].append(pk)
        covered[dofs] = True

    active_dofs = dh.dof_is_active()
    ps.uncovered_dofs = np.nonzero(active_dofs & ~covered)[0]
    if len(ps.uncovered_dofs):
        log.info(
            "coverage report: %d active DoFs belong to no patch (shyness %d)",
            len(ps.uncovered_dofs),
            shyness,
        )
    return ps


def smooth(
    A: SparseMatrix,
    x: np.ndarray,
    b: np.ndarray,
    patches: PatchSet,
    stage_count: int,
    reverse: bool = False,
) -> np.ndarray:
    """Multiplicative subspace-correction sweeps under the stage rule.

    Sweep 1 visits all patches, sweeps 2..stage_count only boundary patches.
    reverse=True runs the mirrored patch order (post-smoothing).  x is
    updated in place and returned.
    """
    color_ids = range(len(COLOR_ORDER))
    if reverse:
        color_ids = reversed(list(color_ids))
    color_ids = list(color_ids)

    for sweep in range(stage_count):
        boundary_only = sweep > 0
        for ci in color_ids:
            if boundary_only:
                plist = patches.bnd_by_color[ci]
                if reverse:
                    plist = list(reversed(plist))
                for pk in plist:
                    r_loc = b[pk.dofs] - pk.rows @ x
                    x[pk.dofs] += pk.factor.solve(r_loc)
                continue
            D = patches.reg_dofs[ci]
            irr = patches.irr_by_color[ci]
            if not len(D) and not irr:
                continue
            r = b - A @ x
            if len(D):
                corr = patches.rep_factor.solve(r[D].T)
                x[D] += corr.T
            plist = list(reversed(irr)) if reverse else irr
            for pk in plist:
                x[pk.dofs] += pk.factor.solve(r[pk.dofs])
    return x


def boundary_patch_fraction(patches: PatchSet) -> float:
    """Share of patches owning at least one surrogate-boundary cell."""
    total = len(patches)
    if total == 0:
        return 0.0
    return patches.n_boundary / total
