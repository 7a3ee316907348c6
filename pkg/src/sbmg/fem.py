"""Tensor-product Lagrange elements Q_p on the background grid.

Basis evaluation works at arbitrary reference points, including outside
[0, 1]^d: the Lagrange polynomials extrapolate exactly, which is what the
boundary-extension operator relies on.  Nodes are Gauss-Lobatto points of
the cell, so global DoFs sit on a per-cell Lobatto lattice with shared
cell-interface nodes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial import legendre as npleg


@lru_cache(maxsize=32)
def gauss_lobatto_points(n: int) -> np.ndarray:
    """n Gauss-Lobatto points on [0, 1] (endpoints included), n >= 2."""
    if n < 2:
        raise ValueError("need at least two Lobatto points")
    if n == 2:
        return np.array([0.0, 1.0])
    coeff = np.zeros(n)
    coeff[n - 1] = 1.0
    interior = npleg.legroots(npleg.legder(coeff))
    pts = np.concatenate([[-1.0], np.sort(interior), [1.0]])
    pts = 0.5 * (pts + 1.0)
    # enforce exact symmetry about 1/2 against root-finder roundoff
    return 0.5 * (pts + (1.0 - pts[::-1]))


@lru_cache(maxsize=32)
def gauss_legendre_rule(q: int) -> Tuple[np.ndarray, np.ndarray]:
    """q-point Gauss-Legendre rule on [0, 1]; weights sum to 1."""
    x, w = npleg.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def lagrange_values(nodes: np.ndarray, x) -> np.ndarray:
    """Values of the Lagrange basis for `nodes` at points x, shape (..., n).

    Plain product formula; exact polynomial extrapolation outside [0, 1].
    """
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    out = np.ones(x.shape + (n,))
    for i in range(n):
        for j in range(n):
            if j != i:
                out[..., i] *= (x - nodes[j]) / (nodes[i] - nodes[j])
    return out


def lagrange_derivatives(nodes: np.ndarray, x) -> np.ndarray:
    """First derivatives of the Lagrange basis at points x, shape (..., n)."""
    x = np.asarray(x, dtype=float)
    n = len(nodes)
    out = np.zeros(x.shape + (n,))
    for i in range(n):
        for k in range(n):
            if k == i:
                continue
            term = np.full(x.shape, 1.0 / (nodes[i] - nodes[k]))
            for j in range(n):
                if j != i and j != k:
                    term = term * (x - nodes[j]) / (nodes[i] - nodes[j])
            out[..., i] += term
    return out


@dataclass(frozen=True)
class Element:
    """Q_p Lagrange element with Gauss-Lobatto nodes on [0, 1] per direction."""

    degree: int
    dim: int = 2

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        if self.dim not in (1, 2):
            raise ValueError("only 1D/2D elements are supported")

    @property
    def nodes_1d(self) -> np.ndarray:
        return gauss_lobatto_points(self.degree + 1)

    @property
    def dofs_per_cell(self) -> int:
        return (self.degree + 1) ** self.dim


def shape_values(e: Element, xi) -> np.ndarray:
    """Basis values at reference point(s) xi; local index has x fastest.

    xi may have shape (d,) or (..., d) and may lie outside [0, 1]^d.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = xi[None, :] if single else xi
    nodes = e.nodes_1d
    vx = lagrange_values(nodes, pts[..., 0])
    if e.dim == 1:
        vals = vx
    else:
        vy = lagrange_values(nodes, pts[..., 1])
        vals = (vy[..., :, None] * vx[..., None, :]).reshape(pts.shape[:-1] + (e.dofs_per_cell,))
    return vals[0] if single else vals


def shape_gradients(e: Element, xi) -> np.ndarray:
    """Reference-coordinate basis gradients at xi, shape (..., dofs, d).

    The physical gradient on a Cartesian cell is this divided by h.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = xi[None, :] if single else xi
    nodes = e.nodes_1d
    vx = lagrange_values(nodes, pts[..., 0])
    dx = lagrange_derivatives(nodes, pts[..., 0])
    if e.dim == 1:
        grads = dx[..., :, None]
    else:
        vy = lagrange_values(nodes, pts[..., 1])
        dy = lagrange_derivatives(nodes, pts[..., 1])
        nloc = e.dofs_per_cell
        gx = (vy[..., :, None] * dx[..., None, :]).reshape(pts.shape[:-1] + (nloc,))
        gy = (dy[..., :, None] * vx[..., None, :]).reshape(pts.shape[:-1] + (nloc,))
        grads = np.stack([gx, gy], axis=-1)
    return grads[0] if single else grads


class QuadratureKind(enum.Enum):
    CELL = "cell"
    FACE = "face"


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-cell (or reference-face) Gauss rule, q = p + 2 per direction."""

    kind: QuadratureKind
    points: np.ndarray
    weights: np.ndarray


def cell_quadrature(p: int) -> QuadratureRule:
    q = p + 2
    x, w = gauss_legendre_rule(q)
    px, py = np.meshgrid(x, x, indexing="xy")
    pts = np.stack([px.ravel(), py.ravel()], axis=-1)
    wts = np.outer(w, w).ravel()
    return QuadratureRule(QuadratureKind.CELL, pts, wts)


def face_quadrature(p: int) -> QuadratureRule:
    q = p + 2
    x, w = gauss_legendre_rule(q)
    return QuadratureRule(QuadratureKind.FACE, x.copy(), w.copy())


class DofHandler:
    """Global continuous Q_p numbering over all background cells of a level.

    Global node (ix, iy) has id iy * W + ix with W = p * cells_per_dim + 1;
    all background DoFs exist whether or not their cells are active.
    """

    def __init__(self, mesh, degree: int):
        self.mesh = mesh
        self.p = degree
        self.element = Element(degree, 2)
        self.nodes_per_dim = degree * mesh.cells_per_dim + 1
        self.ndofs = self.nodes_per_dim ** 2
        p = degree
        ax, ay = np.meshgrid(np.arange(p + 1), np.arange(p + 1), indexing="xy")
        self._local_x = ax.ravel()
        self._local_y = ay.ravel()

    def cell_dofs(self, cell: int) -> np.ndarray:
        n = self.mesh.cells_per_dim
        cx, cy = cell % n, cell // n
        ix = self.p * cx + self._local_x
        iy = self.p * cy + self._local_y
        return (iy * self.nodes_per_dim + ix).astype(np.int64)

    def cells_dofs(self, cells: np.ndarray) -> np.ndarray:
        """(n_cells, (p+1)^2) global dof ids, vectorized."""
        n = self.mesh.cells_per_dim
        cells = np.asarray(cells)
        cx = cells % n
        cy = cells // n
        ix = self.p * cx[:, None] + self._local_x[None, :]
        iy = self.p * cy[:, None] + self._local_y[None, :]
        return iy * self.nodes_per_dim + ix

    def dof_xy(self, dof: int):
        return dof % self.nodes_per_dim, dof // self.nodes_per_dim

    def dof_supporting_cells(self, dof: int):
        """Cells (active or not) whose closure carries this DoF."""
        ix, iy = self.dof_xy(dof)
        return [
            cy * self.mesh.cells_per_dim + cx
            for cy in self._support_1d(iy)
            for cx in self._support_1d(ix)
        ]

    def _support_1d(self, i: int):
        p, n = self.p, self.mesh.cells_per_dim
        if i % p == 0:
            c = i // p
            return [c_ for c_ in (c - 1, c) if 0 <= c_ < n]
        return [i // p]

    def node_coords_1d(self) -> np.ndarray:
        """Physical coordinate of node index i along one axis (Lobatto lattice)."""
        p = self.p
        idx = np.arange(self.nodes_per_dim)
        cell = np.minimum(idx // p, self.mesh.cells_per_dim - 1)
        local = idx - p * cell
        gl = gauss_lobatto_points(p + 1)
        return self.mesh.origin[0] + self.mesh.h * (cell + gl[local])

    def dof_coords(self) -> np.ndarray:
        """(ndofs, 2) physical node coordinates (x fastest)."""
        c = self.node_coords_1d()
        gx, gy = np.meshgrid(c, c, indexing="xy")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def dof_is_active(self) -> np.ndarray:
        """Bool mask: DoF supported by at least one active cell."""
        n = self.mesh.cells_per_dim
        W = self.nodes_per_dim
        mask = np.zeros((W, W), dtype=bool)
        cys, cxs = np.nonzero(self.mesh.active)
        p = self.p
        for ay in range(p + 1):
            for ax in range(p + 1):
                mask[p * cys + ay, p * cxs + ax] = True
        return mask.ravel()

    def support_counts(self):
        """Per-node (total supports, active supports) as (W, W) int arrays."""
        n = self.mesh.cells_per_dim
        W = self.nodes_per_dim
        p = self.p
        total = np.zeros((W, W), dtype=np.int8)
        act = np.zeros((W, W), dtype=np.int8)
        amask = self.mesh.active.astype(np.int8)
        for ay in range(p + 1):
            sly = slice(ay, ay + p * (n - 1) + 1, p)
            for ax in range(p + 1):
                slx = slice(ax, ax + p * (n - 1) + 1, p)
                total[sly, slx] += 1
                act[sly, slx] += amask
        return total, act


def locate_reference_point(m, cell: int, x) -> np.ndarray:
    """Map a physical point into the cell's reference coordinates.

    xi = (x - cell_origin) / h componentwise; may lie outside [0, 1]^2.
    """
    x = np.asarray(x, dtype=float)
    return (x - m.cell_origin(cell)) / m.h
