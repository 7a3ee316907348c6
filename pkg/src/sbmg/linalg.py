"""Sparse/dense linear algebra kernels: CSR utilities, dense LU for local
solves, the patched coarse-grid factorization, and right-preconditioned GMRES.

CSR storage and LU factorizations are delegated to scipy; GMRES is written
here because the contract pins details (full non-restarted Arnoldi, modified
Gram-Schmidt with a single conditional reorthogonalization pass, right
preconditioning so the convergence test is the unpreconditioned residual,
iteration count = preconditioned matvecs).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SparseMatrix = sp.csr_matrix

DENSE_COARSE_CAP = 4096


def make_csr(rows, cols, vals, n: int) -> SparseMatrix:
    """COO triplets -> canonical square CSR (sorted indices, summed dups)."""
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def check_csr(a: SparseMatrix) -> None:
    """Validate the SparseMatrix invariants (square, canonical row storage)."""
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix is not square: {a.shape}")
    if not a.has_sorted_indices:
        raise ValueError("CSR column indices are not sorted")
    for r in range(min(a.shape[0], 64)):
        cols = a.indices[a.indptr[r]:a.indptr[r + 1]]
        if len(np.unique(cols)) != len(cols):
            raise ValueError(f"duplicate columns in row {r}")


def spmv(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """y = A x with scipy's CSR kernel (fixed summation order per row)."""
    return a @ x


@dataclass
class DenseFactor:
    """LU factors (partial pivoting) of a small dense matrix."""

    lu: np.ndarray
    piv: np.ndarray
    n: int

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve((self.lu, self.piv), b, check_finite=False)


def factorize_dense(a: np.ndarray, cap: int = DENSE_COARSE_CAP) -> DenseFactor:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n > cap:
        raise ValueError(f"dense factorization of size {n} exceeds cap {cap}")
    lu, piv = sla.lu_factor(a, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = max(np.abs(a).max(), 1.0)
    if n and diag.min() <= 1e-14 * scale:
        raise np.linalg.LinAlgError("dense factorization is numerically singular")
    return DenseFactor(lu=lu, piv=piv, n=n)


class CoarseSolver:
    """Direct solver for the patched coarsest matrix.

    Dense LU below the size cap, sparse LU above it.  Identity rows are
    inserted for all-zero (inactive-DoF) rows, so those solution components
    simply equal the right-hand side there.
    """

    def __init__(self, factor, patched_rows: np.ndarray, dense: bool):
        self._factor = factor
        self.patched_rows = patched_rows
        self.is_dense = dense

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.is_dense:
            return self._factor.solve(b)
        x = self._factor.solve(b)
        if not np.all(np.isfinite(x)):
            raise np.linalg.LinAlgError("coarse solve produced non-finite values")
        return x


def coarse_factorize(a: SparseMatrix, inactive_dofs=None, cap: int = DENSE_COARSE_CAP) -> CoarseSolver:
    """Copy A, set unit diagonal on all-zero rows, factorize.

    If inactive_dofs is given, a zero row outside that set means an active
    DoF lost its couplings, which is a bug worth failing loudly on.
    """
    a = a.tocsr()
    n = a.shape[0]
    row_max = np.zeros(n)
    if a.nnz:
        np.maximum.at(
            row_max,
            np.repeat(np.arange(n), np.diff(a.indptr)),
            np.abs(a.data),
        )
    zero_rows = np.nonzero(row_max == 0.0)[0]
    if inactive_dofs is not None:
        inactive = np.zeros(n, dtype=bool)
        inactive[np.asarray(inactive_dofs, dtype=np.int64)] = True
        stray = zero_rows[~inactive[zero_rows]]
        if len(stray):
            raise np.linalg.LinAlgError(
                f"zero matrix rows at active DoFs (first: {stray[:5].tolist()})"
            )
    patch = sp.coo_matrix(
        (np.ones(len(zero_rows)), (zero_rows, zero_rows)), shape=(n, n)
    ).tocsr()
    patched = (a + patch).tocsr()
    if n <= cap:
        return CoarseSolver(factorize_dense(patched.toarray(), cap=cap), zero_rows, dense=True)
    try:
        factor = spla.splu(patched.tocsc())
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"coarse matrix singular after patching: {exc}")
    return CoarseSolver(factor, zero_rows, dense=False)


def gmres(
    a,
    b: np.ndarray,
    M: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tol: float = 1e-8,
    maxit: int = 100,
    residuals: Optional[list] = None,
    side: str = "right",
):
    """Full preconditioned GMRES with modified Gram-Schmidt.

    side="right" (default) solves A M u = b and returns x = M u, so the
    convergence test ||b - A x|| <= tol ||b|| is in the unpreconditioned
    norm.  side="left" solves M A x = M b with the test on the
    preconditioned residual ||M (b - A x)|| <= tol ||M b||.  Returns
    (x, iters, converged) with iters counting preconditioned matvecs.
    One reorthogonalization pass runs when MGS loses more than half the
    vector norm.  NaNs raise; (near-)breakdown exits through the usual
    residual test.
    """
    if side not in ("right", "left"):
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    matvec = a.dot if hasattr(a, "dot") else a
    apply_M = M if M is not None else (lambda v: v)
    n = b.shape[0]
    r0 = b if side == "right" or M is None else apply_M(b)
    bnorm = float(np.linalg.norm(r0))
    if residuals is not None:
        residuals.append(bnorm)
    if bnorm == 0.0:
        return np.zeros(n), 0, True

    basis = [r0 / bnorm]
    H: list = []  # columns of the (k+1) x k Hessenberg, Givens-reduced in place
    cs: list = []
    sn: list = []
    g = [bnorm]

    def assemble_solution(k):
        # back-substitute the k x k triangle, then map back to x-space
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            s = g[i] - sum(H[j][i] * y[j] for j in range(i + 1, k))
            y[i] = s / H[i][i]
        u = np.zeros(n)
        for j in range(k):
            u += y[j] * basis[j]
        if side == "right" and M is not None:
            return apply_M(u)
        return u

    def true_residual(x):
        r = b - matvec(x)
        if side == "left" and M is not None:
            r = apply_M(r)
        return float(np.linalg.norm(r))

    target = tol * bnorm
    trigger = target
    iters = 0
    converged = False
    x = np.zeros(n)
    solution_current = True  # x matches the iterate assembled so far (x0 = 0)
    for j in range(maxit):
        if side == "right":
            w = matvec(apply_M(basis[j]))
        else:
            w = apply_M(matvec(basis[j]))
        iters = j + 1
        if not np.all(np.isfinite(w)):
            raise ValueError("GMRES operator produced non-finite values")

        norm_before = float(np.linalg.norm(w))
        h = np.zeros(j + 2)
        for i in range(j + 1):
            hij = float(basis[i] @ w)
            w -= hij * basis[i]
            h[i] = hij
        wnorm = float(np.linalg.norm(w))
        if wnorm < 0.7071 * norm_before:
            # MGS lost more than half the norm: one reorthogonalization pass
            for i in range(j + 1):
                c = float(basis[i] @ w)
                w -= c * basis[i]
                h[i] += c
            wnorm = float(np.linalg.norm(w))
        h[j + 1] = wnorm

        for i in range(j):
            t = cs[i] * h[i] + sn[i] * h[i + 1]
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1]
            h[i] = t
        denom = float(np.hypot(h[j], h[j + 1]))
        if denom == 0.0:
            cs.append(1.0)
            sn.append(0.0)
        else:
            cs.append(h[j] / denom)
            sn.append(h[j + 1] / denom)
        h[j] = cs[j] * h[j] + sn[j] * h[j + 1]
        h[j + 1] = 0.0
        g.append(-sn[j] * g[j])
        g[j] = cs[j] * g[j]
        H.append(h[: j + 1].copy())

        est = abs(g[j + 1])
        if residuals is not None:
            residuals.append(est)

        breakdown = wnorm <= 1e-14 * max(norm_before, 1.0)
        if est <= trigger or breakdown:
            x = assemble_solution(j + 1)
            solution_current = True
            if true_residual(x) <= target * (1.0 + 1e-12):
                converged = True
                break
            if breakdown:
                break
            # Givens estimate drifted from the verified residual: keep going
            trigger = min(trigger, est) * 0.25
        else:
            solution_current = False

        if j + 1 < maxit:
            basis.append(w / wnorm)

    if not converged:
        if not solution_current:
            x = assemble_solution(iters)
        converged = true_residual(x) <= target * (1.0 + 1e-12)
    return x, iters, converged
