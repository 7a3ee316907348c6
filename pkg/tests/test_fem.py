import numpy as np
import pytest

from sbmg.fem import (
    DofHandler,
    Element,
    cell_quadrature,
    face_quadrature,
    gauss_lobatto_points,
    locate_reference_point,
    shape_gradients,
    shape_values,
)
from sbmg.geometry import unit_circle
from sbmg.mesh import classify_cells


def test_gauss_lobatto_points():
    np.testing.assert_allclose(gauss_lobatto_points(2), [0.0, 1.0])
    np.testing.assert_allclose(gauss_lobatto_points(3), [0.0, 0.5, 1.0])
    np.testing.assert_allclose(
        gauss_lobatto_points(4),
        [0.0, 0.5 - 0.5 / np.sqrt(5), 0.5 + 0.5 / np.sqrt(5), 1.0],
    )


def test_kronecker_property():
    for p in (1, 2, 3, 4):
        e = Element(p, 2)
        nodes = e.nodes_1d
        for j, (ny, nx) in enumerate((a, b) for a in nodes for b in nodes):
            vals = shape_values(e, np.array([nx, ny]))
            expect = np.zeros(e.dofs_per_cell)
            expect[j] = 1.0
            np.testing.assert_allclose(vals, expect, atol=1e-12)


def test_linear_extrapolation_1d():
    np.testing.assert_allclose(shape_values(Element(1, 1), np.array([1.5])), [-0.5, 1.5])


def test_quadratic_extrapolation_oracle():
    # Lagrange polynomials on nodes {0, 1/2, 1} evaluated at 1.2:
    # 2(x-1/2)(x-1), -4x(x-1), 2x(x-1/2)
    vals = shape_values(Element(2, 1), np.array([1.2]))
    np.testing.assert_allclose(vals, [0.28, -0.96, 1.68], atol=1e-14)


def test_partition_of_unity_everywhere():
    rng = np.random.default_rng(2)
    for p in (1, 2, 3, 5):
        e = Element(p, 2)
        pts = rng.uniform(-1.5, 2.5, size=(40, 2))
        np.testing.assert_allclose(shape_values(e, pts).sum(axis=1), 1.0, atol=1e-10)
        # absolute tolerance tracks the ~1e3 operand size at degree 5
        np.testing.assert_allclose(
            shape_gradients(e, pts).sum(axis=1), 0.0, atol=1e-8
        )


def test_p1_gradient_constant():
    g = shape_gradients(Element(1, 1), np.array([0.37]))
    np.testing.assert_allclose(g[:, 0], [-1.0, 1.0])


def test_gradients_match_finite_differences():
    e = Element(3, 2)
    xi = np.array([0.3, 0.9])
    eps = 1e-6
    grads = shape_gradients(e, xi)
    for d in range(2):
        step = np.zeros(2)
        step[d] = eps
        fd = (shape_values(e, xi + step) - shape_values(e, xi - step)) / (2 * eps)
        np.testing.assert_allclose(grads[:, d], fd, atol=1e-6)


def test_dof_count_formula():
    g = unit_circle()
    for level in (0, 1, 2):
        m = classify_cells(level, g, 0.0)
        for p in (1, 2, 3):
            dh = DofHandler(m, p)
            assert dh.ndofs == (p * 4 * 2 ** level + 1) ** 2


def test_shared_dofs_are_identical():
    m = classify_cells(1, unit_circle(), 0.0)
    dh = DofHandler(m, 3)
    n = m.cells_per_dim
    left = dh.cell_dofs(0).reshape(4, 4)
    right = dh.cell_dofs(1).reshape(4, 4)
    np.testing.assert_array_equal(left[:, -1], right[:, 0])
    below = dh.cell_dofs(0).reshape(4, 4)
    above = dh.cell_dofs(n).reshape(4, 4)
    np.testing.assert_array_equal(below[-1, :], above[0, :])


def test_polynomial_reproduction_with_extrapolation():
    m = classify_cells(1, unit_circle(), 0.0)
    rng = np.random.default_rng(8)
    for p in (1, 2, 3):
        dh = DofHandler(m, p)
        coords = dh.dof_coords()

        def poly(x, y):
            # total degree <= p
            out = 1.3 - 0.7 * x + 0.4 * y
            if p >= 2:
                out = out + 0.9 * x * y - 0.5 * x * x
            if p >= 3:
                out = out + 0.2 * x * x * y
            return out

        nodal = poly(coords[:, 0], coords[:, 1])
        for _ in range(20):
            cell = rng.integers(0, m.n_cells)
            xi = rng.uniform(-0.6, 1.6, size=2)
            x = m.cell_origin(int(cell)) + m.h * xi
            val = shape_values(dh.element, xi) @ nodal[dh.cell_dofs(int(cell))]
            assert abs(val - poly(x[0], x[1])) < 1e-12


def test_locate_reference_point():
    m = classify_cells(1, unit_circle(), 0.0)
    cell = 9
    center = m.cell_origin(cell) + 0.5 * m.h
    np.testing.assert_allclose(locate_reference_point(m, cell, center), [0.5, 0.5])
    x = m.cell_origin(cell) + m.h * np.array([1.5, 0.5])
    np.testing.assert_allclose(locate_reference_point(m, cell, x), [1.5, 0.5])
    rng = np.random.default_rng(4)
    for _ in range(30):
        xi = rng.uniform(-1, 2, size=2)
        x = m.cell_origin(cell) + m.h * xi
        np.testing.assert_allclose(locate_reference_point(m, cell, x), xi, atol=1e-14)


def test_quadrature_rules():
    for p in (1, 2, 3, 4):
        cq = cell_quadrature(p)
        fq = face_quadrature(p)
        q = p + 2
        assert len(cq.weights) == q * q
        assert len(fq.weights) == q
        assert (cq.weights > 0).all() and (fq.weights > 0).all()
        assert cq.weights.sum() == pytest.approx(1.0)  # reference cell measure
        assert fq.weights.sum() == pytest.approx(1.0)
        # degree of exactness 2q-1 covers x^(2p+3)
        exact = 1.0 / (2 * q)
        assert np.sum(fq.weights * fq.points ** (2 * q - 1)) == pytest.approx(exact)


def test_dof_activity_matches_supports():
    m = classify_cells(2, unit_circle(), 0.0)
    for p in (1, 2):
        dh = DofHandler(m, p)
        act = dh.dof_is_active()
        n = m.cells_per_dim
        rng = np.random.default_rng(6)
        for dof in rng.choice(dh.ndofs, size=min(300, dh.ndofs), replace=False):
            cells = dh.dof_supporting_cells(int(dof))
            expect = any(m.active[c // n, c % n] for c in cells)
            assert act[dof] == expect


def test_support_counts():
    m = classify_cells(1, unit_circle(), 0.0)
    dh = DofHandler(m, 2)
    total, active = dh.support_counts()
    assert total.max() == 4 and total.min() == 1
    n = m.cells_per_dim
    rng = np.random.default_rng(13)
    for dof in rng.choice(dh.ndofs, size=100, replace=False):
        cells = dh.dof_supporting_cells(int(dof))
        iy, ix = int(dof) // dh.nodes_per_dim, int(dof) % dh.nodes_per_dim
        assert total[iy, ix] == len(cells)
        assert active[iy, ix] == sum(bool(m.active[c // n, c % n]) for c in cells)
