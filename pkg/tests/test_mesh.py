import numpy as np
import pytest

from sbmg.geometry import unit_circle
from sbmg.mesh import (
    MeshLevel,
    classify_cells,
    dump_classification,
    extract_surrogate_boundary,
    vertex_active_cell_count,
    vertex_active_counts,
)

FACE_VERTICES = {
    # face index -> the two (dx, dy) vertex offsets on that face of cell (cx, cy)
    0: ((0, 0), (0, 1)),
    1: ((1, 0), (1, 1)),
    2: ((0, 0), (1, 0)),
    3: ((0, 1), (1, 1)),
}


def all_active_mesh(n):
    h = 2.02 / n
    return MeshLevel(
        level=0,
        cells_per_dim=n,
        h=h,
        origin=np.array([-1.01, -1.01]),
        active=np.ones((n, n), dtype=bool),
        fraction_inside=np.ones((n, n)),
    )


def test_level_geometry_basics():
    m = classify_cells(0, unit_circle(), 0.0)
    assert m.cells_per_dim == 4
    assert m.h == pytest.approx(2.02 / 4)
    np.testing.assert_allclose(m.origin, [-1.01, -1.01])
    m1 = classify_cells(1, unit_circle(), 0.0)
    assert m1.cells_per_dim == 8


def test_lambda_zero_matches_corner_oracle():
    # convexity of the disk: a cell is entirely inside iff all corners are
    g = unit_circle()
    for level in (1, 2, 3):
        m = classify_cells(level, g, 0.0)
        n, h = m.cells_per_dim, m.h
        xs = -1.01 + h * np.arange(n + 1)
        R = np.hypot(*np.meshgrid(xs, xs, indexing="xy"))
        oracle = (R[:-1, :-1] <= 1) & (R[:-1, 1:] <= 1) & (R[1:, :-1] <= 1) & (R[1:, 1:] <= 1)
        assert (m.active == oracle).all()


def test_fractions_match_subsampling_on_band_cells():
    g = unit_circle()
    m = classify_cells(2, g, 0.0)
    n, h = m.cells_per_dim, m.h
    rng = np.random.default_rng(5)
    band = np.argwhere((m.fraction_inside > 0) & (m.fraction_inside < 1))
    for cy, cx in band[rng.choice(len(band), size=10, replace=False)]:
        lo = m.origin + h * np.array([cx, cy])
        xs = lo[0] + h * (np.arange(512) + 0.5) / 512
        ys = lo[1] + h * (np.arange(512) + 0.5) / 512
        X, Y = np.meshgrid(xs, ys)
        oracle = np.mean(np.hypot(X, Y) <= 1.0)
        assert abs(m.fraction_inside[cy, cx] - oracle) < 2e-3


def test_active_set_grows_with_lambda():
    g = unit_circle()
    prev = None
    for lam in (0.0, 0.25, 0.5, 0.75, 1.0):
        m = classify_cells(3, g, lam)
        if prev is not None:
            assert (prev & ~m.active).sum() == 0  # prev subset of current
        prev = m.active.copy()


def test_dihedral_symmetry():
    m = classify_cells(4, unit_circle(), 0.0)
    a = m.active
    assert (a == a.T).all()
    assert (a == np.rot90(a)).all()
    assert (a == a[::-1, :]).all()


def test_lambda_validation():
    with pytest.raises(ValueError):
        classify_cells(1, unit_circle(), -0.1)


def test_surrogate_faces_fully_active_grid():
    m = all_active_mesh(2)
    faces = extract_surrogate_boundary(m)
    assert len(faces) == 8
    assert all(f.outward_normal.tolist() in ([1, 0], [-1, 0], [0, 1], [0, -1]) for f in faces)


def test_surrogate_faces_single_cell():
    n = 3
    m = all_active_mesh(n)
    m.active[:] = False
    m.active[1, 1] = True
    faces = extract_surrogate_boundary(m)
    assert len(faces) == 4
    assert {f.face_index for f in faces} == {0, 1, 2, 3}
    assert all(f.active_cell == 4 for f in faces)


def test_surrogate_faces_match_bruteforce():
    g = unit_circle()
    m = classify_cells(3, g, 0.0)
    n = m.cells_per_dim
    expected = set()
    for cy in range(n):
        for cx in range(n):
            if not m.active[cy, cx]:
                continue
            for fi, (dx, dy) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
                nx, ny = cx + dx, cy + dy
                if not (0 <= nx < n and 0 <= ny < n) or not m.active[ny, nx]:
                    expected.add((cy * n + cx, fi))
    got = {(f.active_cell, f.face_index) for f in m.surrogate_faces}
    assert got == expected


def test_faces_separate_active_from_inactive():
    m = classify_cells(3, unit_circle(), 0.25)
    n = m.cells_per_dim
    for f in m.surrogate_faces:
        cx, cy = f.active_cell % n, f.active_cell // n
        assert m.active[cy, cx]
        dx, dy = int(f.outward_normal[0]), int(f.outward_normal[1])
        nx, ny = cx + dx, cy + dy
        if 0 <= nx < n and 0 <= ny < n:
            assert not m.active[ny, nx]


def test_surrogate_boundary_is_closed():
    # every vertex meets an even number of surrogate faces
    m = classify_cells(4, unit_circle(), 0.0)
    n = m.cells_per_dim
    degree = np.zeros((n + 1, n + 1), dtype=int)
    for f in m.surrogate_faces:
        cx, cy = f.active_cell % n, f.active_cell // n
        for dx, dy in FACE_VERTICES[f.face_index]:
            degree[cy + dy, cx + dx] += 1
    assert (degree % 2 == 0).all()


def test_vertex_active_cell_count():
    m = all_active_mesh(4)
    n = m.cells_per_dim
    assert vertex_active_cell_count(m, 2 * (n + 1) + 2) == 4  # interior vertex
    assert vertex_active_cell_count(m, 0) == 1  # box corner
    m.active[0, 0] = False
    assert vertex_active_cell_count(m, 0) == 0


def test_vertex_counts_match_enumeration():
    m = classify_cells(4, unit_circle(), 0.0)
    counts = vertex_active_counts(m)
    n = m.cells_per_dim
    rng = np.random.default_rng(9)
    for v in rng.choice((n + 1) ** 2, size=200, replace=False):
        assert counts[v // (n + 1), v % (n + 1)] == vertex_active_cell_count(m, int(v))
    hist = np.bincount(counts.ravel(), minlength=5)
    assert hist.sum() == (n + 1) ** 2
    assert hist[4] > 0 and hist[0] > 0


def test_classification_dump(tmp_path):
    m = classify_cells(1, unit_circle(), 0.0)
    path = tmp_path / "cells.csv"
    dump_classification(m, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "i,j,fraction_inside,active"
    assert len(lines) == 1 + m.n_cells
