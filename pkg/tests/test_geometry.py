import numpy as np
import pytest

from sbmg.geometry import (
    LevelSetGeometry,
    ProjectionError,
    ShiftDatum,
    circle,
    closest_point_projection,
    normalized_signed_shift,
    unit_circle,
    volume_fraction_inside,
)


def subsample_fraction(lo, hi, geom, n=1024):
    """Midpoint-grid oracle for the inside fraction."""
    xs = lo[0] + (hi[0] - lo[0]) * (np.arange(n) + 0.5) / n
    ys = lo[1] + (hi[1] - lo[1]) * (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(xs, ys)
    return float(np.mean(geom.evaluate(np.stack([X, Y], axis=-1)) <= 0.0))


def test_unit_circle_values():
    g = unit_circle()
    assert g.evaluate(np.array([0.0, 0.0])) == -1.0
    assert abs(g.evaluate(np.array([1.0, 0.0]))) == 0.0
    assert abs(g.evaluate(np.array([0.6, 0.8]))) < 1e-15
    np.testing.assert_allclose(g.gradient(np.array([0.0, 2.0])), [0.0, 1.0])


def test_fraction_fully_inside():
    g = unit_circle()
    assert volume_fraction_inside((np.array([0.0, 0.0]), np.array([0.25, 0.25])), g) == 1.0


def test_fraction_fully_outside():
    g = unit_circle()
    assert volume_fraction_inside((np.array([1.0, 1.0]), np.array([1.25, 1.25])), g) == 0.0


def test_fraction_cut_cell_vs_subsampling():
    g = unit_circle()
    lo = np.array([0.9, -0.1])
    hi = np.array([1.1, 0.1])
    frac = volume_fraction_inside((lo, hi), g)
    oracle = subsample_fraction(lo, hi, g)
    assert abs(frac - oracle) < 1e-3


def test_fraction_more_cut_cells_vs_subsampling():
    g = unit_circle()
    rng = np.random.default_rng(42)
    for _ in range(12):
        theta = rng.uniform(0, 2 * np.pi)
        c = np.array([np.cos(theta), np.sin(theta)])
        lo = c - rng.uniform(0.03, 0.2)
        hi = c + rng.uniform(0.03, 0.2)
        frac = volume_fraction_inside((lo, hi), g)
        oracle = subsample_fraction(lo, hi, g)
        assert abs(frac - oracle) < 1.5e-3


def test_fraction_monotone_under_shrinking_domain():
    g_small = circle(0.9)
    g_big = unit_circle()
    rng = np.random.default_rng(3)
    for _ in range(20):
        lo = rng.uniform(-1.2, 1.0, size=2)
        hi = lo + rng.uniform(0.05, 0.3, size=2)
        f_small = volume_fraction_inside((lo, hi), g_small)
        f_big = volume_fraction_inside((lo, hi), g_big)
        assert f_small <= f_big + 1e-12


def test_fraction_rejects_nan_level_set():
    bad = LevelSetGeometry(
        evaluate=lambda x: np.full(np.asarray(x).shape[:-1], np.nan),
        gradient=lambda x: np.asarray(x, dtype=float),
    )
    with pytest.raises(ValueError):
        volume_fraction_inside((np.array([0.0, 0.0]), np.array([1.0, 1.0])), bad)


def test_fraction_rejects_degenerate_bounds():
    with pytest.raises(ValueError):
        volume_fraction_inside((np.array([0.0, 0.0]), np.array([0.0, 1.0])), unit_circle())


def test_projection_point_already_on_boundary():
    d = closest_point_projection(np.array([1.0, 0.0]), unit_circle())
    np.testing.assert_allclose(d.true_point, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(d.shift, [0.0, 0.0], atol=1e-12)


def test_projection_radial():
    d = closest_point_projection(np.array([0.3, 0.4]), unit_circle())
    np.testing.assert_allclose(d.true_point, [0.6, 0.8], atol=1e-10)
    np.testing.assert_allclose(d.shift, [0.3, 0.4], atol=1e-10)


def test_projection_matches_analytic_oracle():
    g = unit_circle()
    pt = np.array([0.7, 0.6])
    d = closest_point_projection(pt, g)
    oracle = pt / np.linalg.norm(pt)
    np.testing.assert_allclose(d.true_point, oracle, atol=1e-10)
    # shift = true - surrogate exactly
    np.testing.assert_array_equal(d.shift, d.true_point - d.surrogate_point)


def test_projection_idempotent_and_on_circle():
    g = unit_circle()
    rng = np.random.default_rng(11)
    for _ in range(25):
        pt = rng.uniform(-1.3, 1.3, size=2)
        if np.linalg.norm(pt) < 1e-2:
            continue
        d = closest_point_projection(pt, g)
        assert abs(np.linalg.norm(d.true_point) - 1.0) < 1e-10
        assert abs(float(g.evaluate(d.true_point))) < 1e-12
        again = closest_point_projection(d.true_point, g)
        assert np.linalg.norm(again.shift) <= 1e-10


def test_projection_vanishing_gradient_raises():
    with pytest.raises(ProjectionError):
        closest_point_projection(np.array([0.0, 0.0]), unit_circle())


def test_projection_newton_fallback():
    # hessian withheld: Newton degrades to the first-order fixed point, which
    # still converges on the circle
    g = unit_circle()
    no_hess = LevelSetGeometry(g.evaluate, g.gradient, None, convex=True)
    d = closest_point_projection(np.array([0.5, 0.1]), no_hess)
    assert abs(np.linalg.norm(d.true_point) - 1.0) < 1e-10


def test_normalized_signed_shift():
    zero = ShiftDatum(np.zeros(2), np.zeros(2), np.zeros(2), np.array([1.0, 0.0]))
    assert normalized_signed_shift(zero, 0.1) == 0.0
    out = ShiftDatum(np.zeros(2), np.zeros(2), np.array([0.1, 0.0]), np.array([1.0, 0.0]))
    assert normalized_signed_shift(out, 0.1) == pytest.approx(1.0)
    inward = ShiftDatum(np.zeros(2), np.zeros(2), np.array([-0.05, 0.0]), np.array([1.0, 0.0]))
    assert normalized_signed_shift(inward, 0.1) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        normalized_signed_shift(out, 0.0)
