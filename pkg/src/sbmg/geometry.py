"""Implicit geometry services.

The computational domain is described by a level set phi (negative inside),
and everything the solver needs from the geometry goes through three
operations: inside-volume fractions of axis-aligned cells, closest-point
projection of surrogate-boundary points onto the zero level set, and the
normalized signed shift magnitude used for reporting.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class GeometryKind(enum.Enum):
    UNIT_CIRCLE = "unit_circle"
    USER_DEFINED = "user_defined"


class ProjectionError(RuntimeError):
    """Closest-point projection failed to converge at a point."""

    def __init__(self, point, message="closest-point projection did not converge"):
        self.point = np.asarray(point, dtype=float)
        super().__init__(f"{message} at {self.point.tolist()}")


@dataclass(frozen=True)
class LevelSetGeometry:
    """Implicit domain Omega = {x : phi(x) < 0}.

    evaluate/gradient must accept points of shape (2,) or (..., 2) and
    return values of shape () / (...) resp. (..., 2).  hessian is only
    needed pointwise (Newton projection) and may be None.  convex declares
    that phi is a convex function, enabling an exact all-corners-inside
    containment test for boxes.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    descriptor: GeometryKind = GeometryKind.USER_DEFINED
    convex: bool = False


def _circle_value(x):
    x = np.asarray(x, dtype=float)
    return np.linalg.norm(x, axis=-1) - 1.0


def _circle_gradient(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.where(r == 0.0, 1.0, r)


def _circle_hessian(x):
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ZeroDivisionError("circle hessian singular at the origin")
    n = x / r
    return (np.eye(2) - np.outer(n, n)) / r


def unit_circle() -> LevelSetGeometry:
    """phi(x) = ||x|| - 1; the disk benchmark geometry.  phi is convex."""
    return LevelSetGeometry(
        evaluate=_circle_value,
        gradient=_circle_gradient,
        hessian=_circle_hessian,
        descriptor=GeometryKind.UNIT_CIRCLE,
        convex=True,
    )


def circle(radius: float, center=(0.0, 0.0)) -> LevelSetGeometry:
    """phi(x) = ||x - c|| - R.  Used by shrinking-domain tests."""
    c = np.asarray(center, dtype=float)
    rad = float(radius)

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - c, axis=-1) - rad

    def grad(x):
        x = np.asarray(x, dtype=float)
        d = x - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.where(r == 0.0, 1.0, r)

    def hess(x):
        d = np.asarray(x, dtype=float) - c
        r = float(np.linalg.norm(d))
        n = d / r
        return (np.eye(2) - np.outer(n, n)) / r

    return LevelSetGeometry(value, grad, hess, GeometryKind.USER_DEFINED, convex=True)


@dataclass
class ShiftDatum:
    """Pairing of a surrogate-boundary point with its true-boundary image.

    shift = true_point - surrogate_point exactly; surrogate_normal and
    owner_cell are filled by the assembly once the face context is known.
    """

    surrogate_point: np.ndarray
    true_point: np.ndarray
    shift: np.ndarray
    surrogate_normal: Optional[np.ndarray] = None
    owner_cell: Optional[int] = None


def _halfplane_box_fraction(d, nx, ny, wx, wy):
    """Fraction of an axis-aligned box lying in {n . (x - c) <= d}.

    c is the box center, (nx, ny) a unit normal, (wx, wy) the box widths.
    Exact for a straight cut; used as the depth-exhausted leaf estimate
    with the linearized level set.  Vectorized over numpy arrays.
    """
    a = np.abs(nx) * wx
    b = np.abs(ny) * wy
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    t = np.clip(d + 0.5 * (a + b), 0.0, a + b)
    thin = lo < 1e-14 * np.maximum(hi, 1.0)
    # piecewise CDF of n.x over the box: quadratic ramps at both ends,
    # linear in between; degenerates to pure linear for axis-aligned cuts
    with np.errstate(divide="ignore", invalid="ignore"):
        ramp_lo = t * t / (2.0 * lo * hi)
        mid = (t - 0.5 * lo) / hi
        ramp_hi = 1.0 - (hi + lo - t) ** 2 / (2.0 * lo * hi)
        frac = np.where(t <= lo, ramp_lo, np.where(t >= hi, ramp_hi, mid))
        frac = np.where(thin, np.where(hi > 0, np.clip(t / np.where(hi > 0, hi, 1.0), 0.0, 1.0), 0.5), frac)
    return np.clip(frac, 0.0, 1.0)


def volume_fraction_inside(cell_bounds, geom: LevelSetGeometry, max_depth: int = 8) -> float:
    """Return |cell ∩ Omega| / |cell| for an axis-aligned box.

    Recursive bisection with two pruning tests per sub-box: all corner
    values sharing one sign plus the inscribed-ball test |phi(center)| >
    half-diagonal (valid for 1-Lipschitz level sets) classifies the box
    fully in or out; for convex phi, all corners inside is exact on its
    own.  Unresolved boxes at max_depth fall back to a half-plane cut
    estimate from the midpoint sample.
    """
    lo, hi = cell_bounds
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not np.all(hi > lo):
        raise ValueError(f"degenerate cell bounds {lo} .. {hi}")
    total = float(np.prod(hi - lo))

    box_lo = lo[None, :]
    box_wid = (hi - lo)[None, :]
    inside = 0.0

    for depth in range(max_depth + 1):
        n = box_lo.shape[0]
        if n == 0:
            break
        area = box_wid[:, 0] * box_wid[:, 1]
        corners = box_lo[:, None, :] + box_wid[:, None, :] * np.array(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        )
        phi_c = np.asarray(geom.evaluate(corners))
        centers = box_lo + 0.5 * box_wid
        phi_m = np.asarray(geom.evaluate(centers))
        if np.any(np.isnan(phi_c)) or np.any(np.isnan(phi_m)):
            raise ValueError("level set returned NaN inside a cell")

        half_diag = 0.5 * np.linalg.norm(box_wid, axis=1)
        same_neg = np.all(phi_c <= 0.0, axis=1)
        same_pos = np.all(phi_c >= 0.0, axis=1)
        ball_in = (phi_m < -half_diag) & same_neg
        ball_out = (phi_m > half_diag) & same_pos
        if geom.convex:
            ball_in = ball_in | same_neg

        inside += float(np.sum(area[ball_in]))
        keep = ~(ball_in | ball_out)
        if not np.any(keep):
            break
        box_lo = box_lo[keep]
        box_wid = box_wid[keep]

        if depth == max_depth:
            centers = box_lo + 0.5 * box_wid
            phi_m = np.asarray(geom.evaluate(centers))
            grad = np.asarray(geom.gradient(centers))
            gn = np.linalg.norm(grad, axis=1)
            ok = gn > 1e-14
            frac = np.where(phi_m <= 0.0, 1.0, 0.0)
            safe = np.where(ok, gn, 1.0)
            cut = _halfplane_box_fraction(
                -phi_m / safe, grad[:, 0] / safe, grad[:, 1] / safe,
                box_wid[:, 0], box_wid[:, 1],
            )
            frac = np.where(ok, cut, frac)
            inside += float(np.sum(frac * box_wid[:, 0] * box_wid[:, 1]))
            box_lo = box_lo[:0]
            break

        half = 0.5 * box_wid
        shifts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        box_lo = (box_lo[:, None, :] + half[:, None, :] * shifts).reshape(-1, 2)
        box_wid = np.repeat(half, 4, axis=0)

    return min(max(inside / total, 0.0), 1.0)


def closest_point_projection(
    point,
    geom: LevelSetGeometry,
    tol: float = 1e-12,
    max_newton: int = 50,
    max_fallback: int = 200,
) -> ShiftDatum:
    """Project a surrogate point onto {phi = 0}, minimizing the distance.

    Newton on the Lagrangian stationarity system (x - x~ + mu grad phi = 0,
    phi = 0), started from the first-order normal step; falls back to damped
    first-order projection if Newton fails.  Raises ProjectionError when
    neither converges.
    """
    xt = np.asarray(point, dtype=float)
    g0 = np.asarray(geom.gradient(xt), dtype=float)
    ng2 = float(g0 @ g0)
    if ng2 < 1e-28:
        raise ProjectionError(xt, "level-set gradient vanishes")

    phi0 = float(geom.evaluate(xt))
    x = xt - phi0 * g0 / ng2
    mu = phi0 / ng2

    for _ in range(max_newton):
        g = np.asarray(geom.gradient(x), dtype=float)
        phi = float(geom.evaluate(x))
        r1 = x - xt + mu * g
        if max(abs(r1[0]), abs(r1[1]), abs(phi)) <= tol:
            return ShiftDatum(surrogate_point=xt.copy(), true_point=x, shift=x - xt)
        H = geom.hessian(x) if geom.hessian is not None else np.zeros((2, 2))
        J = np.zeros((3, 3))
        J[:2, :2] = np.eye(2) + mu * np.asarray(H, dtype=float)
        J[:2, 2] = g
        J[2, :2] = g
        try:
            delta = np.linalg.solve(J, -np.array([r1[0], r1[1], phi]))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(delta)):
            break
        x = x + delta[:2]
        mu = mu + delta[2]

    x = xt.copy()
    for _ in range(max_fallback):
        phi = float(geom.evaluate(x))
        if abs(phi) <= tol:
            return ShiftDatum(surrogate_point=xt.copy(), true_point=x, shift=x - xt)
        g = np.asarray(geom.gradient(x), dtype=float)
        ng2 = float(g @ g)
        if ng2 < 1e-28:
            raise ProjectionError(xt, "level-set gradient vanishes during fallback")
        x = x - phi * g / ng2
    raise ProjectionError(xt)


def normalized_signed_shift(datum: ShiftDatum, h: float) -> float:
    """sign(d . n~) * ||d|| / h; positive for outward shifts."""
    if h <= 0.0:
        raise ValueError(f"cell size must be positive, got {h}")
    if datum.surrogate_normal is None:
        raise ValueError("shift datum has no surrogate normal")
    d = datum.shift
    return float(np.sign(d @ datum.surrogate_normal) * np.linalg.norm(d) / h)
