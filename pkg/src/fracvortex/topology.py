"""Discrete Jacobians, currents, winding degrees, and the flat-distance
comparison bound for Jacobian differences.

The per-cell Jacobian is the exact cell average of det(grad) for the
bilinear interpolant; summed over any cell region it telescopes to a
boundary circulation, which is why the area integral reproduces pi times
the winding number so sharply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import (
    BoolArray,
    FloatArray,
    Grid2,
    VectorField2,
    bilinear_sample,
    dump_raster,
    fd_gradient,
    l2_norm,
)

__all__ = [
    "JacobianField",
    "DegreeError",
    "jacobian",
    "jacobian_divergence_form",
    "current",
    "curl_cellwise",
    "degree",
    "degree_details",
    "area_degree",
    "points_in_loop",
    "jacobian_flat_distance_bound",
]


@dataclass
class JacobianField:
    """Per-cell scalar det(grad u); cell (i, j) spans nodes (i..i+1, j..j+1)."""

    grid: Grid2
    values: FloatArray  # (nx-1, ny-1)

    @property
    def h(self) -> float:
        return self.grid.h

    def cell_centers(self) -> tuple[FloatArray, FloatArray]:
        xs = self.grid.origin[0] + self.h * (np.arange(self.grid.nx - 1) + 0.5)
        ys = self.grid.origin[1] + self.h * (np.arange(self.grid.ny - 1) + 0.5)
        return np.meshgrid(xs, ys, indexing="ij")

    def mass(self, mask: BoolArray | None = None) -> float:
        v = self.values if mask is None else np.where(mask, self.values, 0.0)
        return float(self.h * self.h * np.sum(v))

    def dump(self, path) -> None:
        dump_raster(path, self.values, self.h, self.grid.origin)


def _cell_gradients(values: FloatArray, h: float) -> tuple[FloatArray, FloatArray]:
    """Cell averages of d/dx1 and d/dx2 of the bilinear interpolant."""
    a = values[:-1, :-1]
    b = values[1:, :-1]
    c = values[:-1, 1:]
    d = values[1:, 1:]
    gx = (b - a + d - c) / (2.0 * h)
    gy = (c - a + d - b) / (2.0 * h)
    return gx, gy


def jacobian(u: VectorField2, check: bool = True) -> JacobianField:
    """Exact cell average of det(grad) of the bilinear interpolant.

    The cross-derivative form and the divergence form coincide identically
    for bilinear pieces; both are computed and compared (roundoff only)
    unless check=False.
    """
    g1x, g1y = _cell_gradients(u.values[..., 0], u.h)
    g2x, g2y = _cell_gradients(u.values[..., 1], u.h)
    J = g1x * g2y - g1y * g2x
    if check:
        Jdiv = jacobian_divergence_form(u)
        scale = float(np.abs(J).max()) + 1.0
        if not np.allclose(J, Jdiv, atol=1e-10 * scale, rtol=1e-10):
            raise AssertionError("cross-derivative and divergence forms disagree")
    return JacobianField(grid=u.grid, values=J)


def jacobian_divergence_form(u: VectorField2) -> FloatArray:
    """Per-cell divergence form div(u1 u2_{x2}, -u1 u2_{x1}), evaluated as
    the exact boundary flux of the bilinear interpolant."""
    h = u.h
    u1, u2 = u.values[..., 0], u.values[..., 1]
    # u2_{x2} is constant along vertical edges; u1 linear: edge flux is the
    # midpoint product. Same for u2_{x1} along horizontal edges.
    left = 0.5 * (u1[:-1, :-1] + u1[:-1, 1:]) * (u2[:-1, 1:] - u2[:-1, :-1]) / h
    right = 0.5 * (u1[1:, :-1] + u1[1:, 1:]) * (u2[1:, 1:] - u2[1:, :-1]) / h
    bottom = 0.5 * (u1[:-1, :-1] + u1[1:, :-1]) * (u2[1:, :-1] - u2[:-1, :-1]) / h
    top = 0.5 * (u1[:-1, 1:] + u1[1:, 1:]) * (u2[1:, 1:] - u2[:-1, 1:]) / h
    return (right - left) / h - (top - bottom) / h


def current(u: VectorField2) -> FloatArray:
    """Nodewise current j(u) = u1 grad u2 - u2 grad u1, shape (nx, ny, 2)."""
    G = fd_gradient(u.values, u.h)
    u1 = u.values[..., 0][..., None]
    u2 = u.values[..., 1][..., None]
    return u1 * G[..., 1, :] - u2 * G[..., 0, :]


def curl_cellwise(f: FloatArray, h: float) -> FloatArray:
    """Cell-centered curl d1 f2 - d2 f1 of a node vector field."""
    g2x, _ = _cell_gradients(f[..., 1], h)
    _, g1y = _cell_gradients(f[..., 0], h)
    return g2x - g1y


class DegreeError(ValueError):
    """Winding computation rejected: vanishing modulus or unresolved loop."""


def degree_details(
    u: VectorField2, loop: FloatArray, c_min: float = 0.5
) -> tuple[int, float, float]:
    """(degree, rounding residual, min modulus on the loop).

    The winding integrand is integrated as exact angle increments of the
    normalized samples between consecutive loop points (the trapezoid-exact
    integral for the geodesic interpolant); counterclockwise loops around a
    single positive vortex give +1.
    """
    vals = bilinear_sample(u.values, u.grid, np.asarray(loop, dtype=np.float64))
    mod = np.hypot(vals[:, 0], vals[:, 1])
    min_mod = float(mod.min())
    if min_mod < c_min:
        raise DegreeError(
            f"modulus {min_mod:.3g} below c_min={c_min} on the loop; degree undefined"
        )
    z = (vals[:, 0] + 1j * vals[:, 1]) / mod
    znext = np.roll(z, -1)
    incr = np.angle(znext * np.conj(z))
    w = float(np.sum(incr)) / (2.0 * math.pi)
    deg = int(round(w))
    residual = abs(w - deg)
    return deg, residual, min_mod


def degree(
    u: VectorField2,
    loop: FloatArray,
    c_min: float = 0.5,
    max_residual: float = 0.1,
    cross_check: bool = False,
) -> int:
    """Winding number of u along a closed polyline, rounded to the nearest
    integer; the pre-rounding residual must stay below max_residual.

    With cross_check=True the area integral of the cell Jacobian over the
    loop interior is compared against pi * degree (discrepancy above 0.2
    is an error); this requires |u| close to 1 on the loop to mean what
    the circulation identity says, so it is opt-in.
    """
    deg, residual, _ = degree_details(u, loop, c_min)
    if residual >= max_residual:
        raise DegreeError(
            f"winding residual {residual:.3g} >= {max_residual}: loop under-resolved"
        )
    if cross_check:
        est = area_degree(u, loop)
        if abs(est - deg) > 0.2:
            raise DegreeError(
                f"area-integral cross-check {est:.3f} disagrees with winding {deg}"
            )
    return deg


def area_degree(u: VectorField2, loop: FloatArray) -> float:
    """(1/pi) * integral of the cell Jacobian over cells inside the loop."""
    J = jacobian(u, check=False)
    cx, cy = J.cell_centers()
    pts = np.stack([cx.ravel(), cy.ravel()], axis=-1)
    inside = points_in_loop(pts, loop).reshape(J.values.shape)
    return J.mass(inside) / math.pi


def points_in_loop(pts: FloatArray, loop: FloatArray) -> BoolArray:
    """Even-odd crossing test of points against a closed polyline
    (vectorized; the loop is closed implicitly)."""
    x, y = pts[:, 0], pts[:, 1]
    px, py = loop[:, 0], loop[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    inside = np.zeros(len(pts), dtype=bool)
    for k in range(len(loop)):
        cond = (py[k] > y) != (qy[k] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = px[k] + (y - py[k]) * (qx[k] - px[k]) / (qy[k] - py[k])
        inside ^= cond & (x < xint)
    return inside


def jacobian_flat_distance_bound(
    v: VectorField2, w: VectorField2, mask: BoolArray | None = None
) -> float:
    """||v - w||_2 (||grad v||_2 + ||grad w||_2): the product that controls
    the flat distance of the Jacobians up to a universal constant."""
    if v.grid != w.grid:
        raise ValueError("fields live on different grids")
    diff = VectorField2(
        grid=v.grid,
        values=v.values - w.values,
        support_radius=max(v.support_radius, w.support_radius),
    )
    l2_diff = math.sqrt(l2_norm(diff, mask))

    def grad_norm(f: VectorField2) -> float:
        G = fd_gradient(f.values, f.h)
        sq = np.sum(G * G, axis=(-2, -1))
        if mask is not None:
            sq = np.where(mask, sq, 0.0)
        return math.sqrt(float(f.h * f.h * np.sum(sq)))

    return l2_diff * (grad_norm(v) + grad_norm(w))
