"""Uniform 2D grids, R^2-valued node fields, and the disk-with-collar domain.

Fields are node-centered samples on a uniform Cartesian lattice; every
quadrature downstream is midpoint quadrature over the cells implied by the
nodes. All reductions use numpy's pairwise summation in a fixed traversal
order, so results are bit-reproducible. Values are treated as immutable
after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]

__all__ = [
    "Grid2",
    "VectorField2",
    "DomainSpec",
    "S1Report",
    "sample",
    "check_s1_constraint",
    "l2_norm",
    "fd_gradient",
    "dirichlet_energy",
    "bilinear_sample",
    "circle_loop",
    "make_disk_domain",
    "dump_raster",
    "load_raster",
    "dump_field",
    "mask_to_csv",
]


@dataclass(frozen=True)
class Grid2:
    """Uniform node lattice: node(i, j) = origin + (i*h, j*h).

    Arrays indexed [i, j] with i along x and j along y ('ij' convention).
    """

    origin: tuple[float, float]
    h: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError(f"grid spacing must be positive, got {self.h!r}")
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"need at least 2x2 nodes, got {self.nx}x{self.ny}")

    def xs(self) -> FloatArray:
        return self.origin[0] + self.h * np.arange(self.nx)

    def ys(self) -> FloatArray:
        return self.origin[1] + self.h * np.arange(self.ny)

    def meshgrid(self) -> tuple[FloatArray, FloatArray]:
        return np.meshgrid(self.xs(), self.ys(), indexing="ij")

    @property
    def center(self) -> tuple[float, float]:
        return (
            self.origin[0] + 0.5 * self.h * (self.nx - 1),
            self.origin[1] + 0.5 * self.h * (self.ny - 1),
        )

    def cover_rect(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the cell-covered region: each node
        owns the h x h cell centered on it."""
        ox, oy = self.origin
        return (
            ox - 0.5 * self.h,
            ox + self.h * (self.nx - 1) + 0.5 * self.h,
            oy - 0.5 * self.h,
            oy + self.h * (self.ny - 1) + 0.5 * self.h,
        )

    def radius_from_center(self) -> FloatArray:
        X, Y = self.meshgrid()
        cx, cy = self.center
        return np.hypot(X - cx, Y - cy)


def square_grid(n: int, box: float = 4.0) -> Grid2:
    """Default computational square of side `box` centered at the origin,
    with h = box/n so a node sits exactly at (0, 0) when n is even."""
    h = box / n
    return Grid2(origin=(-box / 2.0, -box / 2.0), h=h, nx=n, ny=n)


@dataclass
class VectorField2:
    """R^2-valued samples on a grid, identically zero outside the ball of
    radius support_radius about the grid center."""

    grid: Grid2
    values: FloatArray  # (nx, ny, 2)
    support_radius: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.nx, self.grid.ny, 2):
            raise ValueError(
                f"values shape {v.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny}, 2)"
            )
        if not np.isfinite(v).all():
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)
        outside = self.grid.radius_from_center() > self.support_radius
        if np.any(v[outside] != 0.0):
            raise ValueError("field does not vanish outside its support ball")

    @property
    def h(self) -> float:
        return self.grid.h

    def modulus(self) -> FloatArray:
        return np.sqrt(self.values[..., 0] ** 2 + self.values[..., 1] ** 2)

    def as_complex(self) -> NDArray[np.complex128]:
        return self.values[..., 0] + 1j * self.values[..., 1]

    @classmethod
    def from_complex(
        cls, grid: Grid2, z: NDArray[np.complex128], support_radius: float
    ) -> "VectorField2":
        vals = np.stack([z.real, z.imag], axis=-1)
        return cls(grid=grid, values=vals, support_radius=support_radius)


def sample(f, grid: Grid2, support_radius: float) -> VectorField2:
    """Evaluate a closed-form map f(X, Y) -> R^2 at every node, forcing the
    result to exactly zero outside the support ball.

    f receives the meshgrid coordinate arrays and may return a pair (U, V),
    an (..., 2) array, or a complex array. Non-finite values at any node are
    rejected; sampling an already-sampled field reproduces it bitwise.
    """
    X, Y = grid.meshgrid()
    out = f(X, Y)
    if isinstance(out, tuple):
        vals = np.stack([np.asarray(out[0], dtype=np.float64),
                         np.asarray(out[1], dtype=np.float64)], axis=-1)
    else:
        arr = np.asarray(out)
        if np.iscomplexobj(arr):
            vals = np.stack([arr.real, arr.imag], axis=-1).astype(np.float64)
        else:
            vals = np.asarray(arr, dtype=np.float64)
    vals = np.broadcast_to(vals, (grid.nx, grid.ny, 2)).copy()
    if not np.isfinite(vals).all():
        raise ValueError("map evaluates to non-finite values on the grid")
    outside = grid.radius_from_center() > support_radius
    vals[outside] = 0.0
    return VectorField2(grid=grid, values=vals, support_radius=support_radius)


@dataclass(frozen=True)
class S1Report:
    """Worst violation of the unit-modulus constraint over a node set."""

    max_modulus_error: float
    offending_nodes: tuple[tuple[int, int], ...]
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_modulus_error <= self.tol


def check_s1_constraint(u: VectorField2, dom: "DomainSpec", tol: float = 1e-9) -> S1Report:
    """Report max over Omega nodes of | |u| - 1 | and the nodes above tol."""
    if u.grid != dom.grid:
        raise ValueError("field and domain live on different grids")
    err = np.abs(u.modulus() - 1.0)
    err = np.where(dom.omega_mask, err, 0.0)
    worst = float(err.max()) if err.size else 0.0
    bad = np.argwhere(err > tol)
    return S1Report(
        max_modulus_error=worst,
        offending_nodes=tuple(map(tuple, bad.tolist())),
        tol=tol,
    )


def l2_norm(u: VectorField2, mask: BoolArray | None = None) -> float:
    """Midpoint quadrature of the squared L2 norm: h^2 * sum |u|^2.

    Summation is numpy pairwise over the fixed [i, j, component] order, so
    the result does not depend on thread counts.
    """
    sq = u.values[..., 0] ** 2 + u.values[..., 1] ** 2
    if mask is not None:
        sq = np.where(mask, sq, 0.0)
    return float(u.h * u.h * np.sum(sq))


def fd_gradient(values: FloatArray, h: float) -> FloatArray:
    """Finite-difference Jacobian G[..., j, k] = d u_j / d x_k.

    Centered second-order stencils at interior nodes, one-sided at the grid
    boundary (numpy.gradient semantics).
    """
    gx = np.gradient(values, h, axis=0)
    gy = np.gradient(values, h, axis=1)
    return np.stack([gx, gy], axis=-1)


def dirichlet_energy(u: VectorField2, mask: BoolArray | None = None) -> float:
    """h^2 * sum of the squared Frobenius norm of the discrete Jacobian."""
    G = fd_gradient(u.values, u.h)
    sq = np.sum(G * G, axis=(-2, -1))
    if mask is not None:
        sq = np.where(mask, sq, 0.0)
    return float(u.h * u.h * np.sum(sq))


def bilinear_sample(values: FloatArray, grid: Grid2, pts: FloatArray) -> FloatArray:
    """Bilinear interpolation of node values (nx, ny, ...) at points (k, 2).

    Points outside the grid are clamped to the boundary cell.
    """
    fx = (pts[:, 0] - grid.origin[0]) / grid.h
    fy = (pts[:, 1] - grid.origin[1]) / grid.h
    i0 = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, grid.ny - 2)
    tx = np.clip(fx - i0, 0.0, 1.0)
    ty = np.clip(fy - j0, 0.0, 1.0)
    extra = (1,) * (values.ndim - 2)
    tx = tx.reshape(tx.shape + extra)
    ty = ty.reshape(ty.shape + extra)
    v00 = values[i0, j0]
    v10 = values[i0 + 1, j0]
    v01 = values[i0, j0 + 1]
    v11 = values[i0 + 1, j0 + 1]
    return (
        v00 * (1 - tx) * (1 - ty)
        + v10 * tx * (1 - ty)
        + v01 * (1 - tx) * ty
        + v11 * tx * ty
    )


def circle_loop(center: tuple[float, float], radius: float, max_spacing: float) -> FloatArray:
    """Counterclockwise circular polyline with arc spacing <= max_spacing.

    Returned open (no repeated endpoint); consumers close it implicitly.
    """
    n = max(16, int(math.ceil(2.0 * math.pi * radius / max_spacing)))
    th = 2.0 * math.pi * np.arange(n) / n
    return np.stack(
        [center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=-1
    )


@dataclass
class DomainSpec:
    """The sets Omega (vortex region), U (collar around its boundary where
    the boundary datum is unit modulus), their union, and the kernel radius
    R together with the boundary degree d0.

    omega_center / omega_radius are populated by make_disk_domain and give
    closed-form access to dilated boundaries; mask-only domains leave them
    None and lose the dilation helpers.
    """

    grid: Grid2
    omega_mask: BoolArray
    neighborhood_mask: BoolArray
    boundary_polyline: FloatArray
    R: float
    d0: int
    omega_center: tuple[float, float] | None = None
    omega_radius: float | None = None
    band_inner: float | None = None
    band_outer: float | None = None

    def __post_init__(self) -> None:
        om = np.asarray(self.omega_mask, dtype=bool)
        nb = np.asarray(self.neighborhood_mask, dtype=bool)
        shape = (self.grid.nx, self.grid.ny)
        if om.shape != shape or nb.shape != shape:
            raise ValueError("masks must match the grid shape")
        if om[0, :].any() or om[-1, :].any() or om[:, 0].any() or om[:, -1].any():
            raise ValueError("Omega must be contained in the grid interior")
        ring = _interface_ring(om)
        if not nb[ring].all():
            raise ValueError("U must cover the discrete interface of Omega")
        object.__setattr__(self, "omega_mask", om)
        object.__setattr__(self, "neighborhood_mask", nb)

    @property
    def omega_tilde_mask(self) -> BoolArray:
        return self.omega_mask | self.neighborhood_mask

    def outer_reach(self) -> float:
        """t0 = sup{t : the t-dilation of Omega stays inside Omega union U}."""
        if self.omega_radius is None or self.band_outer is None:
            raise ValueError("outer_reach needs the disk metadata")
        return self.band_outer - self.omega_radius

    def dilated_boundary(self, t: float) -> FloatArray:
        """Polyline of the boundary of the t-dilation of the disk Omega."""
        if self.omega_center is None or self.omega_radius is None:
            raise ValueError("dilated_boundary needs the disk metadata")
        return circle_loop(self.omega_center, self.omega_radius + t, 0.75 * self.grid.h)

    def validate_field_support(self, u: VectorField2) -> None:
        """The kernel radius must strictly exceed the support diameter."""
        if not self.R > 2.0 * u.support_radius:
            raise ValueError(
                f"kernel radius R={self.R} must exceed the support diameter "
                f"{2.0 * u.support_radius}"
            )


def _interface_ring(mask: BoolArray) -> BoolArray:
    """Nodes adjacent (4-neighborhood) to the other side of the mask,
    on either side of the interface."""
    inner = mask & ~(
        np.roll(mask, 1, 0) & np.roll(mask, -1, 0) & np.roll(mask, 1, 1) & np.roll(mask, -1, 1)
    )
    grow = mask | np.roll(mask, 1, 0) | np.roll(mask, -1, 0) | np.roll(mask, 1, 1) | np.roll(
        mask, -1, 1
    )
    outer = grow & ~mask
    return inner | outer


def make_disk_domain(
    grid: Grid2,
    omega_radius: float = 1.0,
    band_inner: float = 0.9,
    band_outer: float = 1.25,
    R: float = 3.4,
    d0: int = 1,
    center: tuple[float, float] = (0.0, 0.0),
) -> DomainSpec:
    """Default geometry: Omega an open disk, U the annulus band_inner <
    |x| < band_outer straddling its boundary.

    The collar reaches band_outer - omega_radius beyond the boundary, which
    bounds the dilations used by the degree-conservation probe.
    """
    if not 0.0 < band_inner < omega_radius < band_outer:
        raise ValueError("need band_inner < omega_radius < band_outer")
    X, Y = grid.meshgrid()
    r = np.hypot(X - center[0], Y - center[1])
    omega = r < omega_radius
    band = (r > band_inner) & (r < band_outer)
    loop = circle_loop(center, omega_radius, 0.75 * grid.h)
    return DomainSpec(
        grid=grid,
        omega_mask=omega,
        neighborhood_mask=band,
        boundary_polyline=loop,
        R=R,
        d0=d0,
        omega_center=center,
        omega_radius=omega_radius,
        band_inner=band_inner,
        band_outer=band_outer,
    )


# ---------------------------------------------------------------------------
# Raster / CSV exchange formats
# ---------------------------------------------------------------------------

_MAGIC = "VF2"


def dump_raster(path, array: FloatArray, h: float, origin: tuple[float, float]) -> None:
    """Write a (nx, ny) or (nx, ny, 2) float64 array with a 5-line ASCII
    header: magic, nx, ny, h, origin. Data is raw row-major float64; the
    component count is recovered from the payload size."""
    arr = np.ascontiguousarray(array, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError("raster arrays must be (nx, ny) or (nx, ny, ncomp)")
    nx, ny = arr.shape[0], arr.shape[1]
    header = f"{_MAGIC}\n{nx}\n{ny}\n{h!r}\n{origin[0]!r} {origin[1]!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(arr.tobytes())


def load_raster(path) -> tuple[FloatArray, float, tuple[float, float]]:
    with open(path, "rb") as fh:
        lines = [fh.readline().decode("ascii").strip() for _ in range(5)]
        payload = fh.read()
    if lines[0] != _MAGIC:
        raise ValueError(f"bad raster magic {lines[0]!r}")
    nx, ny = int(lines[1]), int(lines[2])
    h = float(lines[3])
    ox, oy = (float(t) for t in lines[4].split())
    count = len(payload) // 8
    if count % (nx * ny) != 0:
        raise ValueError("raster payload size does not match header")
    ncomp = count // (nx * ny)
    arr = np.frombuffer(payload, dtype=np.float64, count=count)
    shape = (nx, ny) if ncomp == 1 else (nx, ny, ncomp)
    return arr.reshape(shape).copy(), h, (ox, oy)


def dump_field(u: VectorField2, path) -> None:
    dump_raster(path, u.values, u.h, u.grid.origin)


def mask_to_csv(path, mask: BoolArray, grid: Grid2) -> None:
    """x,y,inside rows for plotting tools."""
    X, Y = grid.meshgrid()
    with open(path, "w") as fh:
        fh.write("x,y,inside\n")
        for i in range(grid.nx):
            for j in range(grid.ny):
                fh.write(f"{X[i, j]!r},{Y[i, j]!r},{int(mask[i, j])}\n")
