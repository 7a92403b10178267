"""Explicit fields: Dirac sums of vortex charges, complex-power building
blocks, the glued admissible map matching the boundary datum, the
core-truncated companion field, and the boundary datum itself.

Gluing uses a global product of vortex blocks times a unit-modulus
correction whose two components are discretely harmonic in the vortex
region with Dirichlet data taken from the boundary datum; the phase data is
single-valued exactly when the total charge matches the boundary degree.
Vortex centers are snapped to cell centers so no node ever coincides with
a singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .field import (
    DomainSpec,
    FloatArray,
    Grid2,
    VectorField2,
    circle_loop,
)
from .topology import degree

__all__ = [
    "DiracSum",
    "RecoveryConfig",
    "GluingError",
    "snap_to_cell_center",
    "build_block",
    "build_boundary_datum",
    "build_admissible",
    "build_recovery",
    "split_high_degrees",
]


@dataclass(frozen=True)
class DiracSum:
    """Finite integer combination of point charges (x, y, d), d != 0."""

    atoms: tuple[tuple[float, float, int], ...]

    def __post_init__(self) -> None:
        for (x, y, d) in self.atoms:
            if d == 0 or d != int(d):
                raise ValueError(f"atom degrees must be nonzero integers, got {d!r}")

    @classmethod
    def of(cls, *atoms: tuple[float, float, int]) -> "DiracSum":
        return cls(atoms=tuple((float(x), float(y), int(d)) for (x, y, d) in atoms))

    def total_degree(self) -> int:
        return sum(d for (_, _, d) in self.atoms)

    def total_variation(self) -> int:
        return sum(abs(d) for (_, _, d) in self.atoms)

    def points(self) -> FloatArray:
        return np.array([(x, y) for (x, y, _) in self.atoms], dtype=np.float64)

    def in_x_omega(self, dom: DomainSpec) -> bool:
        """All atoms strictly inside the open vortex region."""
        return all(self._inside(dom, x, y, closed=False) for (x, y, _) in self.atoms)

    def in_x_closure(self, dom: DomainSpec) -> bool:
        return all(self._inside(dom, x, y, closed=True) for (x, y, _) in self.atoms)

    @staticmethod
    def _inside(dom: DomainSpec, x: float, y: float, closed: bool) -> bool:
        if dom.omega_center is not None and dom.omega_radius is not None:
            r = math.hypot(x - dom.omega_center[0], y - dom.omega_center[1])
            return r <= dom.omega_radius if closed else r < dom.omega_radius
        g = dom.grid
        i = int(round((x - g.origin[0]) / g.h))
        j = int(round((y - g.origin[1]) / g.h))
        i = min(max(i, 0), g.nx - 1)
        j = min(max(j, 0), g.ny - 1)
        return bool(dom.omega_mask[i, j])

    def snapped(self, grid: Grid2) -> "DiracSum":
        return DiracSum(
            atoms=tuple(
                (*snap_to_cell_center(grid, (x, y)), d) for (x, y, d) in self.atoms
            )
        )


def snap_to_cell_center(grid: Grid2, p: tuple[float, float]) -> tuple[float, float]:
    """Nearest point of the half-cell-offset lattice (no node touches it)."""
    i = math.floor((p[0] - grid.origin[0]) / grid.h)
    j = math.floor((p[1] - grid.origin[1]) / grid.h)
    return (
        grid.origin[0] + (i + 0.5) * grid.h,
        grid.origin[1] + (j + 0.5) * grid.h,
    )


@dataclass(frozen=True)
class RecoveryConfig:
    """Charges, gluing radius r, fractional order, and the core scale
    (default 1-s) of the truncated companion field."""

    mu: DiracSum
    r: float
    s: float
    core_radius: float | None = None

    @property
    def core(self) -> float:
        return (1.0 - self.s) if self.core_radius is None else self.core_radius

    def validate(self, dom: DomainSpec) -> None:
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s!r}")
        if dom.omega_center is None or dom.omega_radius is None:
            raise ValueError("recovery construction needs the disk metadata")
        cx, cy = dom.omega_center
        pts = self.mu.points()
        dist_boundary = dom.omega_radius - np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
        if not np.all(dist_boundary > self.r):
            raise ValueError(f"gluing radius r={self.r} reaches the boundary")
        n = len(pts)
        for a in range(n):
            for b in range(a + 1, n):
                sep = float(np.hypot(*(pts[a] - pts[b])))
                if self.r > 0.5 * sep:
                    raise ValueError(
                        f"gluing radius r={self.r} exceeds half the atom separation {sep}"
                    )
        if not self.core < self.r:
            raise ValueError(f"core radius {self.core} must stay below r={self.r}")


class GluingError(RuntimeError):
    """Harmonic correction degenerated (modulus too close to zero)."""


def _block_complex(grid: Grid2, center: tuple[float, float], d: int) -> np.ndarray:
    X, Y = grid.meshgrid()
    z = (X - center[0]) + 1j * (Y - center[1])
    r = np.abs(z)
    # limit along the +x ray, documented: a node exactly on the center
    # (impossible after snapping) would get (1, 0)^d
    zhat = np.where(r == 0.0, 1.0 + 0.0j, z / np.where(r == 0.0, 1.0, r))
    return zhat ** d


def build_block(
    center: tuple[float, float], d: int, grid: Grid2, snap: bool = True
) -> VectorField2:
    """Unit-modulus vortex block ((x - center)/|x - center|)^d, using the
    complex identification; negative d conjugates.

    Blocks are globally unit modulus (not compactly supported on their
    own); their support ball is taken to cover the whole grid. The center
    is snapped to the cell-center lattice unless snap=False.
    """
    if d == 0:
        raise ValueError("block degree must be nonzero")
    c = snap_to_cell_center(grid, center) if snap else center
    z = _block_complex(grid, c, d)
    radius = math.hypot(grid.nx * grid.h, grid.ny * grid.h)
    return VectorField2.from_complex(grid, z, radius)


def build_boundary_datum(
    dom: DomainSpec,
    d0: int | None = None,
    core_rho: float = 0.5,
    ramp: tuple[float, float] | None = None,
) -> VectorField2:
    """Boundary datum (x/|x|)^{d0} carrying the prescribed degree: unit
    modulus on the collar U, H^1-regularized at the origin (modulus r/rho
    inside rho), smoothly ramped to zero before the support radius.

    The winding of the result along the domain boundary is checked against
    d0 (integer equality).
    """
    if dom.omega_center is None or dom.omega_radius is None:
        raise ValueError("boundary datum needs the disk metadata")
    if d0 is None:
        d0 = dom.d0
    if ramp is None:
        outer = dom.band_outer if dom.band_outer is not None else dom.omega_radius
        ramp = (outer + 0.05, (dom.R - 0.1) / 2.0)
    r1, r2 = ramp
    if not r1 < r2:
        raise ValueError(f"ramp interval {ramp} is empty")
    grid = dom.grid
    X, Y = grid.meshgrid()
    cx, cy = dom.omega_center
    r = np.hypot(X - cx, Y - cy)

    modulus = np.clip(r / core_rho, 0.0, 1.0)
    t = np.clip((r - r1) / (r2 - r1), 0.0, 1.0)
    modulus = modulus * 0.5 * (1.0 + np.cos(math.pi * t))

    if d0 == 0:
        z = modulus.astype(np.complex128)
    else:
        zz = (X - cx) + 1j * (Y - cy)
        rr = np.where(r == 0.0, 1.0, r)
        z = modulus * (zz / rr) ** d0
        z = np.where(r == 0.0, 0.0, z)
    gcx, gcy = grid.center
    support = r2 + math.hypot(cx - gcx, cy - gcy)
    u0 = VectorField2.from_complex(grid, z, support)
    got = degree(u0, dom.boundary_polyline)
    if got != d0:
        raise AssertionError(f"boundary datum winds {got}, requested {d0}")
    return u0


def _harmonic_correction(
    dom: DomainSpec, target: np.ndarray, cg_tol: float = 1e-10
) -> np.ndarray:
    """Componentwise discrete-harmonic extension into Omega of the complex
    `target` values on the ring just outside, renormalized to unit modulus.

    Solved by conjugate gradients on the 5-point Laplacian (deterministic:
    fixed ordering, tolerance 1e-10). Raises GluingError if the extension's
    modulus drops below 0.2 anywhere (the phase data would be wrapping)."""
    om = dom.omega_mask
    nx, ny = om.shape
    idx = -np.ones(om.shape, dtype=np.int64)
    nodes = np.argwhere(om)
    for k, (i, j) in enumerate(nodes):
        idx[i, j] = k
    n = len(nodes)
    rows, cols, vals = [], [], []
    rhs = np.zeros((n, 2))
    tre, tim = target.real, target.imag
    for k, (i, j) in enumerate(nodes):
        rows.append(k)
        cols.append(k)
        vals.append(4.0)
        for (ii, jj) in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if om[ii, jj]:
                rows.append(k)
                cols.append(int(idx[ii, jj]))
                vals.append(-1.0)
            else:
                rhs[k, 0] += tre[ii, jj]
                rhs[k, 1] += tim[ii, jj]
    A = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    sol = np.zeros((n, 2))
    for c in range(2):
        x, info = scipy.sparse.linalg.cg(
            A, rhs[:, c], rtol=cg_tol, atol=0.0, maxiter=40 * max(nx, ny)
        )
        if info != 0:
            raise GluingError(f"harmonic solve did not converge (info={info})")
        sol[:, c] = x
    g = np.ones(om.shape, dtype=np.complex128)
    g[om] = sol[:, 0] + 1j * sol[:, 1]
    gmod = np.abs(g[om])
    if gmod.size and gmod.min() < 0.2:
        raise GluingError(
            f"harmonic correction modulus dropped to {gmod.min():.3f}; "
            "phase data too violent for the product gluing"
        )
    return np.where(om, g / np.where(np.abs(g) == 0.0, 1.0, np.abs(g)), 1.0 + 0.0j)


def build_admissible(
    cfg: RecoveryConfig,
    dom: DomainSpec,
    u0: VectorField2 | None = None,
    match_boundary: bool = True,
) -> VectorField2:
    """The glued S^1-valued map: vortex blocks at the snapped atoms times a
    harmonic unit-modulus correction inside Omega, the boundary datum
    outside (exactly).

    Rejected when the total charge disagrees with the boundary degree while
    boundary matching is on, mirroring the compatibility constraint of the
    limit objects.
    """
    cfg.validate(dom)
    grid = dom.grid
    if u0 is None:
        u0 = build_boundary_datum(dom)
    if match_boundary and cfg.mu.total_degree() != dom.d0:
        raise ValueError(
            f"total charge {cfg.mu.total_degree()} != boundary degree {dom.d0}"
        )
    mu = cfg.mu.snapped(grid)
    prod = np.ones((grid.nx, grid.ny), dtype=np.complex128)
    for (x, y, d) in mu.atoms:
        prod *= _block_complex(grid, (x, y), d)
    u0z = u0.as_complex()
    # ring data: u0 * conj(prod); unit modulus there because the ring lies
    # in the collar
    target = u0z * np.conj(prod)
    ring = _outside_ring(dom.omega_mask)
    ring_mod = np.abs(target[ring])
    if ring_mod.size and (np.abs(ring_mod - 1.0) > 1e-8).any():
        raise GluingError("ring data is not unit modulus; collar misconfigured")
    g = _harmonic_correction(dom, target)
    z = np.where(dom.omega_mask, prod * g, u0z)
    return VectorField2.from_complex(grid, z, u0.support_radius)


def _outside_ring(mask) -> np.ndarray:
    grow = (
        mask
        | np.roll(mask, 1, 0)
        | np.roll(mask, -1, 0)
        | np.roll(mask, 1, 1)
        | np.roll(mask, -1, 1)
    )
    return grow & ~mask


def build_recovery(
    cfg: RecoveryConfig,
    dom: DomainSpec,
    u0: VectorField2 | None = None,
) -> tuple[VectorField2, VectorField2]:
    """(u, u_s): the S^1-valued energy competitor and its core-truncated
    companion min(|x - x_i| / core, 1) u, which is H^1 across the cores and
    carries the concentrating Jacobian.

    Off all cores the two fields agree exactly; u_s vanishes at the atoms
    themselves (between nodes once the core drops below the spacing)."""
    u = build_admissible(cfg, dom, u0=u0)
    grid = dom.grid
    X, Y = grid.meshgrid()
    factor = np.ones((grid.nx, grid.ny))
    for (x, y, _) in cfg.mu.snapped(grid).atoms:
        dist = np.hypot(X - x, Y - y)
        factor *= np.clip(dist / cfg.core, 0.0, 1.0)
    vals = u.values * factor[..., None]
    u_s = VectorField2(grid=grid, values=vals, support_radius=u.support_radius)
    return u, u_s


def split_high_degrees(mu: DiracSum, grid: Grid2, delta: float | None = None) -> DiracSum:
    """Replace each |d| >= 2 atom by |d| unit charges of the same sign on a
    small circle around it (the approximation step toward general charge
    sums), spacing delta (default 4h)."""
    if delta is None:
        delta = 4.0 * grid.h
    out: list[tuple[float, float, int]] = []
    for (x, y, d) in mu.atoms:
        k = abs(d)
        if k == 1:
            out.append((x, y, d))
            continue
        sgn = 1 if d > 0 else -1
        rad = delta / (2.0 * math.sin(math.pi / k)) if k > 1 else 0.0
        for a in range(k):
            th = 2.0 * math.pi * a / k
            out.append((x + rad * math.cos(th), y + rad * math.sin(th), sgn))
    return DiracSum(atoms=tuple(out))
