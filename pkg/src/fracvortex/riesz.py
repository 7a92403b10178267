"""Truncated Riesz potentials, nonlocal gradients, and their spectral paths.

The kernel |z|^{-(1+s)} is integrated cell by cell: the singular cell gets
an exact radial integral in polar coordinates (only a smooth angular factor
is left to fixed quadrature), cells near the origin get subdivided Gauss
panels, far cells a single 3x3 Gauss panel. Convolution is zero-padded FFT;
a literal offset-loop evaluation serves as the small-grid oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .constants import FracParams
from .field import FloatArray, Grid2, VectorField2, fd_gradient

__all__ = [
    "RieszKernel",
    "GridPaddingError",
    "power_cell_integrals",
    "vector_cell_integrals",
    "square_moment_integral",
    "build_kernel",
    "potential",
    "potential_direct",
    "FracGradField",
    "frac_gradient",
    "frac_gradient_direct",
    "jacobian_of_potential",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)
_ANG_NODES, _ANG_WEIGHTS = np.polynomial.legendre.leggauss(32)


class GridPaddingError(ValueError):
    """FFT work shape too small for wraparound-free convolution."""

    def __init__(self, required: tuple[int, int], given: tuple[int, int]):
        self.required = required
        self.given = given
        super().__init__(
            f"fft shape {given} would wrap around; need at least {required}"
        )


def _angular_integral(power: float) -> float:
    """Integral of cos(theta)^power over [0, pi/4] (smooth integrand)."""
    th = 0.125 * math.pi * (_ANG_NODES + 1.0)
    w = 0.125 * math.pi * _ANG_WEIGHTS
    return float(np.sum(w * np.cos(th) ** power))


def square_moment_integral(a: float, exponent: float) -> float:
    """Integral of |w|^{-exponent} over the square [-a, a]^2 for exponent
    < 2: the radial part is analytic, 8 a^{2-p}/(2-p) times a smooth
    angular factor int_0^{pi/4} cos(theta)^{p-2} dtheta."""
    if exponent >= 2.0:
        raise ValueError("square integral of |w|^-p diverges for p >= 2")
    p = exponent
    return 8.0 * a ** (2.0 - p) / (2.0 - p) * _angular_integral(p - 2.0)


_square_integral = square_moment_integral


def _gauss_panel(x0: FloatArray, y0: FloatArray, half: float, fn) -> FloatArray:
    """3x3 Gauss-Legendre panel integral of fn over squares centered at
    (x0, y0) with half-width `half` (vectorized over panel centers)."""
    acc = np.zeros(np.broadcast(x0, y0).shape)
    for a, wa in zip(_GL_NODES, _GL_WEIGHTS):
        for b, wb in zip(_GL_NODES, _GL_WEIGHTS):
            acc += wa * wb * fn(x0 + half * a, y0 + half * b)
    return acc * half * half


@lru_cache(maxsize=64)
def power_cell_integrals(
    h: float, exponent: float, mx: int, my: int, refine_radius: int = 2, refine: int = 4
) -> FloatArray:
    """Cell integrals of |w|^{-exponent} over the offset lattice.

    Returns a (2*mx+1, 2*my+1) array; entry (i+mx, j+my) is the integral
    over the h x h cell centered at (i*h, j*h). The center cell uses the
    analytic radial formula when exponent < 2 and is 0 otherwise (callers
    treat the diagonal separately). Cells within refine_radius (inf-norm)
    are subdivided refine x refine before Gauss integration because the
    kernel is steep there.
    """
    kern = lambda x, y: (x * x + y * y) ** (-0.5 * exponent)
    zi = h * np.arange(-mx, mx + 1)
    zj = h * np.arange(-my, my + 1)
    ZX, ZY = np.meshgrid(zi, zj, indexing="ij")
    with np.errstate(divide="ignore"):  # center cell is overwritten below
        out = _gauss_panel(ZX, ZY, 0.5 * h, kern)

    sub = h / refine
    for di in range(-refine_radius, refine_radius + 1):
        for dj in range(-refine_radius, refine_radius + 1):
            if di == 0 and dj == 0:
                continue
            if abs(di) > mx or abs(dj) > my:
                continue
            cx, cy = di * h, dj * h
            offs = sub * (np.arange(refine) - (refine - 1) / 2.0)
            SX, SY = np.meshgrid(cx + offs, cy + offs, indexing="ij")
            out[di + mx, dj + my] = float(np.sum(_gauss_panel(SX, SY, 0.5 * sub, kern)))

    if exponent < 2.0:
        out[mx, my] = _square_integral(0.5 * h, exponent)
    else:
        out[mx, my] = 0.0
    out.flags.writeable = False
    return out


@lru_cache(maxsize=16)
def vector_cell_integrals(h: float, exponent: float, m: int, refine_radius: int = 2,
                          refine: int = 4) -> FloatArray:
    """Cell integrals of w_k |w|^{-exponent}, shape (2m+1, 2m+1, 2).

    The center cell vanishes by symmetry; the whole table is antisymmetrized
    so opposite offsets cancel exactly in downstream sums.
    """
    out = np.zeros((2 * m + 1, 2 * m + 1, 2))
    zi = h * np.arange(-m, m + 1)
    ZX, ZY = np.meshgrid(zi, zi, indexing="ij")
    for k, fn in enumerate(
        (
            lambda x, y: x * (x * x + y * y) ** (-0.5 * exponent),
            lambda x, y: y * (x * x + y * y) ** (-0.5 * exponent),
        )
    ):
        with np.errstate(divide="ignore", invalid="ignore"):  # center overwritten
            vals = _gauss_panel(ZX, ZY, 0.5 * h, fn)
        vals[m, m] = 0.0
        sub = h / refine
        for di in range(-refine_radius, refine_radius + 1):
            for dj in range(-refine_radius, refine_radius + 1):
                if (di == 0 and dj == 0) or abs(di) > m or abs(dj) > m:
                    continue
                offs = sub * (np.arange(refine) - (refine - 1) / 2.0)
                SX, SY = np.meshgrid(di * h + offs, dj * h + offs, indexing="ij")
                vals[di + m, dj + m] = float(np.sum(_gauss_panel(SX, SY, 0.5 * sub, fn)))
        out[..., k] = vals
    out[m, m] = 0.0
    out = 0.5 * (out - out[::-1, ::-1])
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RieszKernel:
    """Cell-integrated |z|^{-(1+s)} truncated at |z| <= R, plus prefactor.

    cell_weights carries the bare cell integrals, rescaled by a rim factor
    (close to 1) so the total equals the continuum mass 2 pi R^{1-s}/(1-s)
    exactly; normalization picks the prefactor: 'raw' is 1/gamma_s,
    'normalized' is (1-s)/(2 pi R^{1-s}) (unit total mass).
    """

    params: FracParams
    h: float
    normalization: str
    half_width: int
    cell_weights: FloatArray
    rim_rescale: float

    @property
    def prefactor(self) -> float:
        if self.normalization == "raw":
            return self.params.raw_prefactor()
        return self.params.normalized_prefactor()


@lru_cache(maxsize=32)
def _kernel_weights(h: float, s: float, R: float) -> tuple[FloatArray, int, float]:
    m = int(R / h)
    if m < 1:
        raise ValueError(f"kernel radius R={R} shorter than one cell (h={h})")
    w = np.array(power_cell_integrals(h, 1.0 + s, m, m))
    zi = h * np.arange(-m, m + 1)
    ZX, ZY = np.meshgrid(zi, zi, indexing="ij")
    w[ZX * ZX + ZY * ZY > R * R] = 0.0
    target = 2.0 * math.pi * R ** (1.0 - s) / (1.0 - s)
    rescale = target / float(np.sum(w))
    w *= rescale
    w.flags.writeable = False
    return w, m, rescale


def build_kernel(params: FracParams, h: float, normalization: str = "normalized") -> RieszKernel:
    if normalization not in ("raw", "normalized"):
        raise ValueError(f"unknown normalization {normalization!r}")
    w, m, rescale = _kernel_weights(h, params.s, params.R)
    return RieszKernel(
        params=params,
        h=h,
        normalization=normalization,
        half_width=m,
        cell_weights=w,
        rim_rescale=rescale,
    )


def _fft_shape(n: tuple[int, int], m: int, fft_shape: tuple[int, int] | None) -> tuple[int, int]:
    required = (n[0] + 2 * m, n[1] + 2 * m)
    if fft_shape is None:
        return (scipy.fft.next_fast_len(required[0]), scipy.fft.next_fast_len(required[1]))
    if fft_shape[0] < required[0] or fft_shape[1] < required[1]:
        raise GridPaddingError(required, tuple(fft_shape))
    return tuple(fft_shape)


def _convolve_same(comp: FloatArray, kern: FloatArray, shape: tuple[int, int], m: int) -> FloatArray:
    """Zero-padded linear convolution, cropped to the input lattice. The
    kernel has odd dimensions so 'same' alignment is exact."""
    F = scipy.fft.rfft2(comp, s=shape)
    K = scipy.fft.rfft2(kern, s=shape)
    full = scipy.fft.irfft2(F * K, s=shape)
    return full[m : m + comp.shape[0], m : m + comp.shape[1]]


def potential(
    u: VectorField2,
    params: FracParams,
    normalization: str = "normalized",
    fft_shape: tuple[int, int] | None = None,
) -> VectorField2:
    """Truncated Riesz potential of u by zero-padded FFT convolution.

    The identity with direct summation is exact up to FFT roundoff; the
    kernel is symmetric so convolution and correlation coincide. Values at
    points x whose R-ball is clipped by the support box are the natural
    extension of the truncated kernel (the admissible class never queries
    them with non-vanishing u).
    """
    kern = build_kernel(params, u.h, normalization)
    shape = _fft_shape((u.grid.nx, u.grid.ny), kern.half_width, fft_shape)
    out = np.empty_like(u.values)
    for c in range(2):
        out[..., c] = _convolve_same(u.values[..., c], kern.cell_weights, shape, kern.half_width)
    out *= kern.prefactor
    return _wrap_potential(u, params, out)


def potential_direct(
    u: VectorField2, params: FracParams, normalization: str = "normalized"
) -> VectorField2:
    """Literal offset-loop evaluation of the same discrete sum (oracle)."""
    kern = build_kernel(params, u.h, normalization)
    m = kern.half_width
    nx, ny = u.grid.nx, u.grid.ny
    out = np.zeros_like(u.values)
    for di in range(-m, m + 1):
        for dj in range(-m, m + 1):
            w = kern.cell_weights[di + m, dj + m]
            if w == 0.0:
                continue
            sx = slice(max(0, -di), min(nx, nx - di))
            sy = slice(max(0, -dj), min(ny, ny - dj))
            tx = slice(max(0, di), min(nx, nx + di))
            ty = slice(max(0, dj), min(ny, ny + dj))
            out[sx, sy] += w * u.values[tx, ty]
    out *= kern.prefactor
    return _wrap_potential(u, params, out)


def _wrap_potential(u: VectorField2, params: FracParams, out: FloatArray) -> VectorField2:
    """Package a potential array; the output support ball grows by R, and
    the FFT's sub-epsilon residue beyond it is clamped to exact zero."""
    radius = min(
        u.support_radius + params.R,
        math.hypot(u.grid.nx * u.h, u.grid.ny * u.h),
    )
    out[u.grid.radius_from_center() > radius] = 0.0
    return VectorField2(grid=u.grid, values=out, support_radius=radius)


@dataclass(frozen=True)
class FracGradField:
    """Per-node 2x2 nonlocal gradient, values[..., j, k] = d_k (...)_j."""

    grid: Grid2
    values: FloatArray  # (nx, ny, 2, 2)

    def frobenius_sq(self) -> FloatArray:
        return np.sum(self.values * self.values, axis=(-2, -1))

    def det(self) -> FloatArray:
        v = self.values
        return v[..., 0, 0] * v[..., 1, 1] - v[..., 0, 1] * v[..., 1, 0]


def frac_gradient(u: VectorField2, params: FracParams) -> FracGradField:
    """Nonlocal gradient as the finite-difference gradient of the raw
    potential (the fast route of the gradient identity)."""
    p = potential(u, params, normalization="raw")
    return FracGradField(grid=u.grid, values=fd_gradient(p.values, u.h))


def frac_gradient_direct(
    u: VectorField2, params: FracParams, method: str = "fft", near_block: int = 2
) -> FracGradField:
    """Nonlocal gradient by direct singular quadrature of the difference
    kernel (u(y)-u(x)) (y-x) / |y-x|^{3+s}, truncated at R.

    Offsets beyond the near block contribute u(x+z) against vector-valued
    cell integrals of w |w|^{-(3+s)} (the odd symmetry removes the u(x) term
    exactly). Inside the square block of half-width near_block cells, where
    midpoint sampling against the steep kernel loses its first moment, the
    difference is expanded as grad u . w; the block's mixed second moments
    vanish by symmetry, leaving the analytic term (1/2) S_blk grad u(x) with
    S_blk the radial integral of |w|^{-(1+s)} over the block square.
    method='sum' is the literal nested loop used as the small-grid oracle;
    'fft' evaluates the identical sum spectrally.
    """
    s = params.s
    m = int(params.R / u.h)
    if near_block < 0 or 2 * near_block + 1 > 2 * m:
        raise ValueError("near_block must be >= 0 and well inside the kernel")
    T = np.array(vector_cell_integrals(u.h, 3.0 + s, m))
    zi = u.h * np.arange(-m, m + 1)
    ZX, ZY = np.meshgrid(zi, zi, indexing="ij")
    T[ZX * ZX + ZY * ZY > params.R * params.R] = 0.0
    b = near_block
    T[m - b : m + b + 1, m - b : m + b + 1] = 0.0

    nx, ny = u.grid.nx, u.grid.ny
    conv = np.zeros((nx, ny, 2, 2))
    if method == "fft":
        # The offset sum is a correlation; against the antisymmetric vector
        # table that is minus the convolution.
        shape = _fft_shape((nx, ny), m, None)
        for j in range(2):
            for k in range(2):
                conv[..., j, k] = -_convolve_same(u.values[..., j], T[..., k], shape, m)
    elif method == "sum":
        for di in range(-m, m + 1):
            for dj in range(-m, m + 1):
                t = T[di + m, dj + m]
                if t[0] == 0.0 and t[1] == 0.0:
                    continue
                sx = slice(max(0, -di), min(nx, nx - di))
                sy = slice(max(0, -dj), min(ny, ny - dj))
                tx = slice(max(0, di), min(nx, nx + di))
                ty = slice(max(0, dj), min(ny, ny + dj))
                for j in range(2):
                    for k in range(2):
                        conv[sx, sy, j, k] += t[k] * u.values[tx, ty, j]
    else:
        raise ValueError(f"unknown method {method!r}")

    s_blk = _square_integral((near_block + 0.5) * u.h, 1.0 + s)
    central = 0.5 * s_blk * fd_gradient(u.values, u.h)
    vals = ((1.0 + s) / params.gamma_s) * (conv + central)
    return FracGradField(grid=u.grid, values=vals)


def jacobian_of_potential(
    u: VectorField2, params: FracParams, normalization: str = "raw"
) -> FloatArray:
    """Nodewise determinant of the potential's gradient; this is the scalar
    density whose flat convergence to pi * (Dirac sum) defines convergence
    of the fields themselves. Default uses the raw potential; the sweeps
    pass normalization='normalized' (the two differ by quoz^2)."""
    p = potential(u, params, normalization=normalization)
    G = fd_gradient(p.values, u.h)
    return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
