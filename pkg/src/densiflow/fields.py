"""Periodic scalar/vector fields on a square grid and their spectral calculus.

All differential operators act through the FFT: a field sampled at
(i*h, j*h), h = length/n, is identified with the trigonometric polynomial
interpolating it, and derivatives are exact for that polynomial. The Nyquist
row is zeroed in odd-order operators (gradient, divergence, curl) so that
they map real fields to real fields with a well-defined sign; the laplacian
keeps the full -|k|^2 symbol so diffusion damps every resolved mode.

Quadrature is the rectangle rule h^2 * sum, which is the exact integral of
any resolved trigonometric polynomial over the periodic box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BadExponent, GridMismatch, NonFiniteField

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic n x n grid on [0, length)^2.

    n must be a power of two >= 8 so the 2/3-rule dealiasing mask and the
    multigrid-free spectral solves behave uniformly across resolutions.
    """

    n: int
    length: float = TWO_PI

    def __post_init__(self):
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if not (self.length > 0.0 and math.isfinite(self.length)):
            raise ValueError(f"grid length must be positive and finite, got {self.length}")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def mesh(self):
        """Return (X, Y) with X[i, j] = i*h, Y[i, j] = j*h."""
        x = self.nodes()
        return np.meshgrid(x, x, indexing="ij")


def _as_values(grid: GridSpec, values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (grid.n, grid.n):
        raise ValueError(f"expected shape {(grid.n, grid.n)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteField("field samples must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class ScalarField:
    """Immutable real scalar samples; values[i, j] = f(i*h, j*h)."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values):
        self.grid = grid
        self.values = _as_values(grid, values)

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        X, Y = grid.mesh()
        return cls(grid, fn(X, Y))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full((grid.n, grid.n), float(value)))


class VectorField2:
    """Immutable 2-component vector field sharing one grid."""

    __slots__ = ("grid", "x_comp", "y_comp")

    def __init__(self, grid: GridSpec, x_comp, y_comp):
        self.grid = grid
        self.x_comp = _as_values(grid, x_comp)
        self.y_comp = _as_values(grid, y_comp)

    @classmethod
    def from_functions(cls, grid: GridSpec, fx, fy) -> "VectorField2":
        X, Y = grid.mesh()
        return cls(grid, fx(X, Y), fy(X, Y))

    @classmethod
    def zero(cls, grid: GridSpec) -> "VectorField2":
        z = np.zeros((grid.n, grid.n))
        return cls(grid, z, z)


@dataclass(frozen=True)
class MollifierLevel:
    """Gaussian spectral mollifier with symbol exp(-|k|^2 / (2 n^2))."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"mollifier level must be >= 1, got {self.n}")

    def symbol(self, k_squared: np.ndarray) -> np.ndarray:
        return np.exp(-k_squared / (2.0 * self.n * self.n))


@lru_cache(maxsize=64)
def _spectral_tables(n: int, length: float):
    """Per-grid wavenumber arrays, cached by (n, length)."""
    k = TWO_PI * np.fft.fftfreq(n, d=length / n)
    kd = k.copy()
    kd[n // 2] = 0.0  # Nyquist zeroed for odd-order operators
    kx = k[:, None]
    ky = k[None, :]
    kdx = kd[:, None]
    kdy = kd[None, :]
    k2_full = kx**2 + ky**2
    k2_deriv = kdx**2 + kdy**2
    idx = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    keep = (idx[:, None] <= n / 3.0) & (idx[None, :] <= n / 3.0)
    return kdx, kdy, k2_full, k2_deriv, keep


def same_grid(*fields) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatch(f"grids differ: {f.grid} vs {grid}")
    return grid


def gradient(f: ScalarField) -> VectorField2:
    """Spectral gradient of a scalar field."""
    kdx, kdy, _, _, _ = _spectral_tables(f.grid.n, f.grid.length)
    fh = np.fft.fft2(f.values)
    gx = np.fft.ifft2(1j * kdx * fh).real
    gy = np.fft.ifft2(1j * kdy * fh).real
    return VectorField2(f.grid, gx, gy)


def divergence(v: VectorField2) -> ScalarField:
    """Spectral divergence of a vector field."""
    kdx, kdy, _, _, _ = _spectral_tables(v.grid.n, v.grid.length)
    xh = np.fft.fft2(v.x_comp)
    yh = np.fft.fft2(v.y_comp)
    d = np.fft.ifft2(1j * kdx * xh + 1j * kdy * yh).real
    return ScalarField(v.grid, d)


def curl(v: VectorField2) -> ScalarField:
    """Scalar curl d(v_y)/dx - d(v_x)/dy."""
    kdx, kdy, _, _, _ = _spectral_tables(v.grid.n, v.grid.length)
    xh = np.fft.fft2(v.x_comp)
    yh = np.fft.fft2(v.y_comp)
    w = np.fft.ifft2(1j * kdx * yh - 1j * kdy * xh).real
    return ScalarField(v.grid, w)


def laplacian(f):
    """Spectral laplacian of a scalar or (componentwise) vector field."""
    _, _, k2, _, _ = _spectral_tables(f.grid.n, f.grid.length)
    if isinstance(f, ScalarField):
        fh = np.fft.fft2(f.values)
        return ScalarField(f.grid, np.fft.ifft2(-k2 * fh).real)
    lx = np.fft.ifft2(-k2 * np.fft.fft2(f.x_comp)).real
    ly = np.fft.ifft2(-k2 * np.fft.fft2(f.y_comp)).real
    return VectorField2(f.grid, lx, ly)


def _second_derivatives(values: np.ndarray, grid: GridSpec):
    """(fxx, fxy, fyy) spectrally; the mixed derivative uses Nyquist-zeroed rows.

    Pure second derivatives keep the full squared wavenumber so that
    fxx + fyy agrees with laplacian on every field.
    """
    kdx, kdy, k2, _, _ = _spectral_tables(grid.n, grid.length)
    n = grid.n
    k = TWO_PI * np.fft.fftfreq(n, d=grid.length / n)
    kx2 = (k**2)[:, None]
    ky2 = (k**2)[None, :]
    fh = np.fft.fft2(values)
    fxx = np.fft.ifft2(-kx2 * fh).real
    fyy = np.fft.ifft2(-ky2 * fh).real
    fxy = np.fft.ifft2(-(kdx * kdy) * fh).real
    return fxx, fxy, fyy


def hessian_norms(v: VectorField2) -> ScalarField:
    """Pointwise Frobenius norm of the full second-derivative tensor of v."""
    total = np.zeros((v.grid.n, v.grid.n))
    for comp in (v.x_comp, v.y_comp):
        fxx, fxy, fyy = _second_derivatives(comp, v.grid)
        total += fxx**2 + 2.0 * fxy**2 + fyy**2
    return ScalarField(v.grid, np.sqrt(total))


def grad_tensor(v: VectorField2):
    """The four entries (dux/dx, dux/dy, duy/dx, duy/dy) as arrays."""
    kdx, kdy, _, _, _ = _spectral_tables(v.grid.n, v.grid.length)
    xh = np.fft.fft2(v.x_comp)
    yh = np.fft.fft2(v.y_comp)
    return (
        np.fft.ifft2(1j * kdx * xh).real,
        np.fft.ifft2(1j * kdy * xh).real,
        np.fft.ifft2(1j * kdx * yh).real,
        np.fft.ifft2(1j * kdy * yh).real,
    )


def leray_project(v: VectorField2) -> VectorField2:
    """Remove the gradient part: v - grad(inverse_laplacian(div v)).

    The projector is assembled from the same Nyquist-zeroed wavenumbers as
    divergence, so divergence(leray_project(v)) vanishes identically and the
    projection is idempotent; the mean (k = 0) block is untouched.
    """
    kdx, kdy, _, k2d, _ = _spectral_tables(v.grid.n, v.grid.length)
    xh = np.fft.fft2(v.x_comp)
    yh = np.fft.fft2(v.y_comp)
    denom = np.where(k2d == 0.0, 1.0, k2d)
    dot = (kdx * xh + kdy * yh) / denom
    mask = k2d != 0.0
    px = xh - np.where(mask, kdx * dot, 0.0)
    py = yh - np.where(mask, kdy * dot, 0.0)
    return VectorField2(v.grid, np.fft.ifft2(px).real, np.fft.ifft2(py).real)


def dealias(f):
    """2/3-rule truncation: zero every mode with an index above n/3."""
    _, _, _, _, keep = _spectral_tables(f.grid.n, f.grid.length)
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, np.fft.ifft2(np.fft.fft2(f.values) * keep).real)
    return VectorField2(
        f.grid,
        np.fft.ifft2(np.fft.fft2(f.x_comp) * keep).real,
        np.fft.ifft2(np.fft.fft2(f.y_comp) * keep).real,
    )


def multiply(f: ScalarField, g: ScalarField) -> ScalarField:
    """Alias-safe product: truncate both factors, multiply, truncate again."""
    same_grid(f, g)
    ft = dealias(f)
    gt = dealias(g)
    return dealias(ScalarField(f.grid, ft.values * gt.values))


def _magnitude(f) -> np.ndarray:
    if isinstance(f, ScalarField):
        return np.abs(f.values)
    return np.hypot(f.x_comp, f.y_comp)


def norm(f, p) -> float:
    """L^p norm by rectangle-rule quadrature; p may be any real >= 1 or inf.

    Vector fields use the pointwise Euclidean magnitude.
    """
    mag = _magnitude(f)
    if p == np.inf or p == math.inf:
        return float(mag.max())
    p = float(p)
    if p < 1.0:
        raise BadExponent(f"exponent must be >= 1 or inf, got {p}")
    h2 = f.grid.spacing**2
    return float((h2 * np.sum(mag**p)) ** (1.0 / p))


def seminorm_grad(f, p) -> float:
    """L^p norm of |grad f| (Frobenius norm of the gradient tensor)."""
    if isinstance(f, ScalarField):
        g = gradient(f)
        mag = np.sqrt(g.x_comp**2 + g.y_comp**2)
    else:
        axx, axy, ayx, ayy = grad_tensor(f)
        mag = np.sqrt(axx**2 + axy**2 + ayx**2 + ayy**2)
    if p == np.inf or p == math.inf:
        return float(mag.max())
    p = float(p)
    if p < 1.0:
        raise BadExponent(f"exponent must be >= 1 or inf, got {p}")
    h2 = f.grid.spacing**2
    return float((h2 * np.sum(mag**p)) ** (1.0 / p))


def inner(f, g) -> float:
    """L^2 inner product (componentwise for vector fields)."""
    grid = same_grid(f, g)
    h2 = grid.spacing**2
    if isinstance(f, ScalarField) and isinstance(g, ScalarField):
        return float(h2 * np.sum(f.values * g.values))
    if isinstance(f, VectorField2) and isinstance(g, VectorField2):
        return float(h2 * np.sum(f.x_comp * g.x_comp + f.y_comp * g.y_comp))
    raise TypeError("inner product needs two fields of the same kind")


def mean(f: ScalarField) -> float:
    return float(f.values.mean())


def mollify(f, level: MollifierLevel):
    """Apply the Gaussian spectral mollifier at the given level.

    The symbol is <= 1 with equality only at k = 0, so the map is an
    L^2 contraction that preserves the mean, and levels increase pointwise
    toward the identity.
    """
    _, _, k2, _, _ = _spectral_tables(f.grid.n, f.grid.length)
    sym = level.symbol(k2)
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, np.fft.ifft2(np.fft.fft2(f.values) * sym).real)
    return VectorField2(
        f.grid,
        np.fft.ifft2(np.fft.fft2(f.x_comp) * sym).real,
        np.fft.ifft2(np.fft.fft2(f.y_comp) * sym).real,
    )
