"""Discretization and spectral calculus on a product torus.

The computational domain is X = T^(2m) x T^(2n): a flat torus carrying m
"base" and n "fiber" complex coordinates.  Complex coordinate ``a`` is built
from the two real axes ``2a`` (real part) and ``2a + 1`` (imaginary part), so

    z_a = x_{2a} + i x_{2a+1},      a = 0 .. m-1        (base)
    y_j = x_{2(m+j)} + i x_{2(m+j)+1},  j = 0 .. n-1    (fiber)

All axes share the same period (2*pi by default) and point count, and all
derivatives are discrete-Fourier derivatives: exact for trigonometric
polynomials below the Nyquist frequency.  The complex-derivative convention
is fixed once and used everywhere downstream:

    d/dz = (d/dx - i d/dy) / 2,     d/dzbar = (d/dx + i d/dy) / 2.

Scalar data lives in :class:`ScalarField`; tensor data in
:class:`collapselab.tensors.TensorField`.  Arrays always keep the spatial
axes trailing so component axes can be prepended freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as _fft

from .errors import InvalidDimensionError, NoFiberError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the product torus T^(2m) x T^(2n).

    Parameters
    ----------
    m, n : int
        Base and fiber complex dimensions.
    points : int
        Points per real axis (even, at least 8).
    period : float
        Common period of every real axis.
    """

    m: int
    n: int
    points: int
    period: float = TWO_PI

    def __post_init__(self):
        if self.m < 0 or self.n < 0 or self.m + self.n < 1:
            raise InvalidDimensionError(
                f"need m, n >= 0 with m + n >= 1, got m={self.m}, n={self.n}"
            )
        if self.points < 8 or self.points % 2 != 0:
            raise InvalidDimensionError(
                f"points per axis must be even and >= 8, got {self.points}"
            )
        if self.period <= 0:
            raise InvalidDimensionError("period must be positive")

    # -- shape bookkeeping -------------------------------------------------

    @property
    def dim(self) -> int:
        """Complex dimension m + n."""
        return self.m + self.n

    @property
    def real_dim(self) -> int:
        return 2 * self.dim

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.points,) * self.real_dim

    @property
    def spatial_axes(self) -> tuple[int, ...]:
        """Axis ids of the spatial block counted from the end of an array."""
        return tuple(range(-self.real_dim, 0))

    @property
    def num_points(self) -> int:
        return self.points**self.real_dim

    @property
    def spacing(self) -> float:
        return self.period / self.points

    @property
    def volume(self) -> float:
        """Lebesgue volume of the real torus."""
        return self.period**self.real_dim

    @property
    def fiber_real_axes(self) -> tuple[int, ...]:
        return tuple(range(2 * self.m, self.real_dim))

    @property
    def base_real_axes(self) -> tuple[int, ...]:
        return tuple(range(0, 2 * self.m))

    def complex_axes(self, a: int) -> tuple[int, int]:
        """Real axes (re, im) backing complex coordinate ``a``."""
        if not 0 <= a < self.dim:
            raise InvalidDimensionError(f"complex index {a} out of range")
        return 2 * a, 2 * a + 1

    def is_fiber_dir(self, a: int) -> bool:
        return a >= self.m

    @cached_property
    def base_grid(self) -> "PeriodicGrid":
        """The grid of the base torus T^(2m)."""
        if self.m == 0:
            raise NoFiberError("grid has no base factor")
        return PeriodicGrid(self.m, 0, self.points, self.period)

    # -- coordinates and frequencies ---------------------------------------

    def coordinate_1d(self) -> np.ndarray:
        return np.arange(self.points) * self.spacing

    def coordinate(self, axis: int) -> np.ndarray:
        """Coordinate along one real axis, broadcast to the spatial shape."""
        if not 0 <= axis < self.real_dim:
            raise InvalidDimensionError(f"real axis {axis} out of range")
        shape = [1] * self.real_dim
        shape[axis] = self.points
        return np.broadcast_to(
            self.coordinate_1d().reshape(shape), self.spatial_shape
        )

    @cached_property
    def _wavenumbers_1d(self) -> np.ndarray:
        # Angular wavenumbers k with d/dx -> i k.  The Nyquist mode is zeroed
        # so derivatives of real fields stay real.
        k = np.fft.fftfreq(self.points, d=1.0 / self.points) * (TWO_PI / self.period)
        k[self.points // 2] = 0.0
        return k

    def wavenumbers(self, axis: int) -> np.ndarray:
        """Derivative wavenumbers along one real axis, broadcastable."""
        shape = [1] * self.real_dim
        shape[axis] = self.points
        return self._wavenumbers_1d.reshape(shape)

    @cached_property
    def holo_symbols(self) -> np.ndarray:
        """Fourier symbols of d/dz_a, stacked (dim,) + spatial."""
        syms = []
        for a in range(self.dim):
            re_ax, im_ax = self.complex_axes(a)
            kx = self.wavenumbers(re_ax)
            ky = self.wavenumbers(im_ax)
            syms.append(np.broadcast_to(0.5j * (kx - 1j * ky), self.spatial_shape))
        return np.stack(syms)

    @cached_property
    def degenerate_mode_mask(self) -> np.ndarray:
        """Fourier modes annihilated by every derivative (mean and pure Nyquist)."""
        mask = np.ones(self.spatial_shape, dtype=bool)
        for axis in range(self.real_dim):
            mask &= np.broadcast_to(self.wavenumbers(axis) == 0.0, self.spatial_shape)
        return mask


def make_grid(m: int, n: int, points: int, period: float = TWO_PI) -> PeriodicGrid:
    """Build the uniform product-torus grid; validates dimensions."""
    return PeriodicGrid(m, n, points, period)


# ---------------------------------------------------------------------------
# scalar fields


@dataclass(frozen=True)
class ScalarField:
    """Complex scalar sampled on every grid point."""

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != self.grid.spatial_shape:
            raise InvalidDimensionError(
                f"value shape {self.values.shape} does not match grid "
                f"{self.grid.spatial_shape}"
            )

    # Small arithmetic surface so formulas read naturally.
    def __add__(self, other):
        return ScalarField(self.grid, self.values + _unwrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _unwrap(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, _unwrap(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _unwrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / _unwrap(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def conj(self) -> "ScalarField":
        return ScalarField(self.grid, np.conj(self.values))

    def real(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.real.astype(np.complex128))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def _unwrap(x):
    return x.values if isinstance(x, ScalarField) else x


def constant_field(grid: PeriodicGrid, value: complex) -> ScalarField:
    return ScalarField(grid, np.full(grid.spatial_shape, value, dtype=np.complex128))


def field_from_function(grid: PeriodicGrid, fn) -> ScalarField:
    """Sample ``fn(coords) -> array`` where coords is a list of axis arrays."""
    coords = [grid.coordinate(a) for a in range(grid.real_dim)]
    return ScalarField(grid, np.asarray(fn(coords), dtype=np.complex128))


# ---------------------------------------------------------------------------
# spectral derivatives (array level; fields wrap these)


def partial_data(data: np.ndarray, grid: PeriodicGrid, axis: int) -> np.ndarray:
    """DFT derivative of trailing-spatial data along one real axis."""
    if not 0 <= axis < grid.real_dim:
        raise InvalidDimensionError(f"real axis {axis} out of range")
    ax = axis - grid.real_dim  # count from the end: component axes lead
    fhat = _fft.fft(data, axis=ax)
    k = grid.wavenumbers(axis)
    return _fft.ifft(fhat * (1j * k), axis=ax)


def holo_partial_data(
    data: np.ndarray, grid: PeriodicGrid, a: int, anti: bool = False
) -> np.ndarray:
    """d/dz_a (or d/dzbar_a) of trailing-spatial data."""
    re_ax, im_ax = grid.complex_axes(a)
    dre = partial_data(data, grid, re_ax)
    dim = partial_data(data, grid, im_ax)
    if anti:
        return 0.5 * (dre + 1j * dim)
    return 0.5 * (dre - 1j * dim)


def all_holo_partials(
    data: np.ndarray, grid: PeriodicGrid, anti: bool = False
) -> np.ndarray:
    """Stack d/dz_a for every complex direction as a new trailing component axis.

    Output shape: data.shape[:-R] + (dim,) + spatial, where R = real_dim.
    One forward FFT is shared across all directions.
    """
    axes = grid.spatial_axes
    fhat = _fft.fftn(data, axes=axes)
    pieces = []
    for a in range(grid.dim):
        re_ax, im_ax = grid.complex_axes(a)
        kx = grid.wavenumbers(re_ax)
        ky = grid.wavenumbers(im_ax)
        if anti:
            sym = 0.5j * (kx + 1j * ky)
        else:
            sym = 0.5j * (kx - 1j * ky)
        pieces.append(_fft.ifftn(fhat * sym, axes=axes))
    ncomp = data.ndim - grid.real_dim
    return np.stack(pieces, axis=ncomp)


def complex_hessian_data(
    vals: np.ndarray, grid: PeriodicGrid, project: bool = False
) -> np.ndarray:
    """d_i d_jbar of a scalar array: shape (dim, dim) + spatial.

    One forward FFT plus a batched inverse; with ``project`` the degenerate
    modes (with no derivative content) are removed first.
    """
    fhat = _fft.fftn(vals, axes=grid.spatial_axes)
    if project:
        fhat = np.where(grid.degenerate_mode_mask, 0.0, fhat)
    mus = grid.holo_symbols
    nus = -np.conj(mus)
    hh = fhat * mus[:, None] * nus[None, :]
    return _fft.ifftn(hh, axes=grid.spatial_axes)


def project_band_data(vals: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Remove the degenerate (derivative-free) Fourier modes of an array."""
    fhat = _fft.fftn(vals, axes=grid.spatial_axes)
    fhat = np.where(grid.degenerate_mode_mask, 0.0, fhat)
    return _fft.ifftn(fhat, axes=grid.spatial_axes)


def spectral_partial(f: ScalarField, axis: int) -> ScalarField:
    """d f / d x_axis via Fourier multiplication by i k."""
    return ScalarField(f.grid, partial_data(f.values, f.grid, axis))


def holo_partial(f: ScalarField, a: int) -> ScalarField:
    """d f / d z_a with the (d/dx - i d/dy)/2 convention."""
    return ScalarField(f.grid, holo_partial_data(f.values, f.grid, a, anti=False))


def antiholo_partial(f: ScalarField, a: int) -> ScalarField:
    """d f / d zbar_a."""
    return ScalarField(f.grid, holo_partial_data(f.values, f.grid, a, anti=True))


# ---------------------------------------------------------------------------
# quadrature and fiber reduction


def integrate(f: ScalarField) -> complex:
    """Periodic trapezoid rule: mean value times torus volume.

    Exact for band-limited integrands.
    """
    return complex(np.mean(f.values) * f.grid.volume)


def integrate_data(data: np.ndarray, grid: PeriodicGrid) -> complex:
    return complex(np.mean(data) * grid.volume)


def fiber_average_data(data: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Average trailing-spatial data over the fiber axes, broadcast back."""
    if grid.n == 0:
        raise NoFiberError("grid has no fiber factor")
    axes = tuple(ax - grid.real_dim for ax in grid.fiber_real_axes)
    avg = np.mean(data, axis=axes, keepdims=True)
    return np.broadcast_to(avg, data.shape).copy()


def fiber_average(f: ScalarField) -> ScalarField:
    """Mean over each fiber; output is constant along fibers and idempotent."""
    return ScalarField(f.grid, fiber_average_data(f.values, f.grid))


def fiber_variation(f: ScalarField) -> float:
    """Sup deviation of a field from its fiberwise mean."""
    return float(np.max(np.abs(f.values - fiber_average_data(f.values, f.grid))))


def restrict_to_base_data(data: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Slice fiber axes at index 0, leaving base-grid spatial shape."""
    if grid.m == 0:
        raise NoFiberError("grid has no base factor")
    index = (Ellipsis,) + (slice(None),) * (2 * grid.m) + (0,) * (2 * grid.n)
    return np.ascontiguousarray(data[index])


def restrict_to_base(f: ScalarField) -> ScalarField:
    """Field on the base grid obtained by fiber-averaging then slicing."""
    avg = fiber_average_data(f.values, f.grid)
    return ScalarField(f.grid.base_grid, restrict_to_base_data(avg, f.grid))


def pullback_scalar_data(
    data: np.ndarray, base_grid: PeriodicGrid, total_grid: PeriodicGrid
) -> np.ndarray:
    """Broadcast base-grid trailing-spatial data along the fiber axes."""
    if base_grid.m != total_grid.m or base_grid.n != 0:
        raise InvalidDimensionError("pullback source must be the base grid")
    if base_grid.points != total_grid.points:
        raise InvalidDimensionError("base and total grids must share point count")
    expanded = data.reshape(data.shape + (1,) * (2 * total_grid.n))
    target = data.shape[: data.ndim - 2 * base_grid.m] + total_grid.spatial_shape
    return np.broadcast_to(expanded, target).copy()


def pullback_scalar(f: ScalarField, total_grid: PeriodicGrid) -> ScalarField:
    return ScalarField(total_grid, pullback_scalar_data(f.values, f.grid, total_grid))
