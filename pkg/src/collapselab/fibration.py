"""Fibration-adapted objects on the trivial torus fibration.

The projection f : T^(2m) x T^(2n) -> T^(2m) drops the fiber coordinates.
This module builds, for a total-space Kahler metric omega_X and a base Kahler
form chi pulled back through f:

* the fiberwise-flattened form  omega_sf = omega_X + i d dbar rho, whose
  restriction to every fiber is the constant-coefficient (flat) representative
  of the restricted class;
* the collapsed volume density F = omega_X^(n+m) / (C(n+m,n) omega_sf^n ^ chi^m),
  which descends to the base;
* the mass constants c_t of the collapsing Monge-Ampere family;
* base-pullback cut-off functions with collapse-uniform gradient/Laplacian
  bounds;
* the reference metric families used throughout the experiments.

Wedge powers of (1,1) forms are evaluated through determinant expansions: for
hermitian component matrices A, B on a d-dimensional complex torus,

    omega_A^p ^ omega_B^q = p! q! e_p(A, B) Vol_e,   p + q = d,

where Vol_e = prod_j (i dz^j ^ dzbar^j) = 2^d (Lebesgue) and e_p is the
coefficient of s^p in det(s A + B).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    FiberDegenerateError,
    FiberNonconstantError,
    IngredientError,
    InvalidDimensionError,
    NoFiberError,
    RegionError,
)
from .grid import (
    PeriodicGrid,
    ScalarField,
    constant_field,
    fiber_average_data,
    integrate_data,
    pullback_scalar_data,
    restrict_to_base_data,
)
from .metric import KahlerMetric, ddbar, grad_norm_sq, laplacian
from .tensors import (
    METRIC_SLOTS,
    TensorField,
    matrix_view,
    pullback_tensor,
)

# ---------------------------------------------------------------------------
# wedge calculus through determinant expansion


def mixed_det_coeffs(a_mat: np.ndarray, b_mat: np.ndarray) -> np.ndarray:
    """Coefficients e_p of det(s A + B) in s^p, p = 0..d.

    ``a_mat``/``b_mat`` are (points..., d, d) stacks; the result has shape
    (d+1, points...).  Evaluated at integer nodes and solved through a
    Vandermonde system, which is exact for the degree-d polynomial.
    """
    d = a_mat.shape[-1]
    nodes = np.arange(d + 1, dtype=float)
    vals = np.stack(
        [np.linalg.det(s * a_mat + b_mat) for s in nodes], axis=-1
    )  # (points..., d+1)
    vander = np.vander(nodes, increasing=True)  # vals = coeffs @ vander.T
    coeffs = np.linalg.solve(vander[None, ...], vals.reshape(-1, d + 1)[..., None])
    coeffs = coeffs.reshape(vals.shape)
    return np.moveaxis(coeffs, -1, 0)


def wedge_coeff_field(a: TensorField, b: TensorField, p: int) -> np.ndarray:
    """e_p(A, B) as a spatial array for two (1,1) lower tensors."""
    return mixed_det_coeffs(matrix_view(a), matrix_view(b))[p]


def wedge_integral(a: TensorField, p: int, b: TensorField, q: int) -> float:
    """Integral of omega_a^p ^ omega_b^q over the torus (full constants)."""
    grid = a.grid
    if p + q != grid.dim:
        raise InvalidDimensionError("wedge powers must saturate the dimension")
    coeff = wedge_coeff_field(a, b, p)
    return float(
        math.factorial(p)
        * math.factorial(q)
        * 2**grid.dim
        * integrate_data(coeff, grid).real
    )


def top_integral(a: TensorField) -> float:
    """Integral of omega_a^d (full constants)."""
    grid = a.grid
    det = np.linalg.det(matrix_view(a)).real
    return float(math.factorial(grid.dim) * 2**grid.dim * integrate_data(det, grid).real)


# ---------------------------------------------------------------------------
# the fibration model


def pullback_metric(base_metric: KahlerMetric, total_grid: PeriodicGrid) -> TensorField:
    """Base Kahler form as a (semi-positive) form on the total space."""
    return pullback_tensor(base_metric.tensor, total_grid)


@dataclass(frozen=True)
class FibrationModel:
    """Trivial product fibration with its base form and total-space metric."""

    grid: PeriodicGrid
    chi_base: KahlerMetric          # Kahler form on the base torus
    omega_x: KahlerMetric           # Kahler metric on the total space
    chi: TensorField = field(repr=False, default=None)  # pullback of chi_base

    def __post_init__(self):
        if self.grid.n < 1 or self.grid.m < 1:
            raise InvalidDimensionError("fibration needs m >= 1 and n >= 1")
        if self.chi_base.grid != self.grid.base_grid:
            raise InvalidDimensionError("chi_base must live on the base grid")
        if self.omega_x.grid != self.grid:
            raise InvalidDimensionError("omega_x must live on the total grid")
        if self.chi is None:
            object.__setattr__(self, "chi", pullback_metric(self.chi_base, self.grid))
        _assert_fiber_positive(self.omega_x.tensor, self.grid)

    @property
    def base_grid(self) -> PeriodicGrid:
        return self.grid.base_grid


def _fiber_block(data: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    return data[grid.m :, grid.m :]


def _assert_fiber_positive(tensor: TensorField, grid: PeriodicGrid):
    block = _fiber_block(tensor.data, grid)
    mat = np.moveaxis(block, (0, 1), (-2, -1))
    mat = 0.5 * (mat + np.conj(np.swapaxes(mat, -1, -2)))
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise FiberDegenerateError(
            "fiber restriction of the form is not positive definite"
        ) from exc


# ---------------------------------------------------------------------------
# fiberwise flattening


def _fiber_laplacian_solve(rhs: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Solve sum_j d_{y_j} d_{ybar_j} rho = rhs fiberwise (fiber-mean-zero rhs)."""
    import scipy.fft as _fft

    axes = tuple(ax - grid.real_dim for ax in grid.fiber_real_axes)
    symbol = None
    for ax in grid.fiber_real_axes:
        k = grid.wavenumbers(ax)
        term = -0.25 * k * k
        symbol = term if symbol is None else symbol + term
    rhat = _fft.fftn(rhs, axes=axes)
    with np.errstate(divide="ignore", invalid="ignore"):
        sol = np.where(symbol != 0.0, rhat / symbol, 0.0)
    return _fft.ifftn(sol, axes=axes)


def semi_ricci_flat(
    model: FibrationModel, consistency_tol: float = 1e-9
) -> tuple[ScalarField, TensorField]:
    """Fiberwise potential rho and the flattened form omega_X + i d dbar rho.

    For each base point the fiber restriction of the output has constant
    components equal to the fiber average of the fiber block of omega_X.
    rho is normalized to zero weighted fiber mean, the weight being the
    restricted volume density of omega_X.
    """
    grid = model.grid
    if grid.n < 1:
        raise NoFiberError("model has no fiber directions")
    gx = model.omega_x
    block = _fiber_block(gx.data, grid)
    target = fiber_average_data(block, grid)
    deviation = block - target
    # trace of the required fiberwise Hessian; the full matrix is verified below
    rhs = np.einsum("ii...->...", deviation)
    rho_vals = _fiber_laplacian_solve(rhs, grid)
    rho_vals = rho_vals.real.astype(np.complex128)

    # weighted fiber-mean normalization
    fiber_mat = np.moveaxis(block, (0, 1), (-2, -1))
    weight = np.linalg.det(0.5 * (fiber_mat + np.conj(np.swapaxes(fiber_mat, -1, -2)))).real
    mean = fiber_average_data(rho_vals * weight, grid) / fiber_average_data(
        weight.astype(np.complex128), grid
    )
    rho_vals = rho_vals - mean
    rho = ScalarField(grid, rho_vals)

    srf = gx.tensor + ddbar(rho)
    defect = np.max(np.abs(_fiber_block(srf.data, grid) - target))
    scale = max(float(np.max(np.abs(target))), 1.0)
    if defect > consistency_tol * scale:
        raise FiberDegenerateError(
            f"fiber block failed to flatten (defect {defect:.2e}); "
            "omega_X is not Kahler at this resolution"
        )
    return rho, srf


def fiber_restriction_curvature(form: TensorField) -> float:
    """Sup over base points of the curvature size of the fiber restrictions.

    The restrictions are flat iff the fiber block is constant along each
    fiber, so the defect is measured as the fiber variation of that block
    (derivative-free; exact zero for constant blocks).
    """
    grid = form.grid
    block = _fiber_block(form.data, grid)
    return float(np.max(np.abs(block - fiber_average_data(block, grid))))


# ---------------------------------------------------------------------------
# collapsed density and mass constants


def density_F(
    model: FibrationModel,
    omega_srf: TensorField,
    tol: float = 1e-8,
) -> ScalarField:
    """Base density F = omega_X^(n+m) / (C(n+m,n) omega_sf^n ^ chi^m).

    Checks that F is constant along the fibers before descending; variation
    above ``tol`` (relative) raises, signalling either under-resolution or a
    model whose total volume form does not descend.
    """
    grid = model.grid
    n = grid.n
    numerator = model.omega_x.det
    denom = mixed_det_coeffs(matrix_view(omega_srf), matrix_view(model.chi))[n].real
    if np.any(denom <= 0):
        raise FiberDegenerateError("collapsed volume density is not positive")
    f_vals = numerator / denom
    avg = fiber_average_data(f_vals, grid)
    variation = float(np.max(np.abs(f_vals - avg)))
    scale = float(np.max(np.abs(avg)))
    if variation > tol * scale:
        raise FiberNonconstantError(
            f"F varies along fibers (relative variation {variation / scale:.2e})"
        )
    base_vals = restrict_to_base_data(avg.astype(np.complex128), grid)
    return ScalarField(model.base_grid, base_vals)


def _wedge_mass_table(model: FibrationModel) -> np.ndarray:
    """[ integral of e_j(g_X, chi) ]_{j=0..d} (Lebesgue quadrature, no constants)."""
    coeffs = mixed_det_coeffs(matrix_view(model.omega_x.tensor), matrix_view(model.chi))
    return np.array(
        [integrate_data(coeffs[j], model.grid).real for j in range(model.grid.dim + 1)]
    )


def c_t_constant(model: FibrationModel, t: float) -> float:
    """Normalized mass of the collapsing reference class at time t.

    c_t = sum_{k=0..m} e^{-(m-k) t} I_{n+m-k} / I_{n+m}, where I_j integrates
    the degree-j determinant coefficient of (omega_X, chi); shared factorial
    and 2^d factors cancel in the ratio.
    """
    if t < 0:
        raise InvalidDimensionError("t must be nonnegative")
    masses = _wedge_mass_table(model)
    d, m = model.grid.dim, model.grid.m
    total = 0.0
    for k in range(m + 1):
        total += math.exp(-(m - k) * t) * masses[d - k]
    return float(total / masses[d])


def c_t_limit(model: FibrationModel) -> float:
    """Positive limit of c_t as t -> infinity."""
    masses = _wedge_mass_table(model)
    return float(masses[model.grid.n] / masses[model.grid.dim])


# ---------------------------------------------------------------------------
# base-pullback cut-off functions


@dataclass(frozen=True)
class RegionSpec:
    """Product of periodic intervals on the base: one (center, halfwidth) per
    real base axis.  A halfwidth of at least half the period covers the axis."""

    intervals: tuple[tuple[float, float], ...]

    def covers_axis(self, axis: int, period: float) -> bool:
        return self.intervals[axis][1] * 2.0 >= period

    def is_full(self, period: float) -> bool:
        return all(self.covers_axis(i, period) for i in range(len(self.intervals)))


def full_base_region(base_grid: PeriodicGrid) -> RegionSpec:
    return RegionSpec(
        tuple((0.0, base_grid.period) for _ in range(base_grid.real_dim))
    )


def region_mask(region: RegionSpec, grid: PeriodicGrid) -> np.ndarray:
    """Boolean mask of the region on the (total) grid, pulled back from the base."""
    period = grid.period
    mask = np.ones(grid.spatial_shape, dtype=bool)
    for axis, (center, hw) in enumerate(region.intervals):
        x = grid.coordinate(axis)
        dist = np.abs((x - center + period / 2.0) % period - period / 2.0)
        mask &= dist <= hw + 1e-12
    return mask


def _bump_kernel(grid: PeriodicGrid, half_width: float) -> np.ndarray:
    """Normalized compactly supported C-infinity kernel sampled on one axis."""
    x = grid.coordinate_1d()
    period = grid.period
    u = ((x + period / 2.0) % period - period / 2.0) / half_width
    kern = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    kern[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    kern /= kern.sum()
    return kern


def _mollified_interval(
    grid: PeriodicGrid, center: float, halfwidth: float, kernel_hw: float
) -> np.ndarray:
    """1D profile: periodic interval indicator convolved with the bump kernel."""
    import scipy.fft as _fft

    x = grid.coordinate_1d()
    period = grid.period
    dist = np.abs((x - center + period / 2.0) % period - period / 2.0)
    indicator = (dist <= halfwidth).astype(float)
    kern = _bump_kernel(grid, kernel_hw)
    prof = _fft.ifft(_fft.fft(indicator) * _fft.fft(kern)).real
    return np.clip(prof, 0.0, 1.0)


@dataclass
class CutoffFunction:
    """Base-pullback bump: 1 on the inner region, 0 outside the outer one."""

    rho: ScalarField
    inner: RegionSpec
    outer: RegionSpec
    b_k_samples: dict = field(default_factory=dict)  # t -> sup(|grad|^2 + |Lap|)

    @property
    def bound(self) -> float:
        """Reported collapse-uniform bound B_K (max over sampled times)."""
        return max(self.b_k_samples.values()) if self.b_k_samples else 0.0

    @property
    def bound_spread(self) -> float:
        if not self.b_k_samples:
            return 0.0
        vals = list(self.b_k_samples.values())
        top = max(vals)
        return 0.0 if top == 0 else (top - min(vals)) / top

    def support_mask(self) -> np.ndarray:
        return np.abs(self.rho.values) > 1e-14


def cutoff_bound_samples(
    rho: ScalarField, family: "MetricFamily", times
) -> dict:
    """sup(|grad rho|^2 + |Lap rho|) in the evolving metric at each sampled t."""
    out = {}
    for t in times:
        g = family.at(float(t))
        total = grad_norm_sq(rho, g).values.real + np.abs(laplacian(rho, g).values)
        out[float(t)] = float(np.max(total))
    return out


def make_cutoff(
    model: FibrationModel,
    inner: RegionSpec,
    outer: RegionSpec,
    family: "MetricFamily | None" = None,
    times=(0.0, 2.0, 4.0, 8.0),
) -> CutoffFunction:
    """Smooth base-pullback cut-off adapted to inner << outer regions.

    The profile is the indicator of the inner region padded by half the gap,
    convolved per axis with a compactly supported bump of width a quarter of
    the gap; it is exactly 1 on the inner region and exactly 0 outside the
    outer one at grid level.  When a metric family is supplied the
    gradient/Laplacian bound is sampled over ``times``.
    """
    base_grid = model.base_grid
    period = base_grid.period
    if len(inner.intervals) != base_grid.real_dim or len(outer.intervals) != base_grid.real_dim:
        raise RegionError("regions must specify every real base axis")

    if inner.is_full(period):
        rho = constant_field(model.grid, 1.0)
        cut = CutoffFunction(rho=rho, inner=inner, outer=outer)
        if family is not None:
            cut.b_k_samples = cutoff_bound_samples(rho, family, times)
        return cut

    profiles = []
    for axis in range(base_grid.real_dim):
        ci, hi = inner.intervals[axis]
        co, ho = outer.intervals[axis]
        if inner.covers_axis(axis, period):
            profiles.append(np.ones(base_grid.points))
            continue
        if abs(ci - co) > 1e-12:
            raise RegionError("inner and outer regions must share centers")
        gap = ho - hi
        if gap <= 4.0 * base_grid.spacing:
            raise RegionError(
                f"inner region touches the outer boundary on axis {axis} "
                f"(gap {gap:.3f})"
            )
        pad = 0.5 * gap
        kern_hw = 0.25 * gap
        profiles.append(_mollified_interval(base_grid, ci, hi + pad, kern_hw))

    vals = np.ones(base_grid.spatial_shape)
    for axis, prof in enumerate(profiles):
        shape = [1] * base_grid.real_dim
        shape[axis] = base_grid.points
        vals = vals * prof.reshape(shape)
    base_rho = np.clip(vals, 0.0, 1.0).astype(np.complex128)
    rho = ScalarField(
        model.grid, pullback_scalar_data(base_rho, base_grid, model.grid)
    )
    cut = CutoffFunction(rho=rho, inner=inner, outer=outer)
    if family is not None:
        cut.b_k_samples = cutoff_bound_samples(rho, family, times)
    return cut


# ---------------------------------------------------------------------------
# reference metric families


@dataclass
class MetricFamily:
    """t -> KahlerMetric with per-t caching (Christoffel caches persist)."""

    kind: str
    rule: Callable[[float], KahlerMetric]
    _cache: dict = field(default_factory=dict, repr=False)

    def at(self, t: float) -> KahlerMetric:
        t = float(t)
        if t not in self._cache:
            self._cache[t] = self.rule(t)
        return self._cache[t]


FAMILY_KINDS = (
    "omega_t",
    "tilde_omega_t",
    "flow_hat",
    "flow_tilde",
    "solved",
)


def reference_family(
    model: FibrationModel,
    kind: str,
    omega_b: KahlerMetric | None = None,
    omega_srf: TensorField | None = None,
    omega_0: KahlerMetric | None = None,
    rule: Callable[[float], KahlerMetric] | None = None,
) -> MetricFamily:
    """Construct one of the collapsing reference families.

    omega_t        : chi + e^{-t} omega_X
    tilde_omega_t  : omega_B + e^{-t} omega_sf       (needs omega_b, omega_srf)
    flow_hat       : e^{-t} omega_0 + (1 - e^{-t}) chi   (needs omega_0)
    flow_tilde     : e^{-t} omega_sf + (1 - e^{-t}) omega_B
    solved         : wraps a caller-provided rule
    """
    if kind not in FAMILY_KINDS:
        raise IngredientError(f"unknown family kind {kind!r}")
    grid = model.grid
    chi = model.chi

    if kind == "omega_t":
        gx = model.omega_x.tensor

        def rule_fn(t: float) -> KahlerMetric:
            return KahlerMetric(
                TensorField(grid, METRIC_SLOTS, chi.data + np.exp(-t) * gx.data)
            )

    elif kind == "tilde_omega_t":
        if omega_b is None or omega_srf is None:
            raise IngredientError("tilde_omega_t needs omega_b and omega_srf")
        ob = pullback_metric(omega_b, grid)

        def rule_fn(t: float) -> KahlerMetric:
            return KahlerMetric(
                TensorField(grid, METRIC_SLOTS, ob.data + np.exp(-t) * omega_srf.data)
            )

    elif kind == "flow_hat":
        if omega_0 is None:
            raise IngredientError("flow_hat needs omega_0")
        g0 = omega_0.tensor

        def rule_fn(t: float) -> KahlerMetric:
            s = np.exp(-t)
            return KahlerMetric(
                TensorField(grid, METRIC_SLOTS, s * g0.data + (1.0 - s) * chi.data)
            )

    elif kind == "flow_tilde":
        if omega_b is None or omega_srf is None:
            raise IngredientError("flow_tilde needs omega_b and omega_srf")
        ob = pullback_metric(omega_b, grid)

        def rule_fn(t: float) -> KahlerMetric:
            s = np.exp(-t)
            return KahlerMetric(
                TensorField(grid, METRIC_SLOTS, s * omega_srf.data + (1.0 - s) * ob.data)
            )

    else:
        if rule is None:
            raise IngredientError("solved family needs an explicit rule")
        rule_fn = rule

    return MetricFamily(kind=kind, rule=rule_fn)
