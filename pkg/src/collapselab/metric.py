"""Kahler metric calculus on the product torus.

Conventions, fixed here and assumed by every caller:

* metric components ``g[i, j]`` mean g_{i jbar}; the matrix is hermitian and
  positive definite at every grid point;
* inverse components ``g^{i jbar}`` satisfy  g^{i jbar} g_{k jbar} = delta^i_k;
* Christoffel symbols (holomorphic indices only)

      Gamma^k_{a p} = g^{k lbar} d_a g_{p lbar},

  stored as ``Gamma[k, a, p]`` and symmetric in (a, p);
* curvature

      R_{i jbar k lbar} = - d_i d_jbar g_{k lbar}
                          + g^{p qbar} d_i g_{k qbar} d_jbar g_{p lbar},

  with Ric_{i jbar} = g^{k lbar} R_{i jbar k lbar},  R = g^{i jbar} Ric_{i jbar},
  and the raised tensor  Rsharp_{i jbar k}^l = g^{l qbar} R_{i jbar k qbar};
* the scalar Laplacian is the complex trace  Delta f = g^{i jbar} d_i d_jbar f,
  and |grad f|^2 = g^{i jbar} d_i f d_jbar f.

Covariant derivatives append one lower slot per application, in application
order.  "All possible covariant derivatives" of order k means the full tree of
holomorphic/antiholomorphic applications; its pointwise norm is the sum of the
squared norms over all 2^k branches.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import sqrt

import numpy as np

from .errors import (
    InvalidDimensionError,
    NotProductError,
    SingularMetricError,
)
from .grid import (
    PeriodicGrid,
    ScalarField,
    all_holo_partials,
    holo_partial_data,
)
from .tensors import (
    METRIC_SLOTS,
    Slot,
    TensorField,
    hermitian_defect,
    matrix_view,
    pullback_tensor,
)

HERMITIAN_TOL = 1e-10
CLOSED_TOL = 1e-8


class KahlerMetric:
    """Positive hermitian (1,1) tensor field with dclosed = 0.

    Wraps the component tensor and caches the pointwise inverse, Christoffel
    symbols and curvature.  Treat instances as immutable.
    """

    def __init__(self, tensor: TensorField, check: bool = True,
                 closed_tol: float = CLOSED_TOL):
        if tensor.slots != METRIC_SLOTS:
            raise InvalidDimensionError("metric needs slots (cov-holo, cov-antiholo)")
        self.tensor = tensor
        self.grid = tensor.grid
        if check:
            defect = hermitian_defect(tensor)
            scale = max(tensor.sup(), 1.0)
            if defect > HERMITIAN_TOL * scale:
                raise SingularMetricError(
                    f"metric is not hermitian (defect {defect:.2e})"
                )
            self._assert_positive()
            closed = self.closedness_defect()
            if closed > closed_tol * scale:
                raise SingularMetricError(
                    f"metric form is not closed (defect {closed:.2e})"
                )

    # -- basic views --------------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @cached_property
    def matrix(self) -> np.ndarray:
        """(points..., d, d) hermitian matrices."""
        mat = matrix_view(self.tensor)
        return 0.5 * (mat + np.conj(np.swapaxes(mat, -1, -2)))

    def _assert_positive(self):
        try:
            np.linalg.cholesky(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError(
                "metric is not positive definite at some grid point"
            ) from exc

    @cached_property
    def inverse(self) -> np.ndarray:
        """Components g^{i jbar}, arranged ``inv[i, j]`` with spatial trailing.

        Built from the batched matrix inverse: g^{i jbar} = (G^{-1})[j, i].
        """
        try:
            inv_mat = np.linalg.inv(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError("pointwise inversion failed") from exc
        return np.moveaxis(inv_mat, (-2, -1), (1, 0)).copy()

    @cached_property
    def det(self) -> np.ndarray:
        """Pointwise determinant of the hermitian matrix (real, positive)."""
        det = np.linalg.det(self.matrix).real
        if np.any(det <= 0):
            raise SingularMetricError("metric determinant is not positive")
        return det

    @cached_property
    def _dg_holo(self) -> np.ndarray:
        """dg[p, l, a] = d_a g_{p lbar}."""
        return all_holo_partials(self.data, self.grid, anti=False)

    def closedness_defect(self) -> float:
        """sup | d_a g_{p lbar} - d_p g_{a lbar} |; zero iff the form is closed."""
        dg = self._dg_holo
        return float(np.max(np.abs(dg - np.moveaxis(dg, (0, 2), (2, 0)))))

    @cached_property
    def christoffel(self) -> np.ndarray:
        """Gamma[k, a, p] = g^{k lbar} d_a g_{p lbar}."""
        return np.einsum("kl...,pla...->kap...", self.inverse, self._dg_holo)

    @cached_property
    def curvature(self) -> "CurvatureBundle":
        return _curvature_bundle(self)

    # -- arithmetic helpers ---------------------------------------------------

    def scaled(self, factor: float, check: bool = False) -> "KahlerMetric":
        return KahlerMetric(self.tensor * factor, check=check)

    def plus_form(self, form: TensorField, check: bool = True) -> "KahlerMetric":
        return KahlerMetric(self.tensor + form, check=check)


def is_positive_form(tensor: TensorField) -> bool:
    """True when a hermitian (1,1) tensor is positive definite everywhere."""
    mat = matrix_view(tensor)
    mat = 0.5 * (mat + np.conj(np.swapaxes(mat, -1, -2)))
    try:
        np.linalg.cholesky(mat)
        return True
    except np.linalg.LinAlgError:
        return False


# ---------------------------------------------------------------------------
# first and second complex derivatives of scalars


def ddbar(phi: ScalarField) -> TensorField:
    """Complex Hessian d_i d_jbar phi as a hermitian (1,1) lower tensor.

    The i in "i d dbar" lives in the form convention, not in the components;
    adding this tensor to a metric's components implements omega + i d dbar phi.
    """
    grid = phi.grid
    hess = complex_hessian_data(phi.values, grid)
    # hermitize: exact for real phi, harmless otherwise
    data = 0.5 * (hess + np.conj(np.swapaxes(hess, 0, 1)))
    return TensorField(grid, METRIC_SLOTS, data)


def laplacian(phi: ScalarField, g: KahlerMetric) -> ScalarField:
    """Complex-trace Laplacian  g^{i jbar} d_i d_jbar phi."""
    grid = phi.grid
    hess = complex_hessian_data(phi.values, grid)
    return ScalarField(grid, np.einsum("ij...,ij...->...", g.inverse, hess))


def grad_norm_sq(phi: ScalarField, g: KahlerMetric) -> ScalarField:
    """|grad phi|^2 = g^{i jbar} d_i phi d_jbar (conj phi is used for complex phi)."""
    grid = phi.grid
    dh = all_holo_partials(phi.values, grid, anti=False)
    vals = np.einsum("ij...,i...,j...->...", g.inverse, dh, np.conj(dh))
    return ScalarField(grid, vals.real.astype(np.complex128))


# ---------------------------------------------------------------------------
# covariant differentiation


def christoffel(g: KahlerMetric) -> np.ndarray:
    """Christoffel components Gamma[k, a, p]; see the module docstring."""
    return g.christoffel


def _contract_gamma(gamma: np.ndarray, T: TensorField, j: int, upper_free: bool) -> np.ndarray:
    """einsum core for one slot: result axes [comps with free index at j, a, spatial]."""
    r = T.rank
    moved = np.moveaxis(T.data, j, 0)
    if upper_free:
        term = np.einsum("kap...,p...->ak...", gamma, moved)
    else:
        term = np.einsum("pak...,p...->ak...", gamma, moved)
    # term axes: [a, k, other comps..., spatial]; want [comps(k at j), a, spatial]
    term = np.moveaxis(term, 0, r)     # -> [k, others..., a, spatial]
    term = np.moveaxis(term, 0, j)     # -> [others with k at j..., a, spatial]
    return term


def covariant_derivative(T: TensorField, g: KahlerMetric, kind: str = "holo") -> TensorField:
    """One covariant derivative of ``T``; the new lower slot is appended last.

    ``kind`` is "holo" (nabla_a, acting on holomorphic slots) or "antiholo"
    (nabla_abar, acting on antiholomorphic slots through the conjugated
    Christoffel symbols).  Scalars receive plain complex partials.
    """
    if kind not in ("holo", "antiholo"):
        raise InvalidDimensionError(f"unknown derivative kind {kind!r}")
    anti = kind == "antiholo"
    grid = T.grid
    der = all_holo_partials(T.data, grid, anti=anti)
    if T.rank:
        gamma = np.conj(g.christoffel) if anti else g.christoffel
        acting_cov = Slot.COV_A if anti else Slot.COV_H
        acting_con = Slot.CON_A if anti else Slot.CON_H
        for j, slot in enumerate(T.slots):
            if slot is acting_cov:
                der = der - _contract_gamma(gamma, T, j, upper_free=False)
            elif slot is acting_con:
                der = der + _contract_gamma(gamma, T, j, upper_free=True)
    new_slot = Slot.COV_A if anti else Slot.COV_H
    return TensorField(grid, T.slots + (new_slot,), der)


def iterated_derivative(T: TensorField, g: KahlerMetric, kinds) -> TensorField:
    """Apply covariant derivatives in order; ``kinds`` is a sequence of 'h'/'a'."""
    out = T
    for kd in kinds:
        out = covariant_derivative(out, g, "holo" if kd == "h" else "antiholo")
    return out


def all_branch_kinds(k: int):
    """All length-k sequences of 'h'/'a' in deterministic order."""
    if k == 0:
        return [()]
    shorter = all_branch_kinds(k - 1)
    return [kinds + (c,) for kinds in shorter for c in ("h", "a")]


# ---------------------------------------------------------------------------
# pointwise and C^k norms


def _slot_weight(slot: Slot, g: KahlerMetric) -> np.ndarray:
    if slot is Slot.COV_H:
        return g.inverse
    if slot is Slot.COV_A:
        return np.conj(g.inverse)
    if slot is Slot.CON_H:
        return g.data
    return np.conj(g.data)


def pointwise_norm_sq_data(T: TensorField, g: KahlerMetric) -> np.ndarray:
    """|T|_g^2 as a real array: full metric contraction of every slot."""
    if T.rank == 0:
        raise InvalidDimensionError("use ScalarField for rank-0 data")
    dual = np.conj(T.data)
    for j, slot in enumerate(T.slots):
        w = _slot_weight(slot, g)
        moved = np.moveaxis(dual, j, 0)
        dual = np.moveaxis(np.einsum("ij...,j...->i...", w, moved), 0, j)
    comp_axes = tuple(range(T.rank))
    ns = np.sum(T.data * dual, axis=comp_axes).real
    return np.clip(ns, 0.0, None)


def pointwise_norm(T: TensorField, g: KahlerMetric) -> ScalarField:
    """|T|_g as a nonnegative real scalar field."""
    ns = pointwise_norm_sq_data(T, g)
    return ScalarField(T.grid, np.sqrt(ns).astype(np.complex128))


def scalar_norm_sq_data(f: ScalarField) -> np.ndarray:
    return (f.values * np.conj(f.values)).real


def derivative_norm_sq_fields(T, g: KahlerMetric, k: int) -> list[np.ndarray]:
    """[ |nabla^j T|^2 ]_{j=0..k} with all 2^j branches summed per order.

    ``T`` may be a ScalarField or TensorField.  Depth-first over the branch
    tree; memory stays at one branch path plus the accumulators.
    """
    grid = T.grid
    acc: list[np.ndarray | None] = [None] * (k + 1)

    def add(depth, arr):
        acc[depth] = arr if acc[depth] is None else acc[depth] + arr

    def visit(node: TensorField, depth: int):
        add(depth, pointwise_norm_sq_data(node, g))
        if depth < k:
            visit(covariant_derivative(node, g, "holo"), depth + 1)
            visit(covariant_derivative(node, g, "antiholo"), depth + 1)

    if isinstance(T, ScalarField):
        add(0, scalar_norm_sq_data(T))
        if k > 0:
            start = TensorField(
                grid, (Slot.COV_H,), all_holo_partials(T.values, grid, anti=False)
            )
            visit(start, 1)
            start_a = TensorField(
                grid, (Slot.COV_A,), all_holo_partials(T.values, grid, anti=True)
            )
            visit(start_a, 1)
    else:
        visit(T, 0)
    return [np.zeros(grid.spatial_shape) if a is None else a for a in acc]


def ck_norm(T, g: KahlerMetric, k: int, region: np.ndarray | None = None) -> float:
    """max over derivative orders j <= k of sup_region |nabla^{j,g} T|_g."""
    if k < 0:
        raise InvalidDimensionError("k must be nonnegative")
    fields = derivative_norm_sq_fields(T, g, k)
    sups = []
    for ns in fields:
        vals = ns[region] if region is not None else ns
        sups.append(sqrt(float(np.max(vals))) if vals.size else 0.0)
    return max(sups)


def ck_norm_profile(T, g: KahlerMetric, k: int, region: np.ndarray | None = None) -> list[float]:
    """Per-order sup norms [ sup |nabla^j T| ]_{j=0..k}."""
    fields = derivative_norm_sq_fields(T, g, k)
    out = []
    for ns in fields:
        vals = ns[region] if region is not None else ns
        out.append(sqrt(float(np.max(vals))) if vals.size else 0.0)
    return out


# ---------------------------------------------------------------------------
# curvature


@dataclass(frozen=True)
class CurvatureBundle:
    """Rm, Ric, scalar curvature and the (1,3) raised tensor of one metric."""

    rm: TensorField        # R_{i jbar k lbar}
    ric: TensorField       # Ric_{i jbar}
    scalar: ScalarField    # R
    rsharp: TensorField    # Rsharp_{i jbar k}^l


def _curvature_bundle(g: KahlerMetric) -> CurvatureBundle:
    grid = g.grid
    dg_h = g._dg_holo                                   # [k, l, a] = d_a g_{k lbar}
    dg_a = all_holo_partials(g.data, grid, anti=True)   # [k, l, b] = d_bbar g_{k lbar}
    dd = all_holo_partials(dg_h, grid, anti=True)       # [k, l, a, b] = d_bbar d_a g
    second = np.moveaxis(dd, (2, 3), (0, 1))            # [a, b, k, l] = d_a d_bbar g_{k lbar}
    quad = np.einsum("pq...,kqi...,plj...->ijkl...", g.inverse, dg_h, dg_a, optimize=True)
    rm_data = -second + quad
    rm = TensorField(grid, (Slot.COV_H, Slot.COV_A, Slot.COV_H, Slot.COV_A), rm_data)
    ric_data = np.einsum("kl...,ijkl...->ij...", g.inverse, rm_data)
    ric = TensorField(grid, METRIC_SLOTS, ric_data)
    scalar = ScalarField(grid, np.einsum("ij...,ij...->...", g.inverse, ric_data))
    rsharp_data = np.einsum("lq...,ijkq...->ijkl...", g.inverse, rm_data)
    rsharp = TensorField(
        grid, (Slot.COV_H, Slot.COV_A, Slot.COV_H, Slot.CON_H), rsharp_data
    )
    return CurvatureBundle(rm, ric, scalar, rsharp)


def curvature(g: KahlerMetric) -> CurvatureBundle:
    """Curvature tensors of a Kahler metric (cached on the metric)."""
    return g.curvature


# ---------------------------------------------------------------------------
# two-metric identities


def transition_tensor(g: KahlerMetric, g_ref: KahlerMetric) -> np.ndarray:
    """Psi[k, a, p] = Gamma(g)^k_{ap} - Gamma(g_ref)^k_{ap}.

    Equals g^{k lbar} nabla^{ref}_a g_{p lbar} identically, including at the
    discrete level, because both metrics share the same spectral derivative.
    """
    return g.christoffel - g_ref.christoffel


def _psi_correction(psi: np.ndarray, T: TensorField, anti: bool) -> np.ndarray:
    """Slot corrections turning nabla^{ghat} into nabla^{gtilde} on ``T``."""
    out = None
    gam = np.conj(psi) if anti else psi
    acting_cov = Slot.COV_A if anti else Slot.COV_H
    acting_con = Slot.CON_A if anti else Slot.CON_H
    for j, slot in enumerate(T.slots):
        if slot is acting_cov:
            term = -_contract_gamma(gam, T, j, upper_free=False)
        elif slot is acting_con:
            term = _contract_gamma(gam, T, j, upper_free=True)
        else:
            continue
        out = term if out is None else out + term
    if out is None:
        shape = T.data.shape[: T.rank] + (T.grid.dim,) + T.grid.spatial_shape
        out = np.zeros(shape, dtype=np.complex128)
    return out


def change_of_metric_expansion(
    alpha: TensorField,
    g_hat: KahlerMetric,
    g_tilde: KahlerMetric,
    kinds,
) -> TensorField:
    """nabla^{k, g_tilde} alpha assembled from g_hat derivatives only.

    Expands every tilde derivative as nabla^{hat} plus a contraction against
    the transition tensor Gamma(g_tilde) - Gamma(g_hat), recursively in the
    application order given by ``kinds`` ('h'/'a' entries).  Matches the
    directly iterated tilde derivative to spectral accuracy.
    """
    if not kinds:
        return alpha
    psi = transition_tensor(g_tilde, g_hat)
    out = alpha
    for kd in kinds:
        anti = kd == "a"
        der = covariant_derivative(out, g_hat, "antiholo" if anti else "holo")
        corr = _psi_correction(psi, out, anti)
        out = TensorField(der.grid, der.slots, der.data + corr)
    return out


def change_of_metric_residual(
    alpha: TensorField, g_hat: KahlerMetric, g_tilde: KahlerMetric, k: int
) -> float:
    """Max over branches of sup | expansion - direct tilde derivative |_{g_tilde}."""
    worst = 0.0
    for kinds in all_branch_kinds(k):
        direct = iterated_derivative(alpha, g_tilde, kinds)
        expanded = change_of_metric_expansion(alpha, g_hat, g_tilde, kinds)
        diff = direct - expanded
        worst = max(worst, pointwise_norm(diff, g_tilde).sup())
    return worst


@dataclass(frozen=True)
class CurvatureComparison:
    """Residual fields of the two curvature change-of-metric identities."""

    rm_residual: TensorField
    rsharp_residual: TensorField

    @property
    def rm_sup(self) -> float:
        return self.rm_residual.sup()

    @property
    def rsharp_sup(self) -> float:
        return self.rsharp_residual.sup()


def curvature_comparison(g: KahlerMetric, g_tilde: KahlerMetric) -> CurvatureComparison:
    """Evaluate both sides of the curvature comparison identities.

    Lower form:

        R(g)_{i jbar k lbar} = gt^{s vbar} g_{k vbar} R(gt)_{i jbar s lbar}
                               - nabla^t_i nabla^t_jbar g_{k lbar}
                               + g_{u vbar} Psi^u_{ik} conj(Psi^v_{jl})

    Raised form:

        Rsharp(g) = Rsharp(gt) - g^{l vbar} nabla^t_jbar nabla^t_i g_{k vbar}
                    + g^{l vbar} g_{s tbar} Psi^s_{ik} conj(Psi^t_{jv})

    with Psi = Gamma(g) - Gamma(g_tilde).  Returns both residuals (left minus
    right); their sup norms vanish to spectral accuracy.
    """
    grid = g.grid
    psi = transition_tensor(g, g_tilde)
    g_t = TensorField(grid, METRIC_SLOTS, g.data)

    rm_g = g.curvature.rm.data
    rm_t = g_tilde.curvature.rm.data

    term1 = np.einsum("sv...,kv...,ijsl...->ijkl...", g_tilde.inverse, g.data, rm_t, optimize=True)
    d_a = covariant_derivative(g_t, g_tilde, "antiholo")        # [k, l, j]
    d_ah = covariant_derivative(d_a, g_tilde, "holo")           # [k, l, j, i]
    hess_ij = np.moveaxis(d_ah.data, (3, 2), (0, 1))            # [i, j, k, l]
    term3 = np.einsum("uv...,uik...,vjl...->ijkl...", g.data, psi, np.conj(psi), optimize=True)
    rm_residual = TensorField(
        grid,
        (Slot.COV_H, Slot.COV_A, Slot.COV_H, Slot.COV_A),
        rm_g - (term1 - hess_ij + term3),
    )

    rs_g = g.curvature.rsharp.data
    rs_t = g_tilde.curvature.rsharp.data
    d_h = covariant_derivative(g_t, g_tilde, "holo")            # [k, v, i]
    d_ha = covariant_derivative(d_h, g_tilde, "antiholo")       # [k, v, i, j]
    hess_ji = np.moveaxis(d_ha.data, (2, 3), (0, 1))            # [i, j, k, v]
    term2s = np.einsum("lv...,ijkv...->ijkl...", g.inverse, hess_ji)
    term3s = np.einsum(
        "lv...,st...,sik...,tjv...->ijkl...", g.inverse, g.data, psi, np.conj(psi),
        optimize=True,
    )
    rsharp_residual = TensorField(
        grid,
        (Slot.COV_H, Slot.COV_A, Slot.COV_H, Slot.CON_H),
        rs_g - (rs_t - term2s + term3s),
    )
    return CurvatureComparison(rm_residual, rsharp_residual)


# ---------------------------------------------------------------------------
# product metrics and base pullback of their derivative jets


def _check_block_product(metric: KahlerMetric, m: int, tol: float = 1e-12):
    d = metric.grid.dim
    data = metric.data
    mixed = np.max(np.abs(data[:m, m:])) if m < d else 0.0
    mixed = max(mixed, np.max(np.abs(data[m:, :m])) if m < d else 0.0)
    if mixed > tol * max(metric.tensor.sup(), 1.0):
        raise NotProductError(f"metric has mixed base/fiber block {mixed:.2e}")


@dataclass(frozen=True)
class ProductPullbackReport:
    """Residuals and per-t norms for collapsing product-metric jets."""

    k: int
    residual: float                 # sup | jet(total) - pullback(jet(base)) |
    norms: dict                     # t -> sup |nabla^{k, gtilde(t)} ghat(t)|_{gtilde(t)}
    base_norm: float                # sup |nabla^{k, g2} g1|_{g2} on the base

    @property
    def norm_spread(self) -> float:
        vals = list(self.norms.values())
        top = max(vals)
        return 0.0 if top == 0 else (top - min(vals)) / top


def product_pullback_check(
    g1: KahlerMetric,
    g2: KahlerMetric,
    fiber_form: TensorField,
    ts,
    k: int,
) -> ProductPullbackReport:
    """Collapse-invariance of jets of one product metric in another.

    With ghat(t) = g1 + e^{-t} g_Y and gtilde(t) = g2 + e^{-t} g_Y on the
    product grid, the jet nabla^{k, gtilde(t)} ghat(t) equals the pullback of
    the base-only jet nabla^{k, g2} g1 for every t, and its gtilde(t)-norm is
    the g2-norm of the base jet, independent of t.

    ``g1``/``g2`` live on the base grid; ``fiber_form`` is the fiberwise
    Kahler form embedded in the total grid (fiber block only).
    """
    if k < 1:
        raise InvalidDimensionError("k must be >= 1")
    base_grid = g1.grid
    if base_grid.n != 0:
        raise InvalidDimensionError("g1, g2 must live on the base grid")
    total_grid = fiber_form.grid
    m = total_grid.m
    if np.max(np.abs(fiber_form.data[:m])) > 0 or np.max(np.abs(fiber_form.data[:, :m])) > 0:
        raise NotProductError("fiber form must have fiber-block components only")

    g1_total = pullback_tensor(g1.tensor, total_grid)
    g2_total = pullback_tensor(g2.tensor, total_grid)

    branches = all_branch_kinds(k)
    base_jets = {kinds: iterated_derivative(g1.tensor, g2, kinds) for kinds in branches}
    base_sq = None
    for jet in base_jets.values():
        sq = pointwise_norm_sq_data(jet, g2)
        base_sq = sq if base_sq is None else base_sq + sq
    base_norm = sqrt(float(np.max(base_sq)))

    residual = 0.0
    norms: dict[float, float] = {}
    for t in np.atleast_1d(ts):
        t = float(t)
        scale = float(np.exp(-t))
        ghat = KahlerMetric(
            TensorField(total_grid, METRIC_SLOTS, g1_total.data + scale * fiber_form.data),
            check=False,
        )
        gtilde = KahlerMetric(
            TensorField(total_grid, METRIC_SLOTS, g2_total.data + scale * fiber_form.data),
            check=False,
        )
        _check_block_product(ghat, m)
        _check_block_product(gtilde, m)
        norm_sq = None
        for kinds in branches:
            jet = iterated_derivative(ghat.tensor, gtilde, kinds)
            pulled = pullback_tensor(base_jets[kinds], total_grid)
            residual = max(residual, float(np.max(np.abs(jet.data - pulled.data))))
            sq = pointwise_norm_sq_data(jet, gtilde)
            norm_sq = sq if norm_sq is None else norm_sq + sq
        norms[t] = sqrt(float(np.max(norm_sq)))
    return ProductPullbackReport(k=k, residual=residual, norms=norms, base_norm=base_norm)
