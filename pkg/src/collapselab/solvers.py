"""Newton and time-stepping solvers for the Monge-Ampere equations.

All equations are posed in determinant units: a prescribed top form is stored
as the real density rho with  omega^d = d! 2^d rho (Lebesgue), so that

    (omega_ref + i d dbar phi)^d = rho_target  <=>  det(g_ref + Hess phi) = rho.

Newton steps solve the linearization  Delta_g delta = -(residual), with the
scalar Laplacian in the current metric, through GMRES preconditioned by the
Fourier symbol of the spatially averaged inverse metric.  The averaged symbol
captures the e^t stiffening of collapsing fiber directions, which keeps the
iteration count flat along degenerating families.

The collapsing flow integrates

    d phi / dt = log[ e^{n_eff t} det(ghat(t) + Hess phi) / Omega ] - phi

with ghat(t) = e^{-t} g_0 + (1 - e^{-t}) chi, by the implicit trapezoid rule
with Newton-Krylov inner solves.  An explicit stepper is hopeless here: the
linearized operator is Delta_g - 1 and the fiber block of g^{-1} grows like
e^t, so any explicit scheme needs dt ~ e^{-t}; the A-stable trapezoid rule
keeps dt fixed and second-order accurate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _fft
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (
    IncompatibleRhsError,
    InvalidDimensionError,
    KrylovStagnationError,
    NewtonDivergedError,
    PositivityLostError,
    StepOverflowError,
)
from .grid import (
    PeriodicGrid,
    ScalarField,
    complex_hessian_data,
    integrate_data,
    project_band_data,
)
from .metric import KahlerMetric, ddbar
from .tensors import METRIC_SLOTS, TensorField

MASS_MISMATCH_TOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Newton/linear/flow tolerances and step sizes."""

    newton_tol: float = 1e-11
    max_newton_iters: int = 30
    linear_tol: float = 1e-12
    linear_maxiter: int = 600
    damping: float = 1.0
    dt: float = 0.01
    t_end: float = 10.0
    max_flow_steps: int = 200_000

    def __post_init__(self):
        if min(self.newton_tol, self.linear_tol, self.dt, self.t_end) <= 0:
            raise InvalidDimensionError("solver tolerances and steps must be positive")
        if not 0 < self.damping <= 1:
            raise InvalidDimensionError("damping must lie in (0, 1]")
        if self.max_newton_iters < 1 or self.linear_maxiter < 1:
            raise InvalidDimensionError("iteration budgets must be positive")


@dataclass
class SolveResult:
    """Converged potential plus the Newton residual trail."""

    phi: ScalarField
    residual_history: list[float]
    iterations: int
    converged: bool

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_history": self.residual_history,
        }


# ---------------------------------------------------------------------------
# Fourier-symbol preconditioning


def _laplace_symbol(grid: PeriodicGrid, inv_mean: np.ndarray) -> np.ndarray:
    """Fourier symbol of  gbar^{i jbar} d_i d_jbar  for a constant inverse metric."""
    d = grid.dim
    symbol = np.zeros(grid.spatial_shape, dtype=np.complex128)
    for i in range(d):
        rei, imi = grid.complex_axes(i)
        mu = 0.5j * (grid.wavenumbers(rei) - 1j * grid.wavenumbers(imi))
        for j in range(d):
            rej, imj = grid.complex_axes(j)
            nu = 0.5j * (grid.wavenumbers(rej) + 1j * grid.wavenumbers(imj))
            symbol = symbol + inv_mean[i, j] * mu * nu
    return symbol.real.astype(float)


def _symbol_preconditioner(grid: PeriodicGrid, symbol: np.ndarray):
    """x -> F^{-1}[ F x / symbol ].

    Modes where the symbol vanishes (the mean and pure-Nyquist modes, whose
    derivative wavenumbers are zeroed) are passed through unchanged.
    """
    sym = symbol.copy()
    sym[sym == 0.0] = 1.0

    def apply(vec: np.ndarray) -> np.ndarray:
        x = vec.reshape(grid.spatial_shape)
        out = _fft.ifftn(_fft.fftn(x) / sym).real
        return out.reshape(-1)

    return apply


def _mean_inverse(g: KahlerMetric) -> np.ndarray:
    axes = tuple(range(2, 2 + g.grid.real_dim))
    return g.inverse.mean(axis=axes)


def apply_laplacian_data(
    vals: np.ndarray, g: KahlerMetric, project: bool = False
) -> np.ndarray:
    hess = complex_hessian_data(vals, g.grid, project=project)
    return np.einsum("ij...,ij...->...", g.inverse, hess)


def linearized_ma_solve(
    g_current: KahlerMetric,
    rhs: ScalarField,
    cfg: SolverConfig,
    shift: float = 0.0,
) -> ScalarField:
    """Solve (Delta_g - shift) delta = rhs on the torus.

    With shift = 0 the equation is solvable only for right-hand sides with
    zero det(g)-weighted mean; the solution is returned with zero plain mean.
    GMRES is preconditioned by the averaged-metric Fourier symbol.
    """
    grid = g_current.grid
    vals = rhs.values.real.astype(float)
    weight = g_current.det
    wmean = float(np.mean(vals * weight) / np.mean(weight))
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if shift == 0.0:
        if abs(wmean) > 1e-10 * scale:
            raise IncompatibleRhsError(
                f"rhs violates the weighted-mean solvability condition "
                f"({wmean:.2e} vs scale {scale:.2e})"
            )
        # The discrete operator annihilates the degenerate (derivative-free)
        # modes, so the equation is solved on their complement; the dropped
        # content is quadrature-level noise by the compatibility check above.
        vals = project_band_data(vals, grid).real

    n_dof = grid.num_points

    def matvec(x: np.ndarray) -> np.ndarray:
        f = x.reshape(grid.spatial_shape)
        if shift == 0.0:
            lap = apply_laplacian_data(f, g_current, project=True).real
            keep = f - project_band_data(f, grid).real
            return (lap + keep).reshape(-1)
        lap = apply_laplacian_data(f, g_current).real
        return (lap - shift * f).reshape(-1)

    symbol = _laplace_symbol(grid, _mean_inverse(g_current)) - shift
    prec = _symbol_preconditioner(grid, symbol)

    op = LinearOperator((n_dof, n_dof), matvec=matvec, dtype=float)
    m_op = LinearOperator((n_dof, n_dof), matvec=prec, dtype=float)
    b = vals.reshape(-1)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return ScalarField(grid, np.zeros(grid.spatial_shape, dtype=np.complex128))
    sol, info = gmres(
        op, b, M=m_op, rtol=cfg.linear_tol, atol=0.0,
        restart=60, maxiter=cfg.linear_maxiter,
    )
    if info != 0:
        raise KrylovStagnationError(f"GMRES failed to converge (info={info})")
    out = sol.reshape(grid.spatial_shape)
    out = out - out.mean()
    return ScalarField(grid, out.astype(np.complex128))


# ---------------------------------------------------------------------------
# Monge-Ampere Newton solves


def _positive_metric(base: TensorField, phi_vals: np.ndarray):
    """g_ref + Hess(phi) wrapped without checks, or None if not positive."""
    grid = base.grid
    phi = ScalarField(grid, phi_vals.astype(np.complex128))
    tensor = base + ddbar(phi)
    g = KahlerMetric(tensor, check=False)
    mat = g.matrix
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None
    return g


def _check_mass(rho: np.ndarray, target_mass: float, grid: PeriodicGrid) -> np.ndarray:
    mass = integrate_data(rho, grid).real
    rel = abs(mass - target_mass) / abs(target_mass)
    if rel > MASS_MISMATCH_TOL:
        raise IncompatibleRhsError(
            f"prescribed density mass off by relative {rel:.2e}"
        )
    return rho * (target_mass / mass)


def _weighted_mean(vals: np.ndarray, weight: np.ndarray) -> float:
    return float(np.mean(vals * weight) / np.mean(weight))


def _ma_newton(
    ref: TensorField,
    log_rho: np.ndarray,
    cfg: SolverConfig,
    gauge: str,
) -> tuple[np.ndarray, list[float], int]:
    """Shared Newton loop for  det(g_ref + Hess phi) = rho [* e^phi].

    ``gauge`` selects the equation: "projected" solves the compatible equation
    modulo constants (linearization Delta); "exponential" solves the version
    with the e^phi factor (linearization Delta - 1, no projection).
    """
    grid = ref.grid
    phi = np.zeros(grid.spatial_shape)
    history: list[float] = []
    g = _positive_metric(ref, phi)
    if g is None:
        raise PositivityLostError("reference form is not positive definite")

    for it in range(cfg.max_newton_iters + 1):
        r = np.log(g.det) - log_rho
        if gauge == "exponential":
            r = r - phi
            resid = float(np.max(np.abs(r)))
        else:
            c = _weighted_mean(r, g.det)
            r = r - c
            resid = float(np.max(np.abs(r)))
        history.append(resid)
        if resid <= cfg.newton_tol:
            return phi, history, it
        if it == cfg.max_newton_iters:
            raise NewtonDivergedError(
                f"Newton did not reach {cfg.newton_tol:.1e} in {it} iterations "
                f"(residual {resid:.2e})"
            )
        shift = 1.0 if gauge == "exponential" else 0.0
        delta = linearized_ma_solve(
            g, ScalarField(grid, (-r).astype(np.complex128)), cfg, shift=shift
        ).values.real

        alpha = cfg.damping
        accepted = False
        for _ in range(30):
            cand = phi + alpha * delta
            g_cand = _positive_metric(ref, cand)
            if g_cand is not None:
                r_new = np.log(g_cand.det) - log_rho
                if gauge == "exponential":
                    r_new = r_new - cand
                else:
                    r_new = r_new - _weighted_mean(r_new, g_cand.det)
                if float(np.max(np.abs(r_new))) < resid or resid < 1e2 * cfg.newton_tol:
                    phi, g = cand, g_cand
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise PositivityLostError(
                "line search could not keep the iterate positive and decreasing"
            )
    raise NewtonDivergedError("unreachable")


def solve_cy(
    omega_ref: KahlerMetric,
    rhs_density: ScalarField,
    normalizer: KahlerMetric,
    cfg: SolverConfig,
) -> SolveResult:
    """Solve (omega_ref + i d dbar phi)^d = prescribed top density.

    The density is given in determinant units and must carry the total mass of
    the reference class to within 1e-8 (small quadrature drift is rescaled
    away).  The returned potential has zero mean against the normalizer's
    volume density, and the final metric is positive everywhere.
    """
    grid = omega_ref.grid
    rho = rhs_density.values.real
    if np.any(rho <= 0):
        raise IncompatibleRhsError("prescribed density must be positive")
    target = integrate_data(omega_ref.det, grid).real
    rho = _check_mass(rho, target, grid)

    phi, history, iters = _ma_newton(omega_ref.tensor, np.log(rho), cfg, "projected")
    weight = normalizer.det
    phi = phi - _weighted_mean(phi, weight)
    return SolveResult(
        phi=ScalarField(grid, phi.astype(np.complex128)),
        residual_history=history,
        iterations=iters,
        converged=True,
    )


@dataclass(frozen=True)
class BaseCYConstants:
    """Mass ratio and normalization weight of the collapsed base equation."""

    mass_ratio: float
    normalizer_density: np.ndarray | None = None


def solve_base_cy(
    chi_base: KahlerMetric,
    f_density: ScalarField,
    constants: BaseCYConstants,
    cfg: SolverConfig,
) -> SolveResult:
    """Solve (chi + i d dbar v)^m = mass_ratio * F * chi^m on the base torus."""
    grid = chi_base.grid
    rho = constants.mass_ratio * f_density.values.real * chi_base.det
    if np.any(rho <= 0):
        raise IncompatibleRhsError("collapsed density must be positive")
    target = integrate_data(chi_base.det, grid).real
    rho = _check_mass(rho, target, grid)

    v, history, iters = _ma_newton(chi_base.tensor, np.log(rho), cfg, "projected")
    weight = (
        constants.normalizer_density
        if constants.normalizer_density is not None
        else chi_base.det
    )
    v = v - _weighted_mean(v, weight)
    return SolveResult(
        phi=ScalarField(grid, v.astype(np.complex128)),
        residual_history=history,
        iterations=iters,
        converged=True,
    )


def solve_base_gke(
    chi_base: KahlerMetric,
    f_density: ScalarField,
    cfg: SolverConfig,
) -> SolveResult:
    """Solve (chi + i d dbar v)^m = F e^v chi^m; the e^v factor fixes the constant."""
    grid = chi_base.grid
    f_vals = f_density.values.real
    if np.any(f_vals <= 0):
        raise IncompatibleRhsError("F must be positive")
    log_rho = np.log(f_vals * chi_base.det)
    v, history, iters = _ma_newton(chi_base.tensor, log_rho, cfg, "exponential")
    return SolveResult(
        phi=ScalarField(grid, v.astype(np.complex128)),
        residual_history=history,
        iterations=iters,
        converged=True,
    )


# ---------------------------------------------------------------------------
# the collapsing potential flow


@dataclass
class FlowSample:
    t: float
    phi: np.ndarray
    phi_dot: np.ndarray


@dataclass
class FlowResult:
    """Stored (t, phi, phi_dot) trajectory of the potential flow."""

    samples: list[FlowSample]
    n_eff: int
    steps: int
    rejected_steps: int

    def sample_at(self, t: float, tol: float = 1e-9) -> FlowSample:
        for s in self.samples:
            if abs(s.t - t) <= tol:
                return s
        raise KeyError(f"no stored sample at t={t}")

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.samples]


class _FlowProblem:
    def __init__(self, omega0: KahlerMetric, omega_det: np.ndarray,
                 chi: TensorField | None, n_eff: int):
        self.grid = omega0.grid
        self.g0 = omega0.tensor.data
        self.chi = None if chi is None else chi.data
        self.log_omega = np.log(omega_det)
        self.n_eff = n_eff

    def reference_data(self, t: float) -> np.ndarray:
        s = np.exp(-t)
        if self.chi is None:
            return s * self.g0
        return s * self.g0 + (1.0 - s) * self.chi

    def metric(self, phi: np.ndarray, t: float) -> KahlerMetric | None:
        base = TensorField(self.grid, METRIC_SLOTS, self.reference_data(t))
        return _positive_metric(base, phi)

    def rhs(self, phi: np.ndarray, t: float, g: KahlerMetric) -> np.ndarray:
        return np.log(g.det) + self.n_eff * t - self.log_omega - phi


def flow_velocity(
    problem_phi: np.ndarray,
    t: float,
    omega0: KahlerMetric,
    omega_density: ScalarField,
    chi: TensorField | None,
    n_eff: int,
) -> np.ndarray:
    """d phi/dt of the potential flow at one state (diagnostic helper)."""
    prob = _FlowProblem(omega0, omega_density.values.real, chi, n_eff)
    g = prob.metric(problem_phi, t)
    if g is None:
        raise PositivityLostError("state is outside the positive cone")
    return prob.rhs(problem_phi, t, g)


def _implicit_step(
    prob: _FlowProblem,
    phi: np.ndarray,
    f_now: np.ndarray,
    t: float,
    dt: float,
    cfg: SolverConfig,
) -> tuple[np.ndarray, np.ndarray] | None:
    """One trapezoid step; returns (phi_next, f_next) or None on failure."""
    grid = prob.grid
    t_next = t + dt
    b = phi + 0.5 * dt * f_now
    x = phi + dt * f_now  # explicit predictor
    for _ in range(12):
        g = prob.metric(x, t_next)
        if g is None:
            return None
        f_x = prob.rhs(x, t_next, g)
        res = x - 0.5 * dt * f_x - b
        rnorm = float(np.max(np.abs(res)))
        if rnorm <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
            return x, f_x

        half = 0.5 * dt
        symbol = (1.0 + half) - half * _laplace_symbol(grid, _mean_inverse(g))
        prec = _symbol_preconditioner(grid, symbol)

        def matvec(vec: np.ndarray) -> np.ndarray:
            fvec = vec.reshape(grid.spatial_shape)
            lap = apply_laplacian_data(fvec, g).real
            return ((1.0 + half) * fvec - half * lap).reshape(-1)

        n_dof = grid.num_points
        op = LinearOperator((n_dof, n_dof), matvec=matvec, dtype=float)
        m_op = LinearOperator(
            (n_dof, n_dof),
            matvec=prec,
            dtype=float,
        )
        sol, info = gmres(
            op, (-res).reshape(-1), M=m_op, rtol=1e-12, atol=0.0,
            restart=60, maxiter=cfg.linear_maxiter,
        )
        if info != 0:
            return None
        x = x + sol.reshape(grid.spatial_shape)
    return None


def run_flow(
    omega0: KahlerMetric,
    omega_density: ScalarField,
    chi: TensorField | None,
    cfg: SolverConfig,
    sample_times=None,
    base_dim: int | None = None,
) -> FlowResult:
    """Integrate the collapsing potential flow from phi(0) = 0.

    ``omega_density`` is the prescribed volume density in determinant units;
    ``chi`` the pulled-back base form (None or zero means total collapse, in
    which case the rate exponent is the full dimension).  Samples are stored
    at ``sample_times`` (defaults to every unit time up to t_end).  Steps that
    lose positivity or stall the inner Newton are retried with dt halved, up
    to ten halvings; dt regrows after twenty clean steps.
    """
    grid = omega0.grid
    if chi is not None and np.max(np.abs(chi.data)) == 0.0:
        chi = None
    if base_dim is None:
        base_dim = 0 if chi is None else grid.m
    n_eff = grid.dim - base_dim
    omega_vals = omega_density.values.real
    if np.any(omega_vals <= 0):
        raise IncompatibleRhsError("volume density must be positive")
    prob = _FlowProblem(omega0, omega_vals, chi, n_eff)

    if sample_times is None:
        sample_times = [float(k) for k in range(int(np.floor(cfg.t_end)) + 1)]
    sample_times = sorted(set(round(float(s), 12) for s in sample_times))
    if sample_times and sample_times[-1] > cfg.t_end + 1e-12:
        raise InvalidDimensionError("sample times exceed t_end")

    t = 0.0
    phi = np.zeros(grid.spatial_shape)
    g = prob.metric(phi, 0.0)
    if g is None:
        raise PositivityLostError("initial metric is not positive")
    f_now = prob.rhs(phi, 0.0, g)

    samples: list[FlowSample] = []
    pending = list(sample_times)
    if pending and abs(pending[0] - 0.0) <= 1e-12:
        samples.append(FlowSample(0.0, phi.copy(), f_now.copy()))
        pending.pop(0)

    dt_base = cfg.dt
    dt = dt_base
    clean = 0
    steps = 0
    rejected = 0
    while t < cfg.t_end - 1e-12:
        if steps >= cfg.max_flow_steps:
            raise StepOverflowError(f"exceeded {cfg.max_flow_steps} flow steps")
        target = pending[0] if pending else cfg.t_end
        step = min(dt, target - t, cfg.t_end - t)
        result = None
        halvings = 0
        while result is None:
            result = _implicit_step(prob, phi, f_now, t, step, cfg)
            if result is None:
                halvings += 1
                rejected += 1
                if halvings > 10:
                    raise PositivityLostError(
                        f"flow step at t={t:.4f} failed after 10 halvings"
                    )
                step *= 0.5
                dt = min(dt, step)
                clean = 0
        phi, f_now = result
        t = t + step
        steps += 1
        clean += 1
        if clean >= 20 and dt < dt_base:
            dt = min(dt_base, 2.0 * dt)
            clean = 0
        if pending and t >= pending[0] - 1e-12:
            samples.append(FlowSample(round(t, 12), phi.copy(), f_now.copy()))
            pending.pop(0)
    return FlowResult(samples=samples, n_eff=n_eff, steps=steps, rejected_steps=rejected)
