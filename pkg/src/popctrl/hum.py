"""Penalized HUM: control synthesis through a Krylov solve on the adjoint final data.

For a frozen profile ``p`` the map ``phi = (n_T, l_T) -> (m~(T), f~(T))`` runs
the adjoint backward from ``phi`` and the forward system from zero data driven
by the observed adjoint ``(chi n, chi' q)``. Adding the penalty gives

    G(phi) = P (m~(T), f~(T)) + (eps n_T, theta l_T),

symmetric and coercive under the ``dx da`` inner product. Solving
``G(phi) = -P (m^(T), f^(T))`` (the free final state) yields the minimizer:
controls ``(chi n, chi' q)`` and final state ``P m(T) = -eps n_T``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .core import VARIANTS, ControlWindows, Grid, RateTable, control_masks, inner, norm
from .forward import Discretization, SolverError, Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HUMConfig:
    epsilon: float = 1e-6
    theta: float = 1e-6
    cg_tol: float = 1e-8
    cg_max_iters: int = 500
    variant: str = "both-sexes"
    rho: float = 0.0
    method: str = "cr"  # "cr" (conjugate residual, monotone residual) or "cg"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.variant == "both-sexes" and not self.theta > 0:
            raise ValueError("theta must be positive")
        if not 0.0 < self.cg_tol < 1.0:
            raise ValueError("cg_tol must lie in (0, 1)")
        if self.cg_max_iters < 1:
            raise ValueError("cg_max_iters must be positive")
        if self.variant == "male-only" and not self.rho > 0:
            raise ValueError("male-only synthesis needs rho > 0")
        if self.method not in ("cr", "cg"):
            raise ValueError(f"unknown Krylov method {self.method!r}")


@dataclass
class HUMResult:
    control_m: np.ndarray
    control_f: np.ndarray
    trajectory: Trajectory
    final_n: np.ndarray
    final_l: np.ndarray
    final_norm_m: float  # on the targeted rows
    final_norm_f: float
    initial_norm_m: float
    initial_norm_f: float
    optimality_m: float  # ||P m(T) + eps n_T||
    optimality_f: float
    control_energy: float
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = True

    def summary(self) -> dict:
        return {
            "final_norm_m": self.final_norm_m,
            "final_norm_f": self.final_norm_f,
            "initial_norm_m": self.initial_norm_m,
            "initial_norm_f": self.initial_norm_f,
            "optimality_m": self.optimality_m,
            "optimality_f": self.optimality_f,
            "control_energy": self.control_energy,
            "cg_iterations": self.iterations,
            "cg_converged": self.converged,
        }


def target_masks(grid: Grid, cfg: HUMConfig):
    """Rows of the final state that are penalized, per sex."""
    ones = np.ones(grid.field_shape, dtype=bool)
    none = np.zeros(grid.field_shape, dtype=bool)
    if cfg.variant == "both-sexes":
        return ones, ones
    if cfg.variant == "male-only":
        tm = np.broadcast_to(grid.ages >= cfg.rho - 1e-12 * grid.A, grid.field_shape).copy()
        return tm, none
    return none, ones


class ControlOperator:
    """Frozen-profile forward/adjoint pair with cached birth kernels and masks."""

    def __init__(self, rates: RateTable, grid: Grid, windows: ControlWindows, p, cfg: HUMConfig):
        if windows.variant != cfg.variant:
            windows = ControlWindows(windows.omega, windows.omega_prime, windows.age_m, windows.age_f,
                                     cfg.variant, cfg.rho)
        self.rates, self.grid, self.windows, self.cfg = rates, grid, windows, cfg
        self.disc = Discretization(rates, grid)
        self.p = np.array(np.broadcast_to(np.asarray(p, dtype=float), (grid.Nx, grid.Nt + 1)))
        self.kb = self.disc.kernels(self.p)
        mm, mf = control_masks(grid, windows)
        self.mask_m = mm.astype(float)
        self.mask_f = mf.astype(float)
        tm, tf = target_masks(grid, cfg)
        self.target_m = tm.astype(float)
        self.target_f = tf.astype(float)
        self.pen_m = cfg.epsilon
        self.pen_f = cfg.epsilon if cfg.variant == "female-only" else cfg.theta
        self.applications = 0

    # -- building blocks -----------------------------------------------------
    def adjoint(self, nT, lT):
        n, l, q = kernels.adjoint_march(np.ascontiguousarray(nT), np.ascontiguousarray(lT),
                                        self.kb, *self.disc.coeffs)
        return n, l, q

    def controls_from(self, n, q):
        vm = n * self.mask_m
        vf = q * self.mask_f
        vm[0] = 0.0
        vf[0] = 0.0
        return vm, vf

    def forward(self, m0, f0, vm=None, vf=None):
        dt = self.grid.dt
        src_m = None if vm is None else np.ascontiguousarray(dt * vm)
        src_f = None if vf is None else np.ascontiguousarray(dt * vf)
        m, f, births = kernels.forward_march(np.ascontiguousarray(m0, dtype=float),
                                             np.ascontiguousarray(f0, dtype=float),
                                             src_m, src_f, self.kb, *self.disc.coeffs)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(f))):
            raise SolverError("non-finite values in the frozen forward march")
        return m, f, births

    def project(self, phi):
        nT, lT = phi
        return nT * self.target_m, lT * self.target_f

    # -- Gram operator ---------------------------------------------------------
    def gram(self, phi):
        nT, lT = self.project(phi)
        self.applications += 1
        n, _, q = self.adjoint(nT, lT)
        vm, vf = self.controls_from(n, q)
        z = np.zeros(self.grid.field_shape)
        m, f, _ = self.forward(z, z, vm, vf)
        return (m[-1] * self.target_m + self.pen_m * nT,
                f[-1] * self.target_f + self.pen_f * lT)

    def dot(self, a, b) -> float:
        return inner(a[0], b[0], self.grid) + inner(a[1], b[1], self.grid)


def gram_apply(rates: RateTable, grid: Grid, windows: ControlWindows, p, phi, cfg: HUMConfig | None = None):
    """One application of the penalized Gram operator at the frozen profile ``p``."""
    cfg = cfg or HUMConfig(variant=windows.variant, rho=windows.rho)
    return ControlOperator(rates, grid, windows, p, cfg).gram(phi)


# ---------------------------------------------------------------------------
# Krylov solver
# ---------------------------------------------------------------------------

def _axpy(a, x, y):
    return (y[0] + a * x[0], y[1] + a * x[1])


def krylov_solve(apply, dot, b, x0, tol: float, max_iters: int, method: str = "cr"):
    """Conjugate residual / conjugate gradient for a symmetric positive definite operator.

    Returns ``(x, iterations, history, converged)`` where ``history`` holds the
    relative residual ``||b - G x|| / ||b||`` starting at iteration 0. CR
    minimizes the residual norm over the Krylov space, so its history is
    nonincreasing; CG minimizes the energy error instead.
    """
    bnorm = np.sqrt(dot(b, b))
    x = x0
    r = _axpy(-1.0, apply(x), b)
    rn = np.sqrt(dot(r, r)) / bnorm
    history = [float(rn)]
    if rn <= tol:
        return x, 0, history, True
    best = (rn, x)
    p = r
    if method == "cr":
        Ar = apply(r)
        Ap = Ar
        rAr = dot(r, Ar)
        for it in range(1, max_iters + 1):
            alpha = rAr / dot(Ap, Ap)
            x = _axpy(alpha, p, x)
            r = _axpy(-alpha, Ap, r)
            rn = np.sqrt(dot(r, r)) / bnorm
            history.append(float(rn))
            if rn < best[0]:
                best = (rn, x)
            if rn <= tol:
                return x, it, history, True
            Ar = apply(r)
            rAr_new = dot(r, Ar)
            beta = rAr_new / rAr
            rAr = rAr_new
            p = _axpy(beta, p, r)
            Ap = _axpy(beta, Ap, Ar)
    else:
        rr = dot(r, r)
        for it in range(1, max_iters + 1):
            Ap = apply(p)
            alpha = rr / dot(p, Ap)
            x = _axpy(alpha, p, x)
            r = _axpy(-alpha, Ap, r)
            rr_new = dot(r, r)
            rn = np.sqrt(rr_new) / bnorm
            history.append(float(rn))
            if rn < best[0]:
                best = (rn, x)
            if rn <= tol:
                return x, it, history, True
            p = _axpy(rr_new / rr, p, r)
            rr = rr_new
    log.warning("Krylov solve stopped after %d iterations at residual %.3e", max_iters, best[0])
    return best[1], max_iters, history, False


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def _synthesize(op: ControlOperator, m0, f0) -> HUMResult:
    g = op.grid
    cfg = op.cfg
    m0 = np.asarray(m0, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    zero = np.zeros(g.field_shape)
    m_free, f_free, _ = op.forward(m0, f0)
    b = (-m_free[-1] * op.target_m, -f_free[-1] * op.target_f)
    if op.dot(b, b) == 0.0:
        phi, iters, hist, conv = (zero, zero.copy()), 0, [0.0], True
    else:
        phi, iters, hist, conv = krylov_solve(op.gram, op.dot, b, (zero, zero.copy()),
                                              cfg.cg_tol, cfg.cg_max_iters, cfg.method)
    nT, lT = op.project(phi)
    n, _, q = op.adjoint(nT, lT)
    vm, vf = op.controls_from(n, q)
    m, f, births = op.forward(m0, f0, vm, vf)
    M = op.disc.male_integral(m).T
    traj = Trajectory(g, m, f, births, M, op.p)
    mT = m[-1] * op.target_m
    fT = f[-1] * op.target_f
    return HUMResult(
        control_m=vm,
        control_f=vf,
        trajectory=traj,
        final_n=nT,
        final_l=lT,
        final_norm_m=norm(mT, g),
        final_norm_f=norm(fT, g),
        initial_norm_m=norm(m0, g),
        initial_norm_f=norm(f0, g),
        optimality_m=norm(mT + op.pen_m * nT, g),
        optimality_f=norm(fT + op.pen_f * lT, g),
        control_energy=g.dt * (inner(vm, vm, g) + inner(vf, vf, g)),
        iterations=iters,
        residual_history=hist,
        converged=conv,
    )


def synthesize(rates: RateTable, grid: Grid, windows: ControlWindows, p, initial, cfg: HUMConfig) -> HUMResult:
    """Penalized HUM for the variant named in ``cfg``; ``initial = (m0, f0)``."""
    m0, f0 = initial
    return _synthesize(ControlOperator(rates, grid, windows, p, cfg), m0, f0)


def synthesize_male_only(rates, grid, windows, p, initial, cfg: HUMConfig) -> HUMResult:
    if cfg.variant != "male-only":
        raise ValueError("synthesize_male_only needs cfg.variant == 'male-only'")
    return synthesize(rates, grid, windows, p, initial, cfg)


def synthesize_female_only(rates, grid, windows, p, f0, cfg: HUMConfig) -> HUMResult:
    """Scalar female system driven by ``f0`` alone (no male data, no male control)."""
    if cfg.variant != "female-only":
        raise ValueError("synthesize_female_only needs cfg.variant == 'female-only'")
    return synthesize(rates, grid, windows, p, (np.zeros(grid.field_shape), f0), cfg)
