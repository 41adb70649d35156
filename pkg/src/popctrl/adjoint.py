"""Backward solver for the adjoint cascade, built as the transpose of the forward step.

Each backward step scatters the age-0 traces ``(1 - gamma) n + gamma l`` of the
current slice into a distributed source on ``l`` (weights ``da * beta``), then
applies the heat step, the survival factor and the reverse age shift. The
row ``a = A`` comes out zero. The sourced female slice ``q`` is what pairs with
the female control; ``n`` pairs with the male control directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dst, idst

from .backend import kernels
from .core import ControlWindows, Grid, RateTable, control_masks, diffusion_step, inner, norm, survival_ratio
from .forward import Discretization, SolverError, Trajectory

ADJOINT_VARIANTS = ("cascade", "male-only", "female-only")


@dataclass
class AdjointProblem:
    rates: RateTable
    grid: Grid
    frozen_p: np.ndarray
    final_n: np.ndarray
    final_l: np.ndarray
    variant: str = "cascade"
    rho: float = 0.0
    windows: ControlWindows | None = None


@dataclass
class AdjointTrajectory:
    grid: Grid
    n: np.ndarray
    l: np.ndarray
    q: np.ndarray  # l plus the birth source; slice 0 copies l[0]

    @property
    def trace_n(self) -> np.ndarray:
        return self.n[:, :, 0].T

    @property
    def trace_l(self) -> np.ndarray:
        return self.l[:, :, 0].T

    def observed(self, mask_m, mask_f):
        """Adjoint restricted to the control masks for ``k >= 1`` (the control it generates)."""
        vm = self.n * mask_m
        vf = self.q * mask_f
        vm[0] = 0.0
        vf[0] = 0.0
        return vm, vf


def below_rho(grid: Grid, rho: float) -> np.ndarray:
    """Age rows strictly below the exclusion age ``rho``."""
    return grid.ages < rho - 1e-12 * grid.A


def solve_adjoint(problem: AdjointProblem, disc: Discretization | None = None) -> AdjointTrajectory:
    g = problem.grid
    if problem.variant not in ADJOINT_VARIANTS:
        raise ValueError(f"unknown adjoint variant {problem.variant!r}")
    disc = disc or Discretization(problem.rates, g)
    nT = np.array(problem.final_n, dtype=float)
    lT = np.array(problem.final_l, dtype=float)
    if problem.variant == "male-only":
        if np.any(nT[:, below_rho(g, problem.rho)] != 0.0):
            raise ValueError("male-only final datum must vanish on ages below rho")
        lT = np.zeros_like(lT)
    elif problem.variant == "female-only":
        nT = np.zeros_like(nT)
    kb = disc.kernels(problem.frozen_p)
    n, l, q = kernels.adjoint_march(nT, lT, kb, *disc.coeffs)
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(l))):
        raise SolverError("non-finite values in the adjoint march")
    return AdjointTrajectory(g, n, l, q)


# ---------------------------------------------------------------------------
# closed-form oracle along characteristics
# ---------------------------------------------------------------------------

def heat_semigroup(u, K: float, tau: float) -> np.ndarray:
    """Exact Dirichlet heat flow on (0, 1) applied to grid samples (sine series)."""
    u = np.asarray(u, dtype=float)
    nx = u.shape[0]
    if tau == 0.0 or K == 0.0:
        return u.copy()
    k = np.arange(1, nx + 1)
    decay = np.exp(-K * (np.pi * k) ** 2 * tau)
    c = dst(u, type=1, axis=0)
    return idst(c * decay.reshape((-1,) + (1,) * (u.ndim - 1)), type=1, axis=0)


def characteristic_oracle(rates: RateTable, grid: Grid, n_T, times, heat: str = "exact") -> list[np.ndarray]:
    """Male adjoint from its closed form along characteristics.

    ``n(t)(x, a) = pi(a + tau) / pi(a) * [e^{tau K Delta} n_T](x, a + tau)``
    with ``tau = T - t``, and zero once ``a + tau >= A``. ``heat="exact"`` uses
    the continuous heat semigroup; ``heat="discrete"`` repeats the implicit
    heat step (``tau`` must then be a multiple of ``dt``).
    """
    n_T = np.asarray(n_T, dtype=float)
    ages = grid.ages
    out = []
    for t in np.atleast_1d(times):
        tau = grid.T - float(t)
        if tau < -1e-12:
            raise ValueError("query time beyond the horizon")
        tau = max(tau, 0.0)
        shifted_a = ages + tau
        alive = shifted_a < grid.A - 1e-12 * grid.A
        src = np.zeros_like(n_T)
        # age interpolation of n_T at a + tau (exact row shift when tau is a multiple of da)
        pos = shifted_a[alive] / grid.da
        lo = np.minimum(np.floor(pos + 1e-9).astype(int), grid.Na)
        frac = np.clip(pos - lo, 0.0, None)
        frac[frac < 1e-9] = 0.0  # whole-row shifts stay exact
        hi = np.minimum(lo + 1, grid.Na)
        src[:, alive] = n_T[:, lo] * (1.0 - frac) + n_T[:, hi] * frac
        ratio = np.zeros(grid.Na + 1)
        ratio[alive] = survival_ratio(rates, "m", ages[alive], np.full(alive.sum(), tau))
        src *= ratio
        if heat == "exact":
            val = heat_semigroup(src, rates.K_m, tau)
        elif heat == "discrete":
            steps = int(round(tau / grid.dt))
            if abs(steps * grid.dt - tau) > 1e-9:
                raise ValueError("discrete heat needs tau to be a multiple of dt")
            val = src
            for _ in range(steps):
                val = diffusion_step(val, rates.K_m, grid.dt)
        else:
            raise ValueError(f"unknown heat mode {heat!r}")
        val[:, ~alive] = 0.0
        out.append(val)
    return out


# ---------------------------------------------------------------------------
# discrete Green identity
# ---------------------------------------------------------------------------

def duality_terms(fwd: Trajectory, control_m, control_f, adj: AdjointTrajectory):
    """The six pairings of the discrete Green identity and a Cauchy-Schwarz scale."""
    g = fwd.grid
    if adj.grid != g:
        raise ValueError("forward and adjoint runs live on different grids")
    vm = np.zeros(g.traj_shape) if control_m is None else np.asarray(control_m)
    vf = np.zeros(g.traj_shape) if control_f is None else np.asarray(control_f)
    dt = g.dt
    terms = {
        "final_m": inner(fwd.m[-1], adj.n[-1], g),
        "final_f": inner(fwd.f[-1], adj.l[-1], g),
        "initial_m": inner(fwd.m[0], adj.n[0], g),
        "initial_f": inner(fwd.f[0], adj.l[0], g),
        "control_m": dt * inner(vm[1:], adj.n[1:], g),
        "control_f": dt * inner(vf[1:], adj.q[1:], g),
    }
    scale = (
        norm(fwd.m[-1], g) * norm(adj.n[-1], g)
        + norm(fwd.f[-1], g) * norm(adj.l[-1], g)
        + norm(fwd.m[0], g) * norm(adj.n[0], g)
        + norm(fwd.f[0], g) * norm(adj.l[0], g)
        + dt * norm(vm[1:], g) * norm(adj.n[1:], g)
        + dt * norm(vf[1:], g) * norm(adj.q[1:], g)
    )
    return terms, scale


def duality_gap(fwd: Trajectory, control_m, control_f, adj: AdjointTrajectory, relative: bool = False) -> float:
    """``|<m(T),n_T> + <f(T),l_T> - <m0,n(0)> - <f0,l(0)> - <v_m,n> - <v_f,q>|``."""
    t, scale = duality_terms(fwd, control_m, control_f, adj)
    gap = abs(t["final_m"] + t["final_f"] - t["initial_m"] - t["initial_f"] - t["control_m"] - t["control_f"])
    if relative:
        return gap / scale if scale > 0 else 0.0
    return gap


def masks_for(grid: Grid, windows: ControlWindows):
    """Space-age control masks broadcast over time (slice 0 excluded)."""
    mm, mf = control_masks(grid, windows)
    tm = np.ones(grid.Nt + 1, dtype=bool)
    tm[0] = False
    return tm[:, None, None] & mm[None], tm[:, None, None] & mf[None]
