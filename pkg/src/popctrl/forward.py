"""Forward marching for the frozen-rate system and the fully nonlinear system.

One step advances age and time together by ``dt = da``: shift every age row
up by one, apply the survival factor, take an implicit heat step, add the
``dt``-weighted controls, then fill the age-0 row with the births
``N = int beta(a, p) f da`` (fraction ``gamma`` to females, ``1 - gamma`` to
males). In frozen mode step ``k -> k+1`` uses ``p[:, k]``; in nonlinear mode it
uses ``M^k = int lambda m^k da`` of the current male slice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .core import Grid, RateTable, age_integral, birth_kernel, step_survival


class SolverError(RuntimeError):
    """Raised when a march produces non-finite values."""


class Discretization:
    """Grid-dependent coefficients shared by the forward and adjoint marches."""

    def __init__(self, rates: RateTable, grid: Grid):
        self.rates = rates
        self.grid = grid
        self.s_m = step_survival(rates, "m", grid)
        self.s_f = step_survival(rates, "f", grid)
        self.r_m = rates.K_m * grid.dt / grid.dx**2
        self.r_f = rates.K_f * grid.dt / grid.dx**2
        self.gamma = float(rates.gamma)
        self.lam = np.asarray(rates.lambda_fert(grid.ages), dtype=float)

    def kernel_at(self, p_slice) -> np.ndarray:
        return birth_kernel(self.rates, self.grid, p_slice)

    def kernels(self, p) -> np.ndarray:
        """Birth kernels for every step from a ``(Nx, Nt + 1)`` profile."""
        g = self.grid
        p = np.broadcast_to(np.asarray(p, dtype=float), (g.Nx, g.Nt + 1))
        return np.ascontiguousarray(np.stack([self.kernel_at(p[:, k]) for k in range(g.Nt)]))

    def male_integral(self, m) -> np.ndarray:
        """``M = int lambda m da`` for a slice or a stack of slices."""
        return age_integral(m, self.lam, self.grid.da)

    @property
    def coeffs(self):
        return self.s_m, self.s_f, self.r_m, self.r_f, self.gamma


@dataclass
class ForwardProblem:
    rates: RateTable
    grid: Grid
    initial_m: np.ndarray
    initial_f: np.ndarray
    control_m: np.ndarray | None = None  # (Nt+1, Nx, Na+1); slice 0 unused
    control_f: np.ndarray | None = None
    frozen_p: np.ndarray | None = None  # (Nx, Nt+1); None selects nonlinear mode


@dataclass
class Trajectory:
    grid: Grid
    m: np.ndarray
    f: np.ndarray
    births: np.ndarray  # N(x, t_k), (Nx, Nt+1)
    M: np.ndarray  # int lambda m da, (Nx, Nt+1)
    p: np.ndarray  # profile fed to beta at each step, (Nx, Nt+1)

    @property
    def renewal_trace_m(self) -> np.ndarray:
        return self.m[:, :, 0].T

    @property
    def renewal_trace_f(self) -> np.ndarray:
        return self.f[:, :, 0].T

    @property
    def final_m(self) -> np.ndarray:
        return self.m[-1]

    @property
    def final_f(self) -> np.ndarray:
        return self.f[-1]


def _sources(problem: ForwardProblem):
    dt = problem.grid.dt
    src_m = None if problem.control_m is None else np.ascontiguousarray(dt * problem.control_m)
    src_f = None if problem.control_f is None else np.ascontiguousarray(dt * problem.control_f)
    return src_m, src_f


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise SolverError("non-finite values in the march; parameters are unstable")


def step(problem: ForwardProblem, state, k: int, disc: Discretization | None = None):
    """Advance ``(m^k, f^k)`` to ``(m^{k+1}, f^{k+1})``."""
    disc = disc or Discretization(problem.rates, problem.grid)
    m, f = state
    p_k = problem.frozen_p[:, k] if problem.frozen_p is not None else disc.male_integral(m)
    src_m, src_f = _sources(problem)
    mn, fn, _ = kernels.forward_step(
        m, f,
        None if src_m is None else src_m[k + 1],
        None if src_f is None else src_f[k + 1],
        disc.kernel_at(p_k), *disc.coeffs,
    )
    return mn, fn


def solve(problem: ForwardProblem, disc: Discretization | None = None) -> Trajectory:
    g = problem.grid
    disc = disc or Discretization(problem.rates, g)
    m0 = np.ascontiguousarray(problem.initial_m, dtype=float)
    f0 = np.ascontiguousarray(problem.initial_f, dtype=float)
    src_m, src_f = _sources(problem)
    if problem.frozen_p is not None:
        p = np.array(np.broadcast_to(problem.frozen_p, (g.Nx, g.Nt + 1)), dtype=float)
        kb = disc.kernels(p)
        m, f, births = kernels.forward_march(m0, f0, src_m, src_f, kb, *disc.coeffs)
    else:
        m = g.zeros_traj()
        f = g.zeros_traj()
        births = np.zeros((g.Nx, g.Nt + 1))
        p = np.zeros((g.Nx, g.Nt + 1))
        m[0], f[0] = m0, f0
        for k in range(g.Nt):
            p[:, k] = disc.male_integral(m[k])
            m[k + 1], f[k + 1], births[:, k + 1] = kernels.forward_step(
                m[k], f[k],
                None if src_m is None else src_m[k + 1],
                None if src_f is None else src_f[k + 1],
                disc.kernel_at(p[:, k]), *disc.coeffs,
            )
            _check_finite(m[k + 1], f[k + 1])
        p[:, g.Nt] = disc.male_integral(m[g.Nt])
    _check_finite(m, f)
    births[:, 0] = np.einsum("ji,ji->j", disc.kernel_at(p[:, 0]), f0)
    return Trajectory(g, m, f, births, disc.male_integral(m).T, p)


def _grad_sq(u, dx):
    pad = np.zeros(u.shape[:-2] + (u.shape[-2] + 2, u.shape[-1]))
    pad[..., 1:-1, :] = u
    return np.sum(np.diff(pad, axis=-2) ** 2) / dx**2


def energy_report(traj: Trajectory) -> dict:
    """Discrete L2(Q) norms, H1_0 seminorms and final-slice norms of both sexes."""
    g = traj.grid
    w = g.dx * g.da
    out = {}
    for name, u in (("m", traj.m), ("f", traj.f)):
        body = u[1:]
        out[f"L2_{name}"] = float(np.sqrt(g.dt * w * np.sum(body**2)))
        out[f"H1_{name}"] = float(np.sqrt(g.dt * w * _grad_sq(body, g.dx)))
        out[f"final_{name}"] = float(np.sqrt(w * np.sum(u[-1] ** 2)))
        out[f"initial_{name}"] = float(np.sqrt(w * np.sum(u[0] ** 2)))
    return out
