"""Damped Picard iteration on the fertility profile ``p = int lambda m da``.

``Lambda(p)`` synthesizes penalized-HUM controls for the system with ``beta``
frozen at ``p`` and returns ``int lambda m da`` of the controlled male
trajectory, column ``k`` taken from slice ``k`` (the same lag as the nonlinear
forward march, so a fixed point makes the frozen and nonlinear runs coincide).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ControlWindows, Grid, RateTable, norm
from .forward import ForwardProblem, Trajectory, solve
from .hum import ControlOperator, HUMConfig, HUMResult, _synthesize, target_masks

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FixedPointConfig:
    damping: float = 0.5
    tol: float = 1e-8
    max_outer_iters: int = 30
    initial_p: str = "zero"  # or "free-run"

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.initial_p not in ("zero", "free-run"):
            raise ValueError(f"unknown initial_p {self.initial_p!r}")


@dataclass
class FixedPointResult:
    converged: bool
    iterations: int
    residual_history: list
    p: np.ndarray
    hum: HUMResult
    nonlinear: Trajectory
    consistency: float  # ||M_nonlinear - p*|| in L2(Q_T)
    contraction: list = field(default_factory=list)
    final_norm_m: float = 0.0
    final_norm_f: float = 0.0

    def summary(self) -> dict:
        return {
            "fp_converged": self.converged,
            "fp_iterations": self.iterations,
            "fp_residual": self.residual_history[-1] if self.residual_history else 0.0,
            "consistency": self.consistency,
            "nl_final_norm_m": self.final_norm_m,
            "nl_final_norm_f": self.final_norm_f,
        }


def norm_qt(p, grid: Grid) -> float:
    """L2(Q_T) norm of an ``(Nx, Nt + 1)`` profile; the ``t = 0`` column carries no weight."""
    p = np.asarray(p)
    return math.sqrt(grid.dt * grid.dx * float(np.sum(p[:, 1:] ** 2)))


def lambda_map(rates: RateTable, grid: Grid, windows: ControlWindows, p, initial, cfg: HUMConfig):
    """``Lambda(p)`` together with the HUM result it came from."""
    op = ControlOperator(rates, grid, windows, p, cfg)
    res = _synthesize(op, *initial)
    return np.array(res.trajectory.M), res


def free_run_profile(rates, grid, initial) -> np.ndarray:
    m0, f0 = initial
    return solve(ForwardProblem(rates, grid, m0, f0)).M


def iterate(rates: RateTable, grid: Grid, windows: ControlWindows, initial,
            fp_cfg: FixedPointConfig, hum_cfg: HUMConfig, p0=None) -> FixedPointResult:
    """Damped Picard ``p <- (1 - rho) p + rho Lambda(p)`` followed by a nonlinear check run."""
    m0, f0 = (np.asarray(u, dtype=float) for u in initial)
    if p0 is not None:
        p = np.array(p0, dtype=float)
    elif fp_cfg.initial_p == "free-run":
        p = free_run_profile(rates, grid, (m0, f0))
    else:
        p = np.zeros((grid.Nx, grid.Nt + 1))
    rho = fp_cfg.damping
    history, steps = [], []
    converged = False
    res = None
    for k in range(1, fp_cfg.max_outer_iters + 1):
        lam_p, res = lambda_map(rates, grid, windows, p, (m0, f0), hum_cfg)
        p_new = (1.0 - rho) * p + rho * lam_p
        step = norm_qt(p_new - p, grid)
        history.append(step / max(1.0, norm_qt(p, grid)))
        steps.append(step)
        p = p_new
        log.info("outer %d residual %.3e", k, history[-1])
        if history[-1] <= fp_cfg.tol:
            converged = True
            break
    iters = len(history)
    if not converged:
        log.warning("fixed point not reached after %d iterations (residual %.3e)", iters, history[-1])
    contraction = [steps[i + 1] / steps[i] for i in range(len(steps) - 1) if steps[i] > 0]

    # controls at the final profile, then the genuinely nonlinear run with them
    _, res = lambda_map(rates, grid, windows, p, (m0, f0), hum_cfg)
    nl = solve(ForwardProblem(rates, grid, m0, f0, res.control_m, res.control_f))
    consistency = norm_qt(nl.M - p, grid)
    tm, tf = target_masks(grid, hum_cfg)
    return FixedPointResult(
        converged=converged,
        iterations=iters,
        residual_history=history,
        p=p,
        hum=res,
        nonlinear=nl,
        consistency=consistency,
        contraction=contraction,
        final_norm_m=norm(nl.m[-1] * tm, grid),
        final_norm_f=norm(nl.f[-1] * tf, grid),
    )
