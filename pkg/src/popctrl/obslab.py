"""Empirical observability: probe ratios, trace estimates, blow-up scans and support checks.

Observation energies are the ones the control synthesis sees: ``n`` on the
male window and the sourced female slice ``q`` on the female window, summed
over ``k = 1 .. Nt`` with weight ``dt dx da``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adjoint import heat_semigroup
from .backend import kernels
from .core import ControlWindows, Grid, RateTable, SinBump, age_integral, control_masks, laplacian, survival_ratio
from .forward import Discretization, Trajectory


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

@dataclass
class ProbeSet:
    probes: list
    labels: list
    seed: int

    def __len__(self):
        return len(self.probes)

    @classmethod
    def generate(cls, grid: Grid, seed: int = 0, n_random: int = 16, structured: bool = True,
                 localized: bool = True) -> "ProbeSet":
        """Eigenmode-times-bump, random smooth and single-age-row probes, each of unit norm."""
        rng = np.random.default_rng(seed)
        x, a, A = grid.x, grid.ages, grid.A
        zero = grid.zeros()
        probes, labels = [], []

        def add(n, l, label):
            s = math.sqrt((np.sum(n * n) + np.sum(l * l)) * grid.dx * grid.da)
            if s > 0:
                probes.append((n / s, l / s))
                labels.append(label)

        if structured:
            for k in (1, 2, 3):
                for lo, hi in ((0.0, 0.5), (0.25, 0.75), (0.5, 1.0)):
                    field_ = np.outer(np.sin(k * np.pi * x), SinBump(lo * A, hi * A)(a))
                    add(field_, zero, f"n:k{k}:{lo}-{hi}")
                    add(zero, field_, f"l:k{k}:{lo}-{hi}")
                    add(field_, field_, f"nl:k{k}:{lo}-{hi}")
        for r in range(n_random):
            parts = []
            for _ in range(2):
                cx = rng.normal(size=4) / np.arange(1, 5) ** 2
                sx = np.sin(np.pi * np.outer(x, np.arange(1, 5))) @ cx
                ca = rng.normal(size=4) / np.arange(1, 5) ** 2
                sa = np.sin(np.pi * np.outer(a / A, np.arange(1, 5))) @ ca
                parts.append(np.outer(sx, sa))
            add(parts[0], parts[1], f"random:{r}")
        if localized:
            for i in range(1, grid.Na):
                row = np.zeros(grid.field_shape)
                row[:, i] = np.sin(np.pi * x)
                add(row, zero, f"row-n:{i}")
        return cls(probes, labels, seed)


@dataclass
class ProbeReport:
    ratios: list
    numerators: list
    observations: list
    degenerate: list
    labels: list
    meta: dict = field(default_factory=dict)
    traces: list = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def argmax(self) -> str:
        return self.labels[int(np.argmax(self.ratios))] if self.ratios else ""

    def summary(self) -> dict:
        return {
            "max_ratio": self.max_ratio,
            "argmax": self.argmax,
            "n_probes": len(self.ratios),
            "n_degenerate": int(sum(self.degenerate)),
            "n_infinite": int(sum(math.isinf(r) for r in self.ratios)),
            **self.meta,
        }


class Observer:
    """Adjoint runs at a frozen profile with the control masks of ``windows``."""

    def __init__(self, rates: RateTable, grid: Grid, windows: ControlWindows, p=0.0):
        self.rates, self.grid, self.windows = rates, grid, windows
        self.disc = Discretization(rates, grid)
        self.p = np.array(np.broadcast_to(np.asarray(p, dtype=float), (grid.Nx, grid.Nt + 1)))
        self.kb = self.disc.kernels(self.p)
        mm, mf = control_masks(grid, windows)
        self.mask_m, self.mask_f = mm.astype(float), mf.astype(float)

    def run(self, probe):
        nT, lT = probe
        return kernels.adjoint_march(np.ascontiguousarray(nT, dtype=float),
                                     np.ascontiguousarray(lT, dtype=float), self.kb, *self.disc.coeffs)

    def energies(self, probe):
        g = self.grid
        n, l, q = self.run(probe)
        w = g.dx * g.da
        initial = w * float(np.sum(n[0] ** 2) + np.sum(l[0] ** 2))
        obs = g.dt * w * float(np.sum(self.mask_m * n[1:] ** 2) + np.sum(self.mask_f * q[1:] ** 2))
        obs_m = g.dt * w * float(np.sum(self.mask_m * n[1:] ** 2))
        return initial, obs, obs_m, (n, l, q)


def _ratio(num: float, den: float):
    if den == 0.0:
        if num == 0.0:
            return 0.0, True
        return math.inf, False
    return num / den, False


def observability_ratio(rates, grid, windows, p, probe):
    """``(||n(0)||^2 + ||l(0)||^2) / (int_Xi n^2 + int_Xi' q^2)`` and a 0/0 flag."""
    num, den, _, _ = Observer(rates, grid, windows, p).energies(probe)
    return _ratio(num, den)


def probe_report(rates, grid, windows, p, probes: ProbeSet) -> ProbeReport:
    obs = Observer(rates, grid, windows, p)
    ratios, nums, dens, degen = [], [], [], []
    for probe in probes.probes:
        num, den, _, _ = obs.energies(probe)
        r, d = _ratio(num, den)
        ratios.append(r)
        nums.append(num)
        dens.append(den)
        degen.append(d)
    meta = {"T": grid.T, "seed": probes.seed, "variant": windows.variant}
    return ProbeReport(ratios, nums, dens, degen, list(probes.labels), meta)


def unobservable_witness(grid: Grid, windows: ControlWindows) -> tuple[np.ndarray, np.ndarray]:
    """Male final datum on ages ``(a2 + T, A)``: its characteristics never cross ``(a1, a2)``."""
    a1, a2 = windows.age_m
    lo = a2 + grid.T
    if lo >= grid.A - grid.da:
        raise ValueError("no room for a witness: a2 + T must stay below A - da")
    n = np.outer(np.sin(np.pi * grid.x), SinBump(lo, grid.A)(grid.ages))
    s = math.sqrt(np.sum(n * n) * grid.dx * grid.da)
    return n / s, grid.zeros()


# ---------------------------------------------------------------------------
# trace estimates
# ---------------------------------------------------------------------------

def _trace_ratio(obs: Observer, probe, eta: float):
    g = obs.grid
    _, _, obs_m, (n, _, _) = obs.energies(probe)
    k = np.arange(1, g.Nt + 1)
    keep = g.times[k] <= g.T - eta + 1e-12 * g.T
    trace = g.dt * g.dx * float(np.sum(n[k[keep], :, 0] ** 2))
    return _ratio(trace, obs_m)[0], trace, obs_m


def trace_estimate(rates, grid, windows, p, probe, eta: float) -> float:
    """``int_0^{T-eta} int n(x,0,t)^2 / int_Xi n^2`` for one probe (or the max over a ProbeSet)."""
    a1 = windows.age_m[0]
    if not a1 < eta < grid.T:
        raise ValueError(f"eta={eta} must lie in (a1, T) = ({a1}, {grid.T})")
    obs = Observer(rates, grid, windows, p)
    if isinstance(probe, ProbeSet):
        return max(_trace_ratio(obs, pr, eta)[0] for pr in probe.probes)
    return _trace_ratio(obs, probe, eta)[0]


def blowup_scan(rates, grid, windows, p, probes: ProbeSet, etas) -> dict:
    """Max trace ratio ``C(eta)`` per ``eta`` and a least-squares fit of ``log C`` on ``1/(eta - a1)``."""
    etas = np.sort(np.asarray(etas, dtype=float))
    if etas.size < 3:
        raise ValueError("blow-up fit needs at least 3 eta values")
    a1 = windows.age_m[0]
    if np.any(etas <= a1) or np.any(etas >= min(windows.age_m[1], grid.T)):
        raise ValueError("eta grid must lie in (a1, min(a2, T))")
    obs = Observer(rates, grid, windows, p)
    C = np.array([max(_trace_ratio(obs, pr, e)[0] for pr in probes.probes) for e in etas])
    finite = np.isfinite(C) & (C > 0)
    if finite.sum() < 3:
        raise ValueError("fewer than 3 finite positive C(eta) values to fit")
    slope, intercept = np.polyfit(1.0 / (etas[finite] - a1), np.log(C[finite]), 1)
    return {
        "eta": etas.tolist(),
        "C": C.tolist(),
        "slope": float(slope),
        "intercept": float(intercept),
        "monotone": bool(np.all(np.diff(C) <= 0.0)),  # C nonincreasing in eta
    }


# ---------------------------------------------------------------------------
# support and trace checks
# ---------------------------------------------------------------------------

def l_reconstruction(rates: RateTable, grid: Grid, p, traj, rows) -> np.ndarray:
    """``l(x, a, 0)`` on ``rows`` from the trace-integral representation.

    ``int_0^{A-a} pi_f(a+s)/pi_f(a) e^{s K_f Delta} beta(a+s, p(s)) tr(s) ds`` with
    ``tr = (1-gamma) n(., 0, .) + gamma l(., 0, .)`` taken from the solver, the
    rectangle rule at ``s_k = k dt`` and the exact heat semigroup. Valid where
    ``A - a < T`` so the final datum does not reach ``t = 0``.
    """
    n, l, _ = traj
    g = grid
    p = np.broadcast_to(np.asarray(p, dtype=float), (g.Nx, g.Nt + 1))
    gam = rates.gamma
    out = np.zeros((g.Nx, len(rows)))
    for j, i in enumerate(rows):
        a = g.ages[i]
        acc = np.zeros(g.Nx)
        for k in range(1, g.Na - i + 1):
            s = k * g.dt
            if k > g.Nt:
                break
            tr = (1.0 - gam) * n[k, :, 0] + gam * l[k, :, 0]
            b = np.asarray(rates.beta(a + s, p[:, k]), dtype=float) * np.ones(g.Nx)
            ratio = survival_ratio(rates, "f", a, min(s, g.A - a))
            acc += g.dt * heat_semigroup(ratio * b * tr, rates.K_f, s)
        out[:, j] = acc
    return out


def support_check(rates, grid, windows, p, probe, kappa: float, kind: str = "support") -> dict:
    """Support of ``n(., ., 0)`` above ``a0 = a2 - kappa`` and, for ``kind="trace"``, ``l`` against its oracle."""
    A, T = grid.A, grid.T
    a1, a2 = windows.age_m
    tol = 1e-9 * max(1.0, A)
    if kind not in ("support", "trace"):
        raise ValueError(f"unknown check {kind!r}")
    if not T - (A - a2) > tol:
        raise ValueError("support check needs T > A - a2")
    if kind == "trace" and not T - (a1 + A - a2) > tol:
        raise ValueError("trace check needs T > a1 + A - a2")
    if not 0.0 < kappa < T - (A - a2) - tol:
        raise ValueError("kappa must lie in (0, T - (A - a2))")
    a0 = a2 - kappa
    rows = [i for i, a in enumerate(grid.ages) if a > a0 and A - a < T]
    obs = Observer(rates, grid, windows, p)
    traj = obs.run(probe)
    n0 = traj[0][0][:, rows]
    out = {"a0": a0, "rows": rows, "residual_n": float(np.max(np.abs(n0))) if rows else 0.0}
    if kind == "trace":
        rec = l_reconstruction(rates, grid, obs.p, traj, rows)
        diff = rec - traj[1][0][:, rows]
        out["l_discrepancy"] = math.sqrt(grid.dx * grid.da * float(np.sum(diff**2)))
        out["l_norm"] = math.sqrt(grid.dx * grid.da * float(np.sum(traj[1][0][:, rows] ** 2)))
    return out


# ---------------------------------------------------------------------------
# aggregated equation
# ---------------------------------------------------------------------------

def aggregate_residual(rates: RateTable, grid: Grid, traj: Trajectory, control_m=None) -> float:
    """L2(Q_T) residual of ``Y_t - K_m Delta Y + int lambda mu m = int lambda' m + int lambda chi v``.

    ``Y = int lambda m da``; the time derivative is a backward difference and all
    other terms are evaluated at the new time level.
    """
    g = grid
    a = g.ages
    lam = np.asarray(rates.lambda_fert(a), dtype=float)
    dlam = np.asarray(rates.lambda_fert.derivative(a), dtype=float)
    mu = np.asarray(rates.survival_m.hazard(a), dtype=float)
    lam_mu = np.where(lam > 0.0, lam * np.where(np.isfinite(mu), mu, 0.0), 0.0)
    m = traj.m[1:]
    Y = age_integral(traj.m, lam, g.da)  # (Nt+1, Nx)
    res = (Y[1:] - Y[:-1]) / g.dt
    res -= rates.K_m * np.moveaxis(laplacian(np.moveaxis(Y[1:], 0, 1), g.dx), 0, 1)
    res += age_integral(m, lam_mu, g.da)
    res -= age_integral(m, dlam, g.da)
    if control_m is not None:
        res -= age_integral(np.asarray(control_m)[1:], lam, g.da)
    return math.sqrt(g.dt * g.dx * float(np.sum(res**2)))
