"""Demographic data, grids and the discrete building blocks shared by every solver.

Fields are stored as ``(Nx, Na + 1)`` arrays: rows are interior spatial nodes
``x_j = (j + 1) dx`` of the unit interval, columns are ages ``a_i = i da``.
Trajectories stack ``Nt + 1`` such slices along a leading time axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solveh_banded

# relative slack for strict geometric inequalities evaluated in floating point
GEOM_TOL = 1e-9


# ---------------------------------------------------------------------------
# parametric families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SinBump:
    """C^1 bump ``height * sin^2(pi (a - lo) / (hi - lo))`` on ``[lo, hi]``, zero elsewhere."""

    lo: float
    hi: float
    height: float = 1.0

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        s = (a - self.lo) / (self.hi - self.lo)
        inside = (s > 0.0) & (s < 1.0)
        return np.where(inside, self.height * np.sin(np.pi * s) ** 2, 0.0)

    def derivative(self, a):
        a = np.asarray(a, dtype=float)
        w = self.hi - self.lo
        s = (a - self.lo) / w
        inside = (s > 0.0) & (s < 1.0)
        return np.where(inside, self.height * np.pi / w * np.sin(2.0 * np.pi * s), 0.0)

    @property
    def max(self) -> float:
        return float(self.height)


@dataclass(frozen=True)
class Survival:
    """Survival function of the hazard ``mu(a) = mu0 + c / (A - a)``.

    ``pi(a) = exp(-mu0 a) ((A - a) / A)^c``. Any ``c > 0`` makes the cumulative
    hazard diverge at ``A`` so ``pi(A) = 0``; ``c = 0`` is a constant hazard.
    """

    A: float
    mu0: float = 0.0
    c: float = 1.0

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        base = np.exp(-self.mu0 * a)
        if self.c == 0.0:
            return base
        return base * np.clip((self.A - a) / self.A, 0.0, None) ** self.c

    def hazard(self, a):
        a = np.asarray(a, dtype=float)
        if self.c == 0.0:
            return np.full_like(a, self.mu0)
        with np.errstate(divide="ignore"):
            return self.mu0 + self.c / (self.A - a)

    def ratio(self, a, delta):
        """``pi(a + delta) / pi(a)`` from the closed form."""
        a = np.asarray(a, dtype=float)
        delta = np.asarray(delta, dtype=float)
        out = np.exp(-self.mu0 * delta)
        if self.c == 0.0:
            return np.broadcast_to(out, np.broadcast(a, delta).shape).astype(float)
        rem = self.A - a
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(rem > 0.0, np.clip(rem - delta, 0.0, None) / np.where(rem > 0.0, rem, 1.0), 1.0)
        return out * frac ** self.c


@dataclass(frozen=True)
class BirthRate:
    """``beta(a, p) = beta0(a) * g(|p|)`` with a saturating response ``g``.

    ``kind="rational"``: ``g(q) = q / (1 + q / s)``; ``kind="clipped"``:
    ``g(q) = min(q, s)``. Both vanish at ``p = 0``, are bounded by ``s`` and
    1-Lipschitz, so ``beta`` is Lipschitz in ``p`` with constant ``max beta0``.
    """

    profile: SinBump
    saturation: float = 1.0
    kind: str = "rational"

    def __call__(self, a, p):
        a = np.asarray(a, dtype=float)
        q = np.abs(np.asarray(p, dtype=float))
        if self.kind == "rational":
            g = q / (1.0 + q / self.saturation)
        elif self.kind == "clipped":
            g = np.minimum(q, self.saturation)
        else:
            raise ValueError(f"unknown birth response {self.kind!r}")
        return self.profile(a) * g

    @property
    def threshold(self) -> float:
        """Age below which ``beta`` vanishes identically."""
        return float(self.profile.lo)

    @property
    def max(self) -> float:
        return self.profile.max * self.saturation

    @property
    def lipschitz(self) -> float:
        return self.profile.max


@dataclass(frozen=True)
class RateTable:
    A: float
    gamma: float
    K_m: float
    K_f: float
    survival_m: Survival
    survival_f: Survival
    beta: Callable
    lambda_fert: SinBump
    lipschitz_L: float
    b: float | None = None  # birth support threshold; defaults to beta.threshold
    beta_max: float | None = None

    @property
    def birth_threshold(self) -> float:
        if self.b is not None:
            return float(self.b)
        return float(self.beta.threshold)

    @property
    def birth_max(self) -> float:
        if self.beta_max is not None:
            return float(self.beta_max)
        return float(self.beta.max)

    def survival(self, sex: str) -> Survival:
        return {"m": self.survival_m, "f": self.survival_f}[sex]

    def diffusivity(self, sex: str) -> float:
        return {"m": self.K_m, "f": self.K_f}[sex]


VARIANTS = ("both-sexes", "male-only", "female-only")


@dataclass(frozen=True)
class ControlWindows:
    omega: tuple[float, float]
    omega_prime: tuple[float, float]
    age_m: tuple[float, float]
    age_f: tuple[float, float]
    variant: str = "both-sexes"
    rho: float = 0.0


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform grid with the age step equal to the time step."""

    Nx: int
    Na: int
    A: float
    T: float
    Nt: int = field(init=False)

    def __post_init__(self):
        if self.Nx < 1 or self.Na < 2:
            raise ValueError("grid needs Nx >= 1 and Na >= 2")
        if self.A <= 0 or self.T <= 0:
            raise ValueError("A and T must be positive")
        da = self.A / self.Na
        nt = int(round(self.T / da))
        if nt < 1 or abs(nt * da - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not a multiple of da={da}; dt = da is required")
        object.__setattr__(self, "Nt", nt)

    @property
    def dx(self) -> float:
        return 1.0 / (self.Nx + 1)

    @property
    def da(self) -> float:
        return self.A / self.Na

    @property
    def dt(self) -> float:
        return self.da

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(1, self.Nx + 1)

    @property
    def ages(self) -> np.ndarray:
        return self.da * np.arange(self.Na + 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.Nt + 1)

    @property
    def field_shape(self) -> tuple[int, int]:
        return (self.Nx, self.Na + 1)

    @property
    def traj_shape(self) -> tuple[int, int, int]:
        return (self.Nt + 1, self.Nx, self.Na + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.field_shape)

    def zeros_traj(self) -> np.ndarray:
        return np.zeros(self.traj_shape)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = [f"{'ok ' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in self.checks]
        return "\n".join(lines)


def _check_survival(pi: Survival, A: float) -> tuple[bool, str]:
    a = np.linspace(0.0, A, 2001)
    v = pi(a)
    problems = []
    if abs(float(pi(0.0)) - 1.0) > 1e-12:
        problems.append("pi(0) != 1")
    if np.any(np.diff(v) > 1e-14):
        problems.append("pi increases")
    if abs(float(pi(A))) > 1e-14:
        problems.append("pi(A) != 0 (cumulative mortality finite)")
    if pi.mu0 < 0 or pi.c < 0:
        problems.append("negative mortality")
    return (not problems, "; ".join(problems) or "survival admissible")


def validate(rates: RateTable, windows: ControlWindows, T: float) -> ValidationReport:
    """Check the demographic hypotheses and the control geometry; never raises."""
    A = rates.A
    checks: list[Check] = []

    basic = []
    if not 0.0 < rates.gamma < 1.0:
        basic.append("gamma outside (0,1)")
    if rates.K_m <= 0 or rates.K_f <= 0:
        basic.append("nonpositive diffusivity")
    if A <= 0:
        basic.append("A <= 0")
    checks.append(Check("parameters", not basic, "; ".join(basic) or "gamma, K_m, K_f, A admissible"))

    ok_m, msg_m = _check_survival(rates.survival_m, A)
    ok_f, msg_f = _check_survival(rates.survival_f, A)
    checks.append(Check("H1", ok_m and ok_f, f"male: {msg_m}; female: {msg_f}"))

    rng = np.random.default_rng(0)
    a = np.linspace(0.0, A, 401)[1:-1]
    p = np.concatenate([np.linspace(-10.0, 10.0, 81), rng.normal(scale=3.0, size=40)])
    B = np.asarray(rates.beta(a[:, None], p[None, :]), dtype=float) * np.ones((a.size, p.size))
    zero_col = np.asarray(rates.beta(a, np.zeros_like(a)), dtype=float) * np.ones_like(a)

    h2 = []
    if np.any(np.abs(zero_col) > 0.0):
        h2.append("beta(a,0) != 0")
    if np.any(B < 0):
        h2.append("beta takes negative values")
    checks.append(Check("H2", not h2, "; ".join(h2) or "beta(a,0)=0 and beta>=0"))

    b = rates.birth_threshold
    h3 = []
    if not 0.0 < b < A:
        h3.append(f"threshold b={b} outside (0,A)")
    below = a < b
    if np.any(B[below] != 0.0):
        h3.append("beta nonzero below b")
    q = p + rng.normal(scale=0.5, size=p.size)
    Bq = np.asarray(rates.beta(a[:, None], q[None, :]), dtype=float) * np.ones_like(B)
    excess = np.abs(B - Bq) - rates.lipschitz_L * np.abs(p - q)[None, :]
    if np.any(excess > 1e-12):
        h3.append(f"Lipschitz bound L={rates.lipschitz_L} violated")
    if np.any(B > rates.birth_max + 1e-12):
        h3.append("beta exceeds its declared bound")
    checks.append(Check("H3", not h3, "; ".join(h3) or "support, Lipschitz and bound hold"))

    lam = rates.lambda_fert
    grid_a = np.linspace(0.0, A, 2001)
    lv = lam(grid_a)
    h4 = []
    if np.any(lv < 0):
        h4.append("lambda negative")
    if abs(float(lam(0.0))) > 1e-14 or abs(float(lam(A))) > 1e-14:
        h4.append("lambda(0) or lambda(A) nonzero")
    checks.append(Check("H4", not h4, "; ".join(h4) or "lambda >= 0, C^1, vanishing at 0 and A"))

    # lambda * mu_m integrable: mu_m ~ c/(A-a) near A and lambda is C^1, so lambda(A)=0 suffices
    h5_ok = rates.survival_m.c == 0.0 or abs(float(lam(A))) <= 1e-14
    checks.append(Check("H5", h5_ok, "lambda*mu_m integrable" if h5_ok else "lambda(A) != 0 with singular mu_m"))

    checks.extend(_geometry_checks(rates, windows, T))
    return ValidationReport(checks)


def _interval_ok(iv, lo, hi):
    a, b = iv
    return lo <= a < b <= hi


def _geometry_checks(rates: RateTable, w: ControlWindows, T: float) -> list[Check]:
    A = rates.A
    tol = GEOM_TOL * max(1.0, A)
    out = []
    if w.variant not in VARIANTS:
        return [Check("variant", False, f"unknown variant {w.variant!r}")]
    a1, a2 = w.age_m
    b1, b2 = w.age_f
    geo = []
    for name, iv in (("omega", w.omega), ("omega_prime", w.omega_prime)):
        if not _interval_ok(iv, 0.0, 1.0):
            geo.append(f"{name} not a nonempty subinterval of (0,1)")
    for name, iv in (("age_m", w.age_m), ("age_f", w.age_f)):
        if not _interval_ok(iv, 0.0, A):
            geo.append(f"{name} not a nonempty subinterval of (0,A)")

    if w.variant == "both-sexes":
        if not a1 < rates.birth_threshold:
            geo.append(f"a1={a1} must be below the birth threshold b={rates.birth_threshold}")
        if not (b1 <= a1 and a2 <= b2):
            geo.append("(a1,a2) not contained in (b1,b2)")
        need = a1 + A - a2
    elif w.variant == "male-only":
        if a1 != 0.0:
            geo.append("male-only control age window must start at 0")
        if not w.rho > 0.0:
            geo.append("exclusion age rho must be positive")
        need = A - a2
    else:
        need = b1 + A - b2
    out.append(Check("geometry", not geo, "; ".join(geo) or f"{w.variant} windows admissible"))
    time_ok = T - need > tol
    out.append(Check("time", time_ok, f"T={T:g} {'>' if time_ok else 'is not >'} {need:g}"))
    return out


# ---------------------------------------------------------------------------
# discrete operators
# ---------------------------------------------------------------------------

def survival_ratio(rates: RateTable, sex: str, a, delta):
    """``pi(a + delta) / pi(a)`` for the male (``"m"``) or female (``"f"``) survival."""
    a_arr = np.asarray(a, dtype=float)
    d_arr = np.asarray(delta, dtype=float)
    A = rates.A
    if np.any(a_arr < 0) or np.any(d_arr < 0) or np.any(a_arr + d_arr > A * (1 + 1e-12)):
        raise ValueError("survival_ratio needs 0 <= a <= a + delta <= A")
    out = rates.survival(sex).ratio(a_arr, np.minimum(d_arr, A - a_arr))
    return float(out) if np.ndim(out) == 0 else out


def step_survival(rates: RateTable, sex: str, grid: Grid) -> np.ndarray:
    """Per-row factor applied after the age shift: ``s[i] = pi(a_i) / pi(a_{i-1})``, ``s[0] = 0``."""
    s = np.zeros(grid.Na + 1)
    s[1:] = survival_ratio(rates, sex, grid.ages[:-1], np.full(grid.Na, grid.da))
    return s


def diffusion_step(u, K: float, dt: float) -> np.ndarray:
    """Backward-Euler heat step with homogeneous Dirichlet ends.

    Solves ``(I + dt K L_h) u_new = u`` along axis 0, ``L_h`` being the
    second-difference matrix on ``len(u)`` interior nodes of the unit interval.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    r = K * dt * (n + 1) ** 2
    ab = np.empty((2, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    return solveh_banded(ab, u)


def laplacian(u, dx: float) -> np.ndarray:
    """Dirichlet second difference along axis 0."""
    u = np.asarray(u, dtype=float)
    pad = np.zeros((u.shape[0] + 2,) + u.shape[1:])
    pad[1:-1] = u
    return (pad[2:] - 2.0 * pad[1:-1] + pad[:-2]) / dx**2


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def age_integral(field_values, weight, da: float) -> np.ndarray:
    """Trapezoid rule over the last (age) axis: ``int_0^A weight(a) field(., a) da``."""
    f = np.asarray(field_values, dtype=float)
    wt = np.asarray(weight, dtype=float)
    return f @ (trapezoid_weights(f.shape[-1] - 1, da) * wt)


def birth_kernel(rates: RateTable, grid: Grid, p) -> np.ndarray:
    """Quadrature weights times ``beta(a_i, p_j)`` for a spatial profile ``p``; column 0 is zero."""
    p = np.asarray(p, dtype=float)
    k = trapezoid_weights(grid.Na, grid.da)[None, :] * rates.beta(grid.ages[None, :], p[:, None])
    k = np.array(k, dtype=float) * np.ones(grid.field_shape)
    k[:, 0] = 0.0
    return k


def inner(u, v, grid: Grid) -> float:
    """``dx da``-weighted inner product of fields (summed over any leading axes)."""
    return float(np.sum(np.asarray(u) * np.asarray(v))) * grid.dx * grid.da


def norm(u, grid: Grid) -> float:
    return math.sqrt(max(inner(u, u, grid), 0.0))


def window_mask(grid: Grid, xwin, awin) -> np.ndarray:
    """Cells whose node lies in the open space window times the open age window."""
    x, a = grid.x, grid.ages
    mx = (x > xwin[0]) & (x < xwin[1])
    ma = (a > awin[0]) & (a < awin[1])
    ma[0] = False  # the age-0 row is owned by the renewal condition
    return mx[:, None] & ma[None, :]


def control_masks(grid: Grid, windows: ControlWindows) -> tuple[np.ndarray, np.ndarray]:
    """Space-age masks of the male and female controls for the selected variant."""
    mm = window_mask(grid, windows.omega, windows.age_m)
    mf = window_mask(grid, windows.omega_prime, windows.age_f)
    if windows.variant == "male-only":
        mf = np.zeros_like(mf)
    elif windows.variant == "female-only":
        mm = np.zeros_like(mm)
    return mm, mf
