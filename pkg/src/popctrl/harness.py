"""Scenario configuration, pipelines, artifacts and the ``popctrl`` command line.

A scenario is one flat TOML file (see ``DEFAULTS`` for every key). Bundled
scenarios live in ``popctrl/scenarios`` and can be named instead of a path.
Summaries are JSON with sorted keys; every CSV row carries ``config_hash``.

Exit codes: 0 pass, 1 acceptance-threshold failure, 2 config error, 3 solver abort.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import BirthRate, ControlWindows, Grid, RateTable, SinBump, Survival, norm, validate
from .fixpoint import FixedPointConfig, iterate
from .forward import ForwardProblem, SolverError, solve
from .hum import HUMConfig, synthesize, target_masks
from .obslab import ProbeSet, observability_ratio, probe_report, unobservable_witness

log = logging.getLogger(__name__)

EXIT_PASS, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

PIPELINES = ("fixpoint", "hum", "probe")

DEFAULTS = {
    "name": "scenario",
    "pipeline": "fixpoint",
    "variant": "both-sexes",
    "seed": 0,
    # grid (dt = da = A / Na)
    "Nx": 64,
    "Na": 80,
    "A": 1.0,
    "T": 0.5,
    # demography
    "gamma": 0.5,
    "K_m": 1.0,
    "K_f": 1.0,
    "mu0_m": 0.1,
    "c_m": 1.0,
    "mu0_f": 0.1,
    "c_f": 1.0,
    "beta_ages": [0.5, 0.95],
    "beta_height": 1.0,
    "beta_saturation": 1.0,
    "beta_kind": "rational",
    "lambda_ages": [0.05, 0.95],
    "lambda_height": 1.0,
    # control geometry
    "omega": [0.2, 0.8],
    "omega_prime": [0.2, 0.8],
    "age_m": [0.2, 0.8],
    "age_f": [0.1, 0.9],
    "rho": 0.0,
    # penalized HUM
    "epsilon": 1e-6,
    "theta": 1e-6,
    "cg_tol": 1e-8,
    "cg_max_iters": 500,
    "krylov": "cr",
    "frozen_p": 0.0,
    # fixed point
    "damping": 0.5,
    "fp_tol": 1e-8,
    "max_outer_iters": 30,
    "initial_p": "zero",
    # initial data: amplitude * sin(mode pi x) * bump(ages)
    "m0_amplitude": 1.0,
    "m0_mode": 1,
    "m0_ages": [0.1, 0.7],
    "f0_amplitude": 1.0,
    "f0_mode": 1,
    "f0_ages": [0.2, 0.8],
    # extras
    "followup": False,
    "probe_random": 16,
    "probe_p": 0.0,
    "witness": False,
    "expect_observable": True,
    "study_K": 0.05,
    "study_amplitude": 1.0,
    # acceptance thresholds
    "max_final_ratio_m": 1e-2,
    "max_final_ratio_f": 1e-2,
    "max_followup_ratio": 1e-2,
    "min_time_order": 0.9,
    "min_space_order": 1.9,
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def resolve_config_path(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = resources.files("popctrl") / "scenarios" / f"{name_or_path}.toml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"no such config file or bundled scenario: {name_or_path}", path=name_or_path)


def bundled_scenarios() -> list[str]:
    root = resources.files("popctrl") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*(?:{re.escape(key)}\s*=|\[+\s*{re.escape(key)}\s*[\].])")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _check_type(key, value, default):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, list):
        return (isinstance(value, list) and len(value) == len(default)
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value))
    return True


def parse_config(text: str, path: str | None = None) -> dict:
    """Parse a flat TOML scenario, fill defaults and type-check every key."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, path) from None
    cfg = dict(DEFAULTS)
    for key, value in raw.items():
        if isinstance(value, dict) or (isinstance(value, list) and any(isinstance(v, dict) for v in value)):
            raise ConfigError(f"tables are not allowed (key {key!r}); the schema is flat", _line_of(text, key), path)
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}", _line_of(text, key), path)
        if not _check_type(key, value, DEFAULTS[key]):
            raise ConfigError(f"key {key!r} has the wrong type (expected like {DEFAULTS[key]!r})",
                              _line_of(text, key), path)
        cfg[key] = float(value) if isinstance(DEFAULTS[key], float) else value
        if isinstance(DEFAULTS[key], list):
            cfg[key] = [float(v) for v in value]
    if cfg["pipeline"] not in PIPELINES:
        raise ConfigError(f"pipeline must be one of {PIPELINES}", _line_of(text, "pipeline"), path)
    cfg["_path"] = path
    return cfg


def load_config(name_or_path: str) -> dict:
    p = resolve_config_path(name_or_path)
    return parse_config(p.read_text(), str(p))


def public_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(public_config(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def echo_config(cfg: dict) -> str:
    return tomli_w.dumps(public_config(cfg))


@dataclass
class Scenario:
    cfg: dict
    rates: RateTable
    windows: ControlWindows
    grid: Grid
    hum: HUMConfig
    fp: FixedPointConfig
    m0: np.ndarray
    f0: np.ndarray


def _pair(v):
    return (float(v[0]), float(v[1]))


def build_rates(cfg: dict) -> RateTable:
    A = cfg["A"]
    lo, hi = cfg["beta_ages"]
    beta = BirthRate(SinBump(lo * A, hi * A, cfg["beta_height"]), cfg["beta_saturation"], cfg["beta_kind"])
    llo, lhi = cfg["lambda_ages"]
    return RateTable(
        A=A,
        gamma=cfg["gamma"],
        K_m=cfg["K_m"],
        K_f=cfg["K_f"],
        survival_m=Survival(A, cfg["mu0_m"], cfg["c_m"]),
        survival_f=Survival(A, cfg["mu0_f"], cfg["c_f"]),
        beta=beta,
        lambda_fert=SinBump(llo * A, lhi * A, cfg["lambda_height"]),
        lipschitz_L=beta.lipschitz,
    )


def build_scenario(cfg: dict) -> Scenario:
    """Turn a parsed config into solver objects; structural errors become ConfigError."""
    path = cfg.get("_path")
    try:
        rates = build_rates(cfg)
        windows = ControlWindows(_pair(cfg["omega"]), _pair(cfg["omega_prime"]), _pair(cfg["age_m"]),
                                 _pair(cfg["age_f"]), cfg["variant"], cfg["rho"])
        grid = Grid(cfg["Nx"], cfg["Na"], cfg["A"], cfg["T"])
        hum = HUMConfig(cfg["epsilon"], cfg["theta"], cfg["cg_tol"], cfg["cg_max_iters"], cfg["variant"],
                        cfg["rho"], cfg["krylov"])
        fp = FixedPointConfig(cfg["damping"], cfg["fp_tol"], cfg["max_outer_iters"], cfg["initial_p"])
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from None
    m0 = initial_field(grid, cfg["m0_amplitude"], cfg["m0_mode"], cfg["m0_ages"])
    f0 = initial_field(grid, cfg["f0_amplitude"], cfg["f0_mode"], cfg["f0_ages"])
    return Scenario(cfg, rates, windows, grid, hum, fp, m0, f0)


def initial_field(grid: Grid, amplitude: float, mode: int, ages) -> np.ndarray:
    """``amplitude * sin(mode pi x) * bump(a)``, with age bounds given as fractions of ``A``."""
    lo, hi = ages
    return amplitude * np.outer(np.sin(mode * np.pi * grid.x), SinBump(lo * grid.A, hi * grid.A)(grid.ages))


def validate_config(cfg: dict):
    sc = build_scenario(cfg)
    return sc, validate(sc.rates, sc.windows, sc.grid.T)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

@dataclass
class RunArtifacts:
    summary: dict
    files: list = field(default_factory=list)
    exit_code: int = EXIT_PASS


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else str(float(v))  # "inf" / "nan" keep the file valid JSON
    return v


def dump_summary(summary: dict) -> str:
    return json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n"


def _write_csv(path: Path, header, rows, chash: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + ["config_hash"])
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row] + [chash])


def _field_rows(grid: Grid, m, f):
    for j, x in enumerate(grid.x):
        for i, a in enumerate(grid.ages):
            yield (x, a, m[j, i], f[j, i])


def _trace_rows(grid: Grid, traj):
    for k, t in enumerate(grid.times):
        for j, x in enumerate(grid.x):
            yield (t, x, traj.m[k, j, 0], traj.f[k, j, 0], traj.M[j, k])


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def _controlled_summary(sc: Scenario, m_final, f_final) -> dict:
    g = sc.grid
    tm, tf = target_masks(g, sc.hum)
    n_m0, n_f0 = norm(sc.m0, g), norm(sc.f0, g)
    return {
        "final_norm_m": norm(m_final * tm, g),
        "final_norm_f": norm(f_final * tf, g),
        "final_ratio_m": _ratio(norm(m_final * tm, g), n_m0),
        "final_ratio_f": _ratio(norm(f_final * tf, g), n_f0),
        "initial_norm_m": n_m0,
        "initial_norm_f": n_f0,
        "targets_m": bool(tm.any()),
        "targets_f": bool(tf.any()),
    }


def _followup(sc: Scenario, m_final, f_final) -> dict:
    """Uncontrolled nonlinear run of length ``A`` from the controlled final state."""
    g = sc.grid
    gA = Grid(g.Nx, g.Na, g.A, g.A)
    tr = solve(ForwardProblem(sc.rates, gA, m_final, f_final))
    total0 = math.hypot(norm(sc.m0, g), norm(sc.f0, g))
    totalA = math.hypot(norm(tr.m[-1], g), norm(tr.f[-1], g))
    return {"followup_total_norm": totalA, "followup_ratio": _ratio(totalA, total0)}


def _threshold_failures(cfg: dict, s: dict) -> list[str]:
    bad = []
    if "final_ratio_m" in s and s.get("targets_m") and s["final_ratio_m"] > cfg["max_final_ratio_m"]:
        bad.append(f"final_ratio_m={s['final_ratio_m']:.3e} > {cfg['max_final_ratio_m']:g}")
    if "final_ratio_f" in s and s.get("targets_f") and s["final_ratio_f"] > cfg["max_final_ratio_f"]:
        bad.append(f"final_ratio_f={s['final_ratio_f']:.3e} > {cfg['max_final_ratio_f']:g}")
    if s.get("fp_converged") is False:
        bad.append("fixed point did not converge")
    if s.get("cg_converged") is False:
        bad.append("Krylov solve did not converge")
    if "followup_ratio" in s and s["followup_ratio"] > cfg["max_followup_ratio"]:
        bad.append(f"followup_ratio={s['followup_ratio']:.3e} > {cfg['max_followup_ratio']:g}")
    if "observable" in s and s["observable"] != cfg["expect_observable"]:
        bad.append(f"observable={s['observable']} but expect_observable={cfg['expect_observable']}")
    return bad


def _run_fixpoint(sc: Scenario, out: Path | None, chash: str):
    res = iterate(sc.rates, sc.grid, sc.windows, (sc.m0, sc.f0), sc.fp, sc.hum)
    s = {**res.hum.summary(), **res.summary(), **_controlled_summary(sc, res.nonlinear.m[-1], res.nonlinear.f[-1])}
    s["fp_residual_history"] = res.residual_history
    s["cg_residual_final"] = res.hum.residual_history[-1]
    if sc.cfg["followup"]:
        s.update(_followup(sc, res.nonlinear.m[-1], res.nonlinear.f[-1]))
    files = []
    if out is not None:
        g = sc.grid
        _write_csv(out / "final_state.csv", ["x", "a", "m", "f"], _field_rows(g, res.nonlinear.m[-1], res.nonlinear.f[-1]), chash)
        _write_csv(out / "traces.csv", ["t", "x", "m_age0", "f_age0", "M"], _trace_rows(g, res.nonlinear), chash)
        _write_csv(out / "residuals.csv", ["iteration", "fp_residual"], enumerate(res.residual_history, 1), chash)
        _write_csv(out / "cg_residuals.csv", ["iteration", "relative_residual"], enumerate(res.hum.residual_history), chash)
        files += ["final_state.csv", "traces.csv", "residuals.csv", "cg_residuals.csv"]
    return s, files


def _run_hum(sc: Scenario, out: Path | None, chash: str):
    res = synthesize(sc.rates, sc.grid, sc.windows, sc.cfg["frozen_p"], (sc.m0, sc.f0), sc.hum)
    traj = res.trajectory
    s = {**res.summary(), **_controlled_summary(sc, traj.m[-1], traj.f[-1])}
    s["cg_residual_final"] = res.residual_history[-1]
    if sc.cfg["followup"]:
        s.update(_followup(sc, traj.m[-1], traj.f[-1]))
    files = []
    if out is not None:
        g = sc.grid
        _write_csv(out / "final_state.csv", ["x", "a", "m", "f"], _field_rows(g, traj.m[-1], traj.f[-1]), chash)
        _write_csv(out / "traces.csv", ["t", "x", "m_age0", "f_age0", "M"], _trace_rows(g, traj), chash)
        _write_csv(out / "cg_residuals.csv", ["iteration", "relative_residual"], enumerate(res.residual_history), chash)
        files += ["final_state.csv", "traces.csv", "cg_residuals.csv"]
    return s, files


def _run_probe(sc: Scenario, out: Path | None, chash: str):
    cfg = sc.cfg
    probes = ProbeSet.generate(sc.grid, cfg["seed"], cfg["probe_random"])
    rep = probe_report(sc.rates, sc.grid, sc.windows, cfg["probe_p"], probes)
    s = {f"probe_{k}": v for k, v in rep.summary().items()}
    observable = math.isfinite(rep.max_ratio)
    if cfg["witness"]:
        r, degenerate = observability_ratio(sc.rates, sc.grid, sc.windows, cfg["probe_p"],
                                            unobservable_witness(sc.grid, sc.windows))
        s["witness_ratio"] = r
        s["witness_degenerate"] = degenerate
        observable = observable and math.isfinite(r)
    s["observable"] = observable
    files = []
    if out is not None:
        rows = [(lab, r, n, o, int(d)) for lab, r, n, o, d in
                zip(rep.labels, rep.ratios, rep.numerators, rep.observations, rep.degenerate)]
        _write_csv(out / "probes.csv", ["label", "ratio", "initial_energy", "observation_energy", "degenerate"], rows, chash)
        files.append("probes.csv")
    return s, files


def _finish(summary: dict, files: list, out: Path | None, code: int) -> RunArtifacts:
    summary["status"] = {EXIT_PASS: "pass", EXIT_THRESHOLD: "threshold-failure",
                         EXIT_CONFIG: "config-error", EXIT_SOLVER: "solver-abort"}[code]
    if out is not None:
        (out / "summary.json").write_text(dump_summary(summary))
        files = ["config.toml", *files, "summary.json"]
    return RunArtifacts(summary, files, code)


def run(config, out=None, seed: int | None = None, pipeline: str | None = None) -> RunArtifacts:
    """Validate and execute a scenario; writes artifacts when ``out`` is given."""
    cfg = dict(load_config(config) if isinstance(config, (str, Path)) else config)
    if seed is not None:
        cfg["seed"] = int(seed)
    if pipeline is not None:
        cfg["pipeline"] = pipeline
    sc, report = validate_config(cfg)
    chash = config_hash(cfg)
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.toml").write_text(echo_config(cfg))
    summary = {"name": cfg["name"], "pipeline": cfg["pipeline"], "variant": cfg["variant"],
               "seed": cfg["seed"], "config_hash": chash,
               "validation": {c.name: c.passed for c in report.checks}}
    # probing below the admissible horizon is the point of some probe scenarios
    fatal = [c for c in report.failures if not (cfg["pipeline"] == "probe" and c.name == "time")]
    if fatal:
        summary["errors"] = [f"{c.name}: {c.detail}" for c in fatal]
        return _finish(summary, [], out, EXIT_CONFIG)
    runner = {"fixpoint": _run_fixpoint, "hum": _run_hum, "probe": _run_probe}[cfg["pipeline"]]
    try:
        with np.errstate(over="raise", invalid="raise"):
            body, files = runner(sc, out, chash)
    except (SolverError, FloatingPointError) as exc:
        summary["errors"] = [f"solver abort: {exc}"]
        return _finish(summary, [], out, EXIT_SOLVER)
    summary.update(body)
    bad = _threshold_failures(cfg, summary)
    if bad:
        summary["errors"] = bad
    return _finish(summary, files, out, EXIT_THRESHOLD if bad else EXIT_PASS)


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

def manufactured_error(K: float, Nx: int, Na: int, A: float, T: float, amplitude: float = 1.0) -> float:
    """L2 error at ``T`` against ``m = e^{-K pi^2 t} sin(pi x) g(a - t)`` (no mortality, no births)."""
    g = Grid(Nx, Na, A, T)
    bump = SinBump(0.1 * A, 0.6 * A)
    rates = RateTable(A, 0.5, K, K, Survival(A, 0.0, 0.0), Survival(A, 0.0, 0.0),
                      BirthRate(SinBump(0.5 * A, 0.95 * A, 0.0)), SinBump(0.05 * A, 0.95 * A), 0.0)
    m0 = amplitude * np.outer(np.sin(np.pi * g.x), bump(g.ages))
    tr = solve(ForwardProblem(rates, g, m0, g.zeros(), frozen_p=0.0))
    exact = amplitude * math.exp(-K * math.pi**2 * T) * np.outer(np.sin(np.pi * g.x), bump(g.ages - T))
    return norm(tr.m[-1] - exact, g)


def _orders(errors):
    out = [None]
    for e0, e1 in zip(errors[:-1], errors[1:]):
        out.append(math.log2(e0 / e1) if e0 > 0 and e1 > 0 else None)
    return out


def convergence_study(config, levels: int = 3) -> dict:
    """Joint dt/dx halving on the scenario's ``(A, T)`` and spatial refinement at tiny ``dt``."""
    cfg = dict(load_config(config) if isinstance(config, (str, Path)) else config)
    if levels < 2:
        raise ConfigError("a convergence study needs at least 2 levels", path=cfg.get("_path"))
    K, amp = cfg["study_K"], cfg["study_amplitude"]
    A, T = cfg["A"], cfg["T"]
    temporal = []
    for lv in range(levels):
        Nx, Na = (cfg["Nx"] + 1) * 2**lv - 1, cfg["Na"] * 2**lv
        temporal.append({"level": lv, "Nx": Nx, "Na": Na, "dx": 1.0 / (Nx + 1), "dt": A / Na,
                         "error": manufactured_error(K, Nx, Na, A, T, amp)})
    # tiny dt: short age span and horizon, dt = 1e-4
    As, Ts, Nas = 0.1, 0.01, 1000
    spatial = []
    for lv in range(levels):
        Nx = 8 * 2**lv - 1
        spatial.append({"level": lv, "Nx": Nx, "Na": Nas, "dx": 1.0 / (Nx + 1), "dt": As / Nas,
                        "error": manufactured_error(K, Nx, Nas, As, Ts, amp)})
    for table in (temporal, spatial):
        for row, order in zip(table, _orders([r["error"] for r in table])):
            row["order"] = order
    return {"temporal": temporal, "spatial": spatial, "K": K, "amplitude": amp, "config_hash": config_hash(cfg)}


def _study_failures(cfg: dict, study: dict) -> list[str]:
    bad = []
    for kind, key in (("temporal", "min_time_order"), ("spatial", "min_space_order")):
        orders = [r["order"] for r in study[kind] if r["order"] is not None]
        if orders and orders[-1] < cfg[key]:
            bad.append(f"{kind} order {orders[-1]:.3f} < {cfg[key]}")
    return bad


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _default_out(cfg: dict, verb: str) -> Path:
    return Path("popctrl-out") / f"{cfg['name']}-{verb}"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="popctrl", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=["validate", "run", "probe", "study", "list"])
    ap.add_argument("--config", help="scenario TOML path or bundled scenario name")
    ap.add_argument("--out", help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--level", type=int, default=3, help="refinement levels for 'study'")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.verb == "list":
        print("\n".join(bundled_scenarios()))
        return EXIT_PASS
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.verb == "validate":
            _, report = validate_config(cfg)
            print(report.summary())
            return EXIT_PASS if report.ok else EXIT_CONFIG
        out = Path(args.out) if args.out else _default_out(cfg, args.verb)
        if args.verb == "study":
            study = convergence_study(cfg, args.level)
            out.mkdir(parents=True, exist_ok=True)
            rows = [(kind, r["level"], r["Nx"], r["Na"], r["dx"], r["dt"], r["error"],
                     "" if r["order"] is None else r["order"])
                    for kind in ("temporal", "spatial") for r in study[kind]]
            _write_csv(out / "study.csv", ["kind", "level", "Nx", "Na", "dx", "dt", "error", "order"],
                       rows, study["config_hash"])
            bad = _study_failures(cfg, study)
            study["status"] = "threshold-failure" if bad else "pass"
            (out / "summary.json").write_text(dump_summary(study))
            print(dump_summary(study), end="")
            return EXIT_THRESHOLD if bad else EXIT_PASS
        art = run(cfg, out, pipeline="probe" if args.verb == "probe" else None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(dump_summary(art.summary), end="")
    for msg in art.summary.get("errors", []):
        print(f"  {msg}", file=sys.stderr)
    return art.exit_code


if __name__ == "__main__":
    sys.exit(main())
