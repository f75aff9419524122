"""Experiment drivers: configuration, dispatch, reports and CSV artifacts.

Each experiment takes a single JSON config document, writes report.json plus CSV
data into its output directory, and returns an exit status: 0 all checks passed,
1 checks failed, 2 unusable config, 3 numerical abort.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import coupling as cpl
from .cn import crank_nicolson_oracle
from .energy import FormDomainError
from .grids import (
    AdmissiblePair,
    GraphFunction,
    NormDomainError,
    StarGrid,
    exponential_data,
    gaussian_data,
    lp_norm,
    mixed_norm,
    read_csv,
    sech_data,
    write_csv,
)
from .nls import MassDriftError, NlsParams, ResidualGrowthError, nls_solve, regularized_nonlinearity
from .propagator import (
    PlanError,
    StripViolationError,
    WindowEscapeError,
    boundary_residual,
    check_window,
    make_plan,
    propagate_ac,
    propagate_full,
    regularizer_apply,
)
from .spectrum import SpectrumSearchError, find_bound_states, project_ac

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

EXPERIMENT_KINDS = (
    "check-coupling",
    "spectrum",
    "propagate",
    "decay-scan",
    "strichartz",
    "nls",
    "regularize-test",
)


class ConfigError(ValueError):
    """Config cannot be resolved into experiment inputs."""


@dataclass
class ExperimentConfig:
    kind: str
    coupling: dict
    grid: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    times: dict = field(default_factory=dict)
    nls: dict = field(default_factory=dict)
    strichartz: dict = field(default_factory=dict)
    regularize: dict = field(default_factory=dict)
    project: bool = True
    seed: int = 42
    out_dir: str = "."

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        kind = obj.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
        if "coupling" not in obj:
            raise ConfigError("config requires a 'coupling' entry")
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return ExperimentConfig(**obj)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "coupling": self.coupling,
            "grid": self.grid,
            "initial": self.initial,
            "times": self.times,
            "nls": self.nls,
            "strichartz": self.strichartz,
            "regularize": self.regularize,
            "project": self.project,
            "seed": self.seed,
            "out_dir": self.out_dir,
        }


def worker_count() -> int:
    env = os.environ.get("SGS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SGS_THREADS must be an integer, got {env!r}") from None
    return min(4, os.cpu_count() or 1)


def resolve_coupling(spec: dict) -> cpl.CouplingPair:
    try:
        return cpl.CouplingPair.from_json_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad coupling spec: {exc}") from exc


def resolve_grid(spec: dict, n: int) -> StarGrid:
    try:
        h = float(spec.get("h", 0.02))
        if "m" in spec:
            return StarGrid(n=n, h=h, m=int(spec["m"]))
        length = float(spec.get("length", 40.0))
        return StarGrid.from_length(n=n, h=h, length=length)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid spec: {exc}") from exc


def resolve_initial(spec: dict, grid: StarGrid) -> GraphFunction:
    family = spec.get("family", "gaussian")
    amp = complex(spec.get("amplitude", 1.0))
    try:
        if family == "gaussian":
            return gaussian_data(
                grid, center=float(spec.get("center", 3.0)), width=float(spec.get("width", 1.0)), amplitude=amp
            )
        if family == "sech":
            return sech_data(grid, amplitude=amp, scale=float(spec.get("scale", 1.0)))
        if family == "exponential":
            return exponential_data(grid, rate=float(spec.get("rate", 1.0)), amplitude=amp)
        if family == "csv":
            u = read_csv(spec["path"])
            if u.grid != grid:
                raise ConfigError(f"CSV grid {u.grid} does not match configured grid {grid}")
            return u
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad initial data spec: {exc}") from exc
    raise ConfigError(f"unknown initial data family {family!r}")


def resolve_times(spec: dict) -> np.ndarray:
    kind = spec.get("spacing", "log")
    start = float(spec.get("start", 1.0))
    stop = float(spec.get("stop", 100.0))
    points = int(spec.get("points", 20))
    if "values" in spec:
        t = np.asarray([float(v) for v in spec["values"]])
    elif kind == "log":
        if start <= 0:
            raise ConfigError("log spacing requires start > 0")
        t = np.geomspace(start, stop, points)
    elif kind == "linear":
        t = np.linspace(start, stop, points)
    else:
        raise ConfigError(f"unknown time spacing {kind!r}")
    if t.size == 0 or np.any(np.diff(t) <= 0):
        raise ConfigError("time grid must be nonempty and strictly increasing")
    return t


# --- experiments -----------------------------------------------------------


def run_check_coupling(config: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    pair = resolve_coupling(config.coupling)
    report = cpl.validate(pair)
    metrics: dict[str, Any] = {
        "rank_ok": report.rank_ok,
        "hermiticity_ok": report.hermiticity_ok,
        "rank_defect": report.rank_defect,
        "smallest_singular_value": report.smallest_singular_value,
        "hermiticity_residual": report.hermiticity_residual,
    }
    checks = {"H1": report.rank_ok, "H2": report.hermiticity_ok}
    if report.ok:
        unit_res = []
        for k in (0.5, 1.0, 2.0, 7.0):
            G = cpl.scattering_matrix(pair, k).G
            unit_res.append(float(np.abs(G @ G.conj().T - np.eye(pair.n)).max()))
        metrics["max_unitarity_residual"] = max(unit_res)
        checks["scattering_unitary"] = max(unit_res) < 1e-10
        dec = cpl.projector_decomposition(pair)
        metrics["dims"] = {
            "dirichlet": int(round(np.trace(dec.P_D).real)),
            "neumann": int(round(np.trace(dec.P_N).real)),
            "robin": int(round(np.trace(dec.P_R).real)),
        }
    return metrics, checks


def run_spectrum(config: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    pair = resolve_coupling(config.coupling)
    spec = find_bound_states(pair)
    sv_A = np.linalg.svd(pair.A, compute_uv=False)
    metrics = {
        "spectrum": spec.to_json_dict(),
        "vertex_matrix_singular": bool(sv_A[-1] <= 1e-12 * max(sv_A[0], 1e-300)),
    }
    (out / "spectrum.json").write_text(json.dumps(spec.to_json_dict(), indent=2))
    checks = {"multiplicity_matches_count": True}  # find_bound_states raises otherwise
    return metrics, checks


def run_propagate(config: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    pair = resolve_coupling(config.coupling)
    grid = resolve_grid(config.grid, n=pair.n)
    u0 = resolve_initial(config.initial, grid)
    check_window(u0, rtol=1e-8)
    spec = find_bound_states(pair)
    times = resolve_times(config.times)
    plan = make_plan(pair, grid, t_max=float(times.max()))
    evolve = propagate_ac if config.project else propagate_full
    n0 = lp_norm(project_ac(spec, u0), 2.0) if config.project else lp_norm(u0, 2.0)

    rows = []
    worst_drift = 0.0
    worst_bc = 0.0
    for t in times:
        u = evolve(plan, spec, u0, float(t))
        check_window(u, rtol=1e-6)
        write_csv(u, out / f"snapshot_t{t:.6g}.csv", t=float(t))
        n2 = lp_norm(u, 2.0)
        bc = boundary_residual(pair, u)
        worst_drift = max(worst_drift, abs(n2 - n0) / max(n0, 1e-30))
        worst_bc = max(worst_bc, bc)
        rows.append((float(t), lp_norm(u, math.inf), n2, bc))
    _write_table(out / "norms.csv", ["t", "sup_norm", "l2_norm", "bc_residual"], rows)
    metrics = {"norm_drift": worst_drift, "max_bc_residual": worst_bc}
    checks = {"norm_conserved": worst_drift < 1e-4, "bc_residual_small": worst_bc < 1e-4}
    return metrics, checks


def _fit_log_slope(t: np.ndarray, y: np.ndarray) -> float:
    mask = t >= 1.0  # transient regime excluded from the asymptotic fit
    lt, ly = np.log(t[mask]), np.log(y[mask])
    slope, _ = np.polyfit(lt, ly, 1)
    return float(slope)


def run_decay_scan(config: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    pair = resolve_coupling(config.coupling)
    grid = resolve_grid(config.grid, n=pair.n)
    u0 = resolve_initial(config.initial, grid)
    check_window(u0, rtol=1e-8)
    spec = find_bound_states(pair)
    times = resolve_times(config.times)
    plan = make_plan(pair, grid, t_max=float(times.max()))
    evolve = propagate_ac if config.project else propagate_full
    u0_l1 = lp_norm(u0, 1.0)

    def snap(t: float) -> tuple[float, float, float]:
        u = evolve(plan, spec, u0, t)
        check_window(u, rtol=1e-6)
        return (t, lp_norm(u, math.inf), lp_norm(u, 2.0))

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(snap, [float(t) for t in times]))

    _write_table(out / "decay.csv", ["t", "sup_norm", "l2_norm"], rows)
    t_arr = np.array([r[0] for r in rows])
    sup = np.array([r[1] for r in rows])
    slope = _fit_log_slope(t_arr, sup)
    constant = float(np.max(np.sqrt(t_arr) * sup) / max(u0_l1, 1e-30))
    metrics = {"fitted_exponent": slope, "dispersive_constant": constant, "projected": config.project}
    checks = {"fit_finite": math.isfinite(slope)}
    return metrics, checks


def _resolve_pairs(entries: list) -> list[AdmissiblePair]:
    pairs = []
    for ent in entries:
        q, r = ent
        q = math.inf if q in ("inf", None) else q
        r = math.inf if r in ("inf", None) else r
        try:
            pairs.append(AdmissiblePair(q, r))
        except NormDomainError as exc:
            raise ConfigError(f"non-admissible exponent pair {ent}: {exc}") from exc
    return pairs


def run_strichartz(config: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    pair = resolve_coupling(config.coupling)
    grid = resolve_grid(config.grid, n=pair.n)
    u0 = resolve_initial(config.initial, grid)
    check_window(u0, rtol=1e-8)
    spec = find_bound_states(pair)
    entries = config.strichartz.get("pairs", [[8, 4], [12, 3], ["inf", 2]])
    pairs = _resolve_pairs(entries)
    window = float(config.strichartz.get("window", 50.0))
    n_snap = int(config.strichartz.get("snapshots", 120))

    u_ac = project_ac(spec, u0)
    ref = lp_norm(u_ac, 2.0)
    plan = make_plan(pair, grid, t_max=2.0 * window)

    def norms_over(T: float) -> dict[str, float]:
        times = np.linspace(0.0, T, n_snap + 1)

        def snap(t: float) -> GraphFunction:
            u = propagate_ac(plan, spec, u0, t)
            check_window(u, rtol=1e-6)
            return u

        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            snaps = list(pool.map(snap, [float(t) for t in times]))
        return {
            _pair_label(p): mixed_norm(snaps, times, p) / max(ref, 1e-30) for p in pairs
        }

    ratios = norms_over(window)
    ratios_doubled = norms_over(2.0 * window)
    rows = [
        (_pair_label(p), ratios[_pair_label(p)], ratios_doubled[_pair_label(p)])
        for p in pairs
    ]
    _write_table(out / "strichartz.csv", ["pair", "ratio", "ratio_doubled_window"], rows)

    stability = {
        lab: abs(rd - r) / max(r, 1e-30)
        for (lab, r, rd) in rows
    }
    metrics = {"ratios": ratios, "ratios_doubled": ratios_doubled, "relative_change": stability}
    checks = {"ratios_finite": all(math.isfinite(v) for v in ratios.values())}
    checks["stable_under_doubling"] = all(v < 0.10 for v in stability.values())
    for p in pairs:
        if p.q == math.inf and p.r == 2:
            checks["energy_pair_ratio_one"] = abs(ratios[_pair_label(p)] - 1.0) < 1e-4
    return metrics, checks


def _pair_label(p: AdmissiblePair) -> str:
    q = "inf" if p.q == math.inf else f"{float(p.q):g}"
    r = "inf" if p.r == math.inf else f"{float(p.r):g}"
    return f"({q},{r})"


def run_nls(config: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    pair = resolve_coupling(config.coupling)
    grid = resolve_grid(config.grid, n=pair.n)
    u0 = resolve_initial(config.initial, grid)
    spec = config.nls
    try:
        params = NlsParams(
            lam=float(spec.get("lambda", 1.0)),
            p=float(spec.get("p", 3.0)),
            dt=float(spec.get("dt", 1e-3)),
            mass_tol=float(spec.get("mass_tol", 1e-7)),
        )
        t_final = float(spec.get("t_final", 1.0))
        snapshot_every = int(spec.get("snapshot_every", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad nls spec: {exc}") from exc

    result = nls_solve(pair, u0, params, t_final, snapshot_every=snapshot_every)
    for t, u in result.snapshots:
        write_csv(u, out / f"nls_t{t:.6g}.csv", t=t)
    _write_table(
        out / "conservation.csv",
        ["t", "mass", "energy"],
        zip(result.log.times, result.log.mass, result.log.energy),
    )
    mass = np.array(result.log.mass)
    drift = float(np.abs(mass - mass[0]).max() / max(mass[0], 1e-30))
    energies = np.array(result.log.energy)
    if np.all(np.isfinite(energies)):
        e_drift = float(np.abs(energies - energies[0]).max() / (1.0 + abs(energies[0])))
    else:
        e_drift = math.nan
    metrics = {"mass_drift": drift, "energy_drift": e_drift, "steps": len(result.log.times) - 1}
    checks = {"mass_conserved": drift < params.mass_tol}
    return metrics, checks


def run_regularize_test(config: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    pair = resolve_coupling(config.coupling)
    grid = resolve_grid(config.grid, n=pair.n)
    u0 = resolve_initial(config.initial, grid)
    eps_ladder = [float(e) for e in config.regularize.get("eps", [0.2, 0.1, 0.05, 0.025])]
    rng = np.random.default_rng(config.seed)

    l2_errors = []
    op_l1 = []
    op_linf = []
    probes = _probe_family(grid, rng, count=8)
    for eps in eps_ladder:
        v = regularizer_apply(pair, u0, eps)
        l2_errors.append(lp_norm(v - u0, 2.0))
        r1 = max(lp_norm(regularizer_apply(pair, w, eps), 1.0) / lp_norm(w, 1.0) for w in probes)
        rinf = max(
            lp_norm(regularizer_apply(pair, w, eps), math.inf) / lp_norm(w, math.inf) for w in probes
        )
        op_l1.append(r1)
        op_linf.append(rinf)

    _write_table(
        out / "regularize.csv",
        ["eps", "l2_error", "op_norm_l1", "op_norm_linf"],
        zip(eps_ladder, l2_errors, op_l1, op_linf),
    )
    metrics = {
        "eps": eps_ladder,
        "l2_errors": l2_errors,
        "op_norm_l1": op_l1,
        "op_norm_linf": op_linf,
    }
    checks = {
        "convergence_monotone": all(a > b for a, b in zip(l2_errors, l2_errors[1:])),
        "uniformly_bounded": max(op_l1 + op_linf) < 10.0,
    }
    return metrics, checks


def _probe_family(grid: StarGrid, rng: np.random.Generator, count: int) -> list[GraphFunction]:
    probes = []
    for _ in range(count):
        c = rng.uniform(1.0, 0.5 * grid.length)
        w = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0, 2 * np.pi, size=grid.n)
        vals = np.exp(1j * phase)[:, None] * np.exp(-(((grid.x - c) / w) ** 2))[None, :]
        probes.append(GraphFunction(grid, vals))
    return probes


def _write_table(path: Path, header: list[str], rows) -> None:
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


_RUNNERS: dict[str, Callable[[ExperimentConfig, Path], tuple[dict, dict]]] = {
    "check-coupling": run_check_coupling,
    "spectrum": run_spectrum,
    "propagate": run_propagate,
    "decay-scan": run_decay_scan,
    "strichartz": run_strichartz,
    "nls": run_nls,
    "regularize-test": run_regularize_test,
}


def run(config: dict | ExperimentConfig, seed: int | None = None, out_dir: str | None = None) -> int:
    """Dispatch one experiment; writes report.json and returns the exit status."""
    try:
        if isinstance(config, dict):
            config = ExperimentConfig.from_dict(config)
        if seed is not None:
            config.seed = int(seed)
        if out_dir is not None:
            config.out_dir = out_dir
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG

    report: dict[str, Any] = {"kind": config.kind, "seed": config.seed, "config": config.to_dict()}
    try:
        metrics, checks = _RUNNERS[config.kind](config, out)
    except ConfigError as exc:
        report["error"] = {"type": "config", "message": str(exc)}
        _write_report(out, report)
        print(f"config error: {exc}")
        return EXIT_CONFIG
    except (
        MassDriftError,
        ResidualGrowthError,
        SpectrumSearchError,
        WindowEscapeError,
        StripViolationError,
        PlanError,
        FormDomainError,
        cpl.PoleError,
        cpl.DegenerateCouplingError,
    ) as exc:
        report["error"] = {"type": "numerical", "message": str(exc)}
        _write_report(out, report)
        print(f"numerical abort: {exc}")
        return EXIT_NUMERICAL
    except (cpl.CouplingError,) as exc:
        report["error"] = {"type": "config", "message": str(exc)}
        _write_report(out, report)
        print(f"config error: {exc}")
        return EXIT_CONFIG

    report["metrics"] = metrics
    report["checks"] = checks
    report["pass"] = all(checks.values())
    _write_report(out, report)
    return EXIT_OK if report["pass"] else EXIT_CHECKS_FAILED


def _write_report(out: Path, report: dict) -> None:
    (out / "report.json").write_text(json.dumps(report, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    raise TypeError(f"cannot serialize {type(obj)}")
