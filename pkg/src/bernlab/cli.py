"""Command-line front end and experiment orchestration.

A flat key-value configuration file (``key = value`` lines, ``#`` comments)
with a strict schema drives every subcommand; unknown keys are rejected by
name.  Flags mirror the configuration keys and override the file.  Exit
codes: 0 success, 2 configuration/validation failure, 3 numerical failure.

Subcommands
-----------
solve       one-phase energy minimization, free boundary, contact/singular sets
flow        harmonic extension, gradient-flow coordinates, invariant residuals
hodograph   compose/invert the minimizer; emit the linearization field
signorini   thin-obstacle minimization for a given datum
frequency   frequency scan of a field: N(r), correction exponent, N(0+)
whitney     stopping-time cube decomposition and its structural checks
blowup      rescaling sequence and homogeneous-profile classification
pipeline    all stages in order, artifacts and a manifest in the output dir
report      re-read a pipeline report, audit the manifest, print a summary
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bernoulli import (
    BernoulliProblem,
    DescentParams,
    extract_sets,
    minimize_J1,
    sharpen,
)
from .blowup import classify_blowup, default_catalog, oracle as homogeneous_oracle, rescale
from .frequency import CutoffProfile, FrequencyConstants, monotonicity_scan
from .grid import HalfBallGrid, ScalarField, read_field_csv, write_field_csv
from .hodograph import (
    HodographInvertibilityError,
    branch_characterization,
    m_hodograph,
    round_trip_residual,
)
from .obstacle import (
    AnalyticObstacle,
    FlowValidityError,
    assemble_coefficients,
    check_flow_invariants,
    ck_extend,
    flow_map,
)
from .signorini import (
    NonlinearityModel,
    SolverParams,
    ThinObstacleProblem,
    minimize_thin_obstacle,
)
from .whitney import WhitneyParams, check_whitney_properties, whitney_decompose

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Configuration file or flag failed validation."""


# -- configuration schema ------------------------------------------------------


def _float_list(text: str) -> tuple:
    try:
        vals = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise ConfigError(f"expected a non-empty number list, got {text!r}")
    return vals


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _optional(parser):
    def parse(text: str):
        if text.strip().lower() in ("", "none"):
            return None
        return parser(text)

    return parse


# key -> (parser, default, validator description, validator)
SCHEMA: dict = {
    "d": (int, 2, "2 or 3", lambda v: v in (2, 3)),
    "n": (int, 64, ">= 8", lambda v: v >= 8),
    "obstacle": (str, "flat", "'flat' or comma-separated coefficients", None),
    "extension_order": (int, 8, ">= 1", lambda v: v >= 1),
    "flow_dt": (float, 1e-3, "in (0, 1e-2]", lambda v: 0 < v <= 1e-2),
    "flow_t_max": (_optional(float), None, "> 0", lambda v: v is None or v > 0),
    "flow_x1_extent": (float, 0.9, "in (0, 1]", lambda v: 0 < v <= 1),
    "flow_x1_samples": (int, 121, ">= 11", lambda v: v >= 11),
    "epsilon": (_optional(float), None, "> 0", lambda v: v is None or v > 0),
    "solver_tol": (float, 1e-6, "> 0", lambda v: v > 0),
    "max_iter": (int, 200, ">= 1", lambda v: v >= 1),
    "upsilon": (float, 0.9, "in (1/2, 1)", lambda v: 0.5 < v < 1.0),
    "C0": (float, 1.0, "> 0", lambda v: v > 0),
    "alpha": (float, 0.25, "in (0, 1/2)", lambda v: 0 < v < 0.5),
    "j_max": (int, 4, ">= 1", lambda v: v >= 1),
    "N0": (_optional(float), None, "> 0", lambda v: v is None or v > 0),
    "c0": (_optional(float), None, "> 0", lambda v: v is None or v > 0),
    "C": (float, 1.0, ">= 0", lambda v: v >= 0),
    "kappa": (float, 0.5, "in (0, 1)", lambda v: 0 < v < 1),
    "tau": (float, 0.05, "> 0", lambda v: v > 0),
    "datum": (str, "halfplane", "'halfplane', 'oracle', or 'file'",
              lambda v: v in ("halfplane", "oracle", "file")),
    "datum_kind": (str, "sin-half", "'cos-even', 'sin-odd', or 'sin-half'",
                   lambda v: v in ("cos-even", "sin-odd", "sin-half")),
    "datum_degree": (float, 1.5, "> 0", lambda v: v > 0),
    "datum_scale": (float, 1.0, "nonzero", lambda v: v != 0),
    "datum_file": (_optional(str), None, "path", None),
    "input_field": (_optional(str), None, "path", None),
    "nonlinearity": (str, "off", "'off' or 'cubic'", lambda v: v in ("off", "cubic")),
    "freq_radii": (_float_list, (0.25, 0.35, 0.45, 0.55, 0.65, 0.75),
                   "radii in (0, 1)", lambda v: all(0 < r < 1 for r in v)),
    "blowup_radii": (_float_list, (0.6, 0.5, 0.4, 0.3),
                     "radii in (0, 1)", lambda v: all(0 < r < 1 for r in v)),
    "slack": (float, 1e-2, ">= 0", lambda v: v >= 0),
    "output_dir": (str, "out", "path", None),
    "seed": (int, 0, ">= 0", lambda v: v >= 0),
}


@dataclass
class ExperimentConfig:
    """Validated flat configuration; fields mirror the schema keys."""

    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError as exc:  # pragma: no cover - programming error guard
            raise AttributeError(name) from exc


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines; comments (#) and blank lines ignored."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def build_config(
    file_entries: dict | None = None, overrides: dict | None = None
) -> ExperimentConfig:
    """Defaults, then config-file entries, then flag overrides; strict keys."""
    values = {key: spec[1] for key, spec in SCHEMA.items()}
    for source in (file_entries or {}, overrides or {}):
        for key, raw in source.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            if raw is None:
                continue
            parser, _, doc, check = SCHEMA[key]
            try:
                val = parser(raw) if isinstance(raw, str) else raw
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"key {key!r}: cannot parse {raw!r}") from exc
            if check is not None and not check(val):
                raise ConfigError(f"key {key!r}: value {val!r} not {doc}")
            values[key] = val
    return ExperimentConfig(values)


# -- shared builders -----------------------------------------------------------


def _build_grid(cfg: ExperimentConfig) -> HalfBallGrid:
    return HalfBallGrid(d=cfg.d, n=cfg.n)


def _build_obstacle(cfg: ExperimentConfig) -> AnalyticObstacle:
    if cfg.obstacle.strip().lower() == "flat":
        return AnalyticObstacle([0.0])
    return AnalyticObstacle(list(_float_list(cfg.obstacle)))


def _build_datum_field(cfg: ExperimentConfig, grid: HalfBallGrid) -> ScalarField:
    """Nodal datum field for the thin-obstacle/analysis subcommands."""
    if cfg.input_field:
        return read_field_csv(cfg.input_field, grid)
    if cfg.datum == "file":
        if not cfg.datum_file:
            raise ConfigError("datum = file requires datum_file")
        return read_field_csv(cfg.datum_file, grid)
    if cfg.datum == "halfplane":
        vals = cfg.datum_scale * np.maximum(grid.coords[-1], 0.0)
        return ScalarField(grid, np.where(grid.in_mask, vals, 0.0))
    orc = homogeneous_oracle(cfg.datum_kind, cfg.datum_degree)
    f = orc.field(grid)
    return ScalarField(grid, cfg.datum_scale * f.values)


def _bernoulli_datum(cfg: ExperimentConfig, grid: HalfBallGrid,
                     obstacle: AnalyticObstacle | None = None):
    if cfg.input_field or cfg.datum == "file":
        return _build_datum_field(cfg, grid)
    if cfg.datum != "halfplane":
        raise ConfigError("solve/hodograph/pipeline accept datum = halfplane or file")
    scale = cfg.datum_scale
    if scale <= 0:
        raise ConfigError("one-phase boundary datum needs datum_scale > 0")
    if obstacle is not None and not obstacle.is_flat:
        # model datum adapted to the curved graph: positive part of the
        # harmonic extension of the obstacle's signed height
        ext = ck_extend(obstacle, order=cfg.extension_order)
        return lambda *coords: scale * np.maximum(
            np.asarray(ext.value(coords[0], np.maximum(coords[-1], 0.0))), 0.0
        )
    return lambda *coords: scale * np.maximum(coords[-1], 0.0)


def _coefficients(cfg: ExperimentConfig, grid: HalfBallGrid, artifacts: dict):
    """Identity coefficients for a flat obstacle; else the flow-based set."""
    obstacle = _build_obstacle(cfg)
    if obstacle.is_flat:
        return assemble_coefficients(None, None, grid), None, None
    ext = ck_extend(obstacle, order=cfg.extension_order)
    x1 = np.linspace(-cfg.flow_x1_extent, cfg.flow_x1_extent, cfg.flow_x1_samples)
    flow = flow_map(ext, x1, dt=cfg.flow_dt, t_max=cfg.flow_t_max)
    artifacts["flow_invariants"] = check_flow_invariants(flow, ext)
    return assemble_coefficients(flow, ext, grid), flow, ext


def _kink_layer(problem: BernoulliProblem, flow, grid: HalfBallGrid) -> float:
    """Height (in flattened coordinates) of the minimizer's smoothing layer
    at the fixed boundary, exempted from the hodograph slope margin."""
    if flow is None:
        return 0.0
    return problem.epsilon / flow.extent + 2.0 * grid.h


def _nonlinearity(cfg: ExperimentConfig) -> NonlinearityModel:
    if cfg.nonlinearity == "cubic":
        return NonlinearityModel.default_cubic()
    return NonlinearityModel.off()


# -- report plumbing -----------------------------------------------------------


def _json_default(obj):
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def emit_report(report: dict, path: str | Path) -> Path:
    """Deterministic JSON report: sorted keys, fixed float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    )
    return path


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_frequency_csv(path: Path, scan: dict) -> None:
    lines = ["r,N,g"]
    for r, nval, gval in zip(scan["radii"], scan["N"], scan["g"]):
        lines.append(f"{r:.17g},{nval:.17g},{gval:.17g}")
    path.write_text("\n".join(lines) + "\n")


def read_frequency_csv(path: str | Path) -> dict:
    rows = Path(path).read_text().strip().splitlines()
    if rows[0] != "r,N,g":
        raise ConfigError(f"unexpected frequency CSV header {rows[0]!r}")
    data = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
    return {"radii": data[:, 0], "N": data[:, 1], "g": data[:, 2]}


# -- subcommands ---------------------------------------------------------------


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg: ExperimentConfig) -> dict:
    grid = _build_grid(cfg)
    obstacle = _build_obstacle(cfg)
    problem = BernoulliProblem(obstacle, _bernoulli_datum(cfg, grid, obstacle), grid,
                               epsilon=cfg.epsilon)
    sol = sharpen(minimize_J1(problem, DescentParams(tol=cfg.solver_tol,
                                                     max_iter=cfg.max_iter)))
    contact, singular = extract_sets(sol, tau=cfg.tau)
    out = _out_dir(cfg)
    write_field_csv(sol.u, out / "u.csv")
    report = {
        "energy": sol.energy,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "epsilon": problem.epsilon,
        "free_boundary_columns": len(sol.free_boundary),
        "contact_columns": len(contact),
        "singular_columns": len(singular),
        "files": ["u.csv", "u.csv.json"],
    }
    emit_report(report, out / "solve.json")
    return report


def cmd_flow(cfg: ExperimentConfig) -> dict:
    obstacle = _build_obstacle(cfg)
    ext = ck_extend(obstacle, order=cfg.extension_order)
    x1 = np.linspace(-cfg.flow_x1_extent, cfg.flow_x1_extent, cfg.flow_x1_samples)
    flow = flow_map(ext, x1, dt=cfg.flow_dt, t_max=cfg.flow_t_max)
    report = {
        "extension_order": cfg.extension_order,
        "extent": flow.extent,
        "invariants": check_flow_invariants(flow, ext),
    }
    emit_report(report, _out_dir(cfg) / "flow.json")
    return report


def cmd_hodograph(cfg: ExperimentConfig) -> dict:
    grid = _build_grid(cfg)
    obstacle = _build_obstacle(cfg)
    problem = BernoulliProblem(obstacle, _bernoulli_datum(cfg, grid, obstacle), grid,
                               epsilon=cfg.epsilon)
    sol = sharpen(minimize_J1(problem, DescentParams(tol=cfg.solver_tol,
                                                     max_iter=cfg.max_iter)))
    artifacts: dict = {}
    _, flow, ext = _coefficients(cfg, grid, artifacts)
    result = m_hodograph(sol.u, flow, ext,
                         boundary_layer=_kink_layer(problem, flow, grid))
    out = _out_dir(cfg)
    write_field_csv(result.w, out / "w.csv")
    sidecar_path = out / "w.csv.json"
    sidecar = json.loads(sidecar_path.read_text())
    sidecar["footprint"] = [
        [int(i) for i in idx] for idx in np.argwhere(result.footprint)
    ]
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    branches = branch_characterization(result, tau=cfg.tau)
    report = {
        "margin": result.margin,
        "round_trip_residual": round_trip_residual(result),
        "footprint_nodes": int(np.count_nonzero(result.footprint)),
        "contact_flat_nodes": len(branches["contact"]),
        "branch_flat_nodes": len(branches["branch"]),
        "flat_transform": result.flat_transform,
        "files": ["w.csv", "w.csv.json"],
    }
    emit_report(report, out / "hodograph.json")
    return report


def cmd_signorini(cfg: ExperimentConfig) -> dict:
    grid = _build_grid(cfg)
    artifacts: dict = {}
    coeffs, _, _ = _coefficients(cfg, grid, artifacts)
    problem = ThinObstacleProblem(
        coefficients=coeffs,
        nonlinearity=_nonlinearity(cfg),
        datum=_build_datum_field(cfg, grid),
    )
    sol = minimize_thin_obstacle(problem, SolverParams(tol=cfg.solver_tol,
                                                       max_iter=cfg.max_iter))
    out = _out_dir(cfg)
    write_field_csv(sol.w, out / "w_thin.csv")
    report = {
        "energy": sol.energy,
        "energy_quadratic": sol.energy_quadratic,
        "energy_correction": sol.energy_correction,
        "kkt_residual": sol.kkt_residual,
        "iterations": sol.iterations,
        "active_flat_nodes": int(np.count_nonzero(sol.active_nodes)),
        "files": ["w_thin.csv", "w_thin.csv.json"],
    }
    emit_report(report, out / "signorini.json")
    return report


def _analysis_field(cfg: ExperimentConfig, grid, coeffs) -> ScalarField:
    """Field to analyze: an explicit input field, or the thin-obstacle
    minimizer of the configured datum."""
    if cfg.input_field:
        return read_field_csv(cfg.input_field, grid)
    problem = ThinObstacleProblem(
        coefficients=coeffs,
        nonlinearity=_nonlinearity(cfg),
        datum=_build_datum_field(cfg, grid),
    )
    sol = minimize_thin_obstacle(problem, SolverParams(tol=cfg.solver_tol,
                                                       max_iter=cfg.max_iter))
    return sol.w


def cmd_frequency(cfg: ExperimentConfig) -> dict:
    grid = _build_grid(cfg)
    artifacts: dict = {}
    coeffs, _, _ = _coefficients(cfg, grid, artifacts)
    w = _analysis_field(cfg, grid, coeffs)
    scan = monotonicity_scan(
        w, coeffs, cfg.freq_radii,
        cutoff=CutoffProfile(upsilon=cfg.upsilon),
        constants=FrequencyConstants(C=cfg.C, kappa=cfg.kappa),
        slack=cfg.slack,
    )
    out = _out_dir(cfg)
    _write_frequency_csv(out / "frequency.csv", scan)
    report = {
        "radii": list(map(float, scan["radii"])),
        "N": list(map(float, scan["N"])),
        "minimal_C": scan["minimal_C"],
        "N_origin_estimate": scan["N_origin_estimate"],
        "truncated_degenerate": bool(scan.get("truncated", False)),
        "files": ["frequency.csv"],
    }
    emit_report(report, out / "frequency.json")
    return report


def cmd_whitney(cfg: ExperimentConfig) -> dict:
    grid = _build_grid(cfg)
    artifacts: dict = {}
    coeffs, _, _ = _coefficients(cfg, grid, artifacts)
    w = _analysis_field(cfg, grid, coeffs)
    params = WhitneyParams(C0=cfg.C0, alpha=cfg.alpha, j_max=cfg.j_max,
                           N0=cfg.N0, c0=cfg.c0)
    dec = whitney_decompose(w, params)
    props = check_whitney_properties(dec, w, tau=5.0 * grid.h)
    report = {
        "cubes": len(dec.all_cubes()),
        "excess_cubes": len(dec.excess_cubes),
        "height_cubes": len(dec.height_cubes),
        "residual_cubes": len(dec.residual_cubes),
        "finest_generation": dec.finest_generation(),
        "gamma_nodes": int(np.count_nonzero(dec.gamma_nodes)),
        "cover_exact": props["cover_disjoint"]["cover"],
        "disjoint": props["cover_disjoint"]["disjoint"],
        "w_within_tau_on_gamma": props["vanishing_on_gamma"]["w_within_tau"],
        "grad_within_sqrt_tau_on_gamma":
            props["vanishing_on_gamma"]["grad_within_sqrt_tau"],
    }
    emit_report(report, _out_dir(cfg) / "whitney.json")
    return report


def cmd_blowup(cfg: ExperimentConfig) -> dict:
    grid = _build_grid(cfg)
    artifacts: dict = {}
    coeffs, _, _ = _coefficients(cfg, grid, artifacts)
    w = _analysis_field(cfg, grid, coeffs)
    seq = rescale(w, cfg.blowup_radii, coeffs)
    cls = classify_blowup(seq)
    report = {
        "radii": list(map(float, seq.radii)),
        "skipped_radii": list(map(float, seq.skipped_radii)),
        "matched_kind": cls["best_oracle"].kind,
        "matched_degree": cls["best_oracle"].degree,
        "amplitude": cls["amplitude"],
        "relative_misfit": cls["relative_misfit"],
        "frequency_at_origin": cls["frequency_at_origin"],
        "degree_consistent": cls["degree_consistent"],
        "flags": list(cls["flags"]),
        "all_misfits": {
            f"{row['oracle'].kind}-{row['oracle'].degree:g}":
                row["relative_misfit"]
            for row in cls["all_matches"]
        },
    }
    emit_report(report, _out_dir(cfg) / "blowup.json")
    return report


# -- pipeline ------------------------------------------------------------------


@dataclass
class PipelineReport:
    stages: list
    manifest: list
    headline: dict

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "manifest": self.manifest,
            "headline": self.headline,
        }


def run_pipeline(cfg: ExperimentConfig) -> PipelineReport:
    """Execute all stages in order; a failing stage leaves earlier artifacts
    on disk and marks the report.  Every produced file enters the manifest."""
    out = _out_dir(cfg)
    stages: list = []
    manifest: list = []
    headline: dict = {}
    state: dict = {}

    def record(name: str, status: str, detail: str = "", files=()) -> None:
        for f in files:
            manifest.append({"file": f, "sha256": _file_hash(out / f)})
        stages.append({"name": name, "status": status, "detail": detail})

    def run_stage(name: str, fn, files=()) -> bool:
        try:
            fn()
        except (FlowValidityError, HodographInvertibilityError, RuntimeError,
                ArithmeticError) as exc:
            record(name, "failed", str(exc))
            return False
        except ValueError as exc:
            record(name, "degenerate", str(exc))
            return False
        record(name, "ok", files=files)
        return True

    grid = _build_grid(cfg)
    obstacle = _build_obstacle(cfg)

    def stage_solve():
        problem = BernoulliProblem(obstacle, _bernoulli_datum(cfg, grid, obstacle), grid,
                                   epsilon=cfg.epsilon)
        state["one_phase_problem"] = problem
        sol = sharpen(minimize_J1(problem, DescentParams(
            tol=cfg.solver_tol, max_iter=cfg.max_iter)))
        contact, singular = extract_sets(sol, tau=cfg.tau)
        write_field_csv(sol.u, out / "u.csv")
        state.update(u=sol.u, contact=contact, singular=singular)
        headline["one_phase_energy"] = sol.energy
        headline["one_phase_residual"] = sol.residual

    def stage_coefficients():
        artifacts: dict = {}
        coeffs, flow, ext = _coefficients(cfg, grid, artifacts)
        state.update(coeffs=coeffs, flow=flow, ext=ext)
        if "flow_invariants" in artifacts:
            headline["flow_invariants"] = artifacts["flow_invariants"]

    def stage_hodograph():
        result = m_hodograph(
            state["u"], state["flow"], state["ext"],
            boundary_layer=_kink_layer(state["one_phase_problem"],
                                       state["flow"], grid),
        )
        write_field_csv(result.w, out / "w_hodograph.csv")
        branches = branch_characterization(result, tau=cfg.tau)
        state.update(hodograph=result)
        headline["hodograph_margin"] = result.margin
        headline["branch_flat_nodes"] = len(branches["branch"])
        headline["contact_flat_nodes"] = len(branches["contact"])

    def stage_signorini():
        problem = ThinObstacleProblem(
            coefficients=state["coeffs"],
            nonlinearity=_nonlinearity(cfg),
            datum=state["hodograph"].w,
        )
        sol = minimize_thin_obstacle(
            problem, SolverParams(tol=cfg.solver_tol, max_iter=cfg.max_iter)
        )
        write_field_csv(sol.w, out / "w_thin.csv")
        state.update(w=sol.w)
        headline["thin_energy"] = sol.energy

    def stage_frequency():
        scan = monotonicity_scan(
            state["w"], state["coeffs"], cfg.freq_radii,
            cutoff=CutoffProfile(upsilon=cfg.upsilon),
            constants=FrequencyConstants(C=cfg.C, kappa=cfg.kappa),
            slack=cfg.slack,
        )
        _write_frequency_csv(out / "frequency.csv", scan)
        headline["N_origin_estimate"] = scan["N_origin_estimate"]
        headline["minimal_monotonicity_C"] = scan["minimal_C"]
        headline["frequency_degenerate_radii"] = bool(scan.get("truncated", False))

    def stage_whitney():
        params = WhitneyParams(C0=cfg.C0, alpha=cfg.alpha, j_max=cfg.j_max,
                               N0=cfg.N0, c0=cfg.c0)
        dec = whitney_decompose(state["w"], params)
        headline["gamma_nodes"] = int(np.count_nonzero(dec.gamma_nodes))
        headline["whitney_cubes"] = len(dec.all_cubes())

    def stage_blowup():
        seq = rescale(state["w"], cfg.blowup_radii, state["coeffs"])
        cls = classify_blowup(seq)
        headline["matched_blowup_degree"] = cls["best_oracle"].degree
        headline["matched_blowup_kind"] = cls["best_oracle"].kind
        headline["blowup_misfit"] = cls["relative_misfit"]

    plan = [
        ("solve", stage_solve, ("u.csv", "u.csv.json")),
        ("coefficients", stage_coefficients, ()),
        ("hodograph", stage_hodograph, ("w_hodograph.csv", "w_hodograph.csv.json")),
        ("signorini", stage_signorini, ("w_thin.csv", "w_thin.csv.json")),
        ("frequency", stage_frequency, ("frequency.csv",)),
        ("whitney", stage_whitney, ()),
        ("blowup", stage_blowup, ()),
    ]
    hard = {"solve", "coefficients", "hodograph", "signorini"}
    for name, fn, files in plan:
        ok = run_stage(name, fn, files)
        if not ok and name in hard:
            break

    report = PipelineReport(stages=stages, manifest=manifest, headline=headline)
    emit_report(report.to_dict(), out / "pipeline.json")
    return report


def cmd_pipeline(cfg: ExperimentConfig) -> dict:
    report = run_pipeline(cfg)
    failed = [s["name"] for s in report.stages if s["status"] == "failed"]
    if failed:
        raise RuntimeError(f"pipeline stage failed: {', '.join(failed)}")
    return report.to_dict()


def cmd_report(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.output_dir)
    path = out / "pipeline.json"
    if not path.exists():
        raise ConfigError(f"no pipeline report at {path}")
    report = json.loads(path.read_text())
    missing = []
    for entry in report.get("manifest", []):
        fpath = out / entry["file"]
        if not fpath.exists():
            missing.append(entry["file"])
        elif _file_hash(fpath) != entry["sha256"]:
            missing.append(entry["file"] + " (hash mismatch)")
    if missing:
        raise ConfigError(f"manifest audit failed: {', '.join(missing)}")
    return report


COMMANDS = {
    "solve": cmd_solve,
    "flow": cmd_flow,
    "hodograph": cmd_hodograph,
    "signorini": cmd_signorini,
    "frequency": cmd_frequency,
    "whitney": cmd_whitney,
    "blowup": cmd_blowup,
    "pipeline": cmd_pipeline,
    "report": cmd_report,
}


# -- entry point ---------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bernlab",
        description="Numerical laboratory for one-phase free-boundary problems "
                    "at a fixed analytic boundary.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key-value config file")
        for key in SCHEMA:
            p.add_argument(f"--{key}", default=None, dest=key, metavar="V")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        entries = {}
        if args.config:
            path = Path(args.config)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            entries = parse_config_text(path.read_text())
        overrides = {k: getattr(args, k) for k in SCHEMA if getattr(args, k) is not None}
        cfg = build_config(entries, overrides)
        np.random.seed(cfg.seed % 2**32)
        report = COMMANDS[args.subcommand](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FlowValidityError, HodographInvertibilityError, RuntimeError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(report, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
