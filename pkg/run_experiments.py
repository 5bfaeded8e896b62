#!/usr/bin/env python3
"""
Experiment runner for dual-blind deconvolution of overlaid radar and
communications signals.

Subcommands:
1. simulate - draw a scenario and write scenario.json and measurement.json
2. solve    - simulate, solve the dual SDP, localize supports, recover
              waveforms and messages, score against truth
3. localize - re-run support localization from a saved dual vector
4. sweep    - Monte-Carlo sweeps over config axes on a worker pool
5. schema   - write the config schema with every default

Environment defaults (.env): DBD_OUTPUT_DIR, DBD_JOBS, DBD_LOG_FILE, DBD_LOG_LEVEL.
"""

import argparse
import copy
import csv
import hashlib
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml
from dotenv import load_dotenv
from tqdm import tqdm

from conic_solver import SolverSettings, solve
from lifted_operators import eval_poly_c, eval_poly_r, inner_product
from sdp_builder import ConicSolution, build_for_scenario, params_from_gram
from signal_model import (Dimensions, Measurement, ModelDomainError, Scenario, Variant, complex_from_json,
                          complex_to_json, draw_scenario, synth_measurement)
from support_localizer import (DEFAULT_EPS_LOC, DEFAULT_GRID, DEFAULT_REFINE_ITERS, SupportEstimate,
                               grid_scan, locate_supports, write_grid_csv)
from waveform_recovery import COND_LIMIT, Estimate, RecoveryError, recover, score

# Load environment variables
load_dotenv()

DEFAULT_OUTPUT_DIR = os.getenv("DBD_OUTPUT_DIR", "results")
DEFAULT_JOBS = int(os.getenv("DBD_JOBS", str(os.cpu_count() or 1)))
LOG_FILE = os.getenv("DBD_LOG_FILE", "dbd_experiments.log")
LOG_LEVEL = os.getenv("DBD_LOG_LEVEL", "INFO")
SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

DIM_AXES = ("M", "P", "J", "L", "Q")
VARIANT_AXES = ("snr_db", "mu", "sync_lag", "rho", "sub_symbols")
SWEEP_AXES = ("LQ",) + DIM_AXES + VARIANT_AXES

ERROR_COLUMNS = ["radar_support_error", "radar_delay_error", "radar_doppler_error", "comms_support_error",
                 "comms_delay_error", "comms_doppler_error", "waveform_error", "message_error",
                 "waveform_error_abs", "message_error_abs",
                 "radar_z_error", "comms_z_error"]

logger = logging.getLogger(__name__)


def setup_logging(level: str = LOG_LEVEL, log_file: str = LOG_FILE) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ]
    )


class ConfigError(ValueError):
    """Raised for unreadable or invalid experiment configs."""


FIELD_DOCS = {
    "schema_version": "Config schema version; must equal 1.",
    "name": "Experiment name, used in logs and summaries.",
    "dims": "Problem sizes: M (odd), P, J, L, Q.",
    "variant": "Variant: kind in {baseline, noisy, unsync, multi_emitter, unequal_pri} and its parameters "
               "(snr_db, mu, sync_lag, rho, n_radar, n_comms, sub_symbols).",
    "layout": "Comms basis layout: 'block' (block-diagonal D) or 'dense' (full-length rows).",
    "trials": "Trials per sweep point (>= 1).",
    "seed": "Master seed; per-trial seeds are derived from it.",
    "radar_channels": "Optional fixed radar supports: list (one per emitter) of {delays, dopplers}.",
    "comms_channels": "Optional fixed comms supports: list (one per emitter) of {delays, dopplers}.",
    "enforce_separation": "Rejection-sample random supports to 1/M and 1/P separation.",
    "solver": "SolverSettings overrides (max_iters, eps_primal, eps_dual, eps_gap, over_relaxation, "
              "scaling, polish, rho, method (auto, generic or structured), ...).",
    "localization": "Localization settings: grid [G_tau, G_nu], eps_loc, refine_iters, merge_radius.",
    "sweep": f"Sweep axes: mapping from one of {list(SWEEP_AXES)} to a non-empty list of values.",
    "cond_limit": "Largest accepted condition number of the recovery design matrix.",
    "output_dir": "Output directory (overridden by --out).",
}


def _default_localization() -> Dict[str, Any]:
    return {"grid": list(DEFAULT_GRID), "eps_loc": DEFAULT_EPS_LOC, "refine_iters": DEFAULT_REFINE_ITERS,
            "merge_radius": None}


@dataclass
class ExperimentConfig:
    """Experiment description loaded from JSON or YAML."""
    schema_version: int = SCHEMA_VERSION
    name: str = "experiment"
    dims: Dict[str, int] = field(default_factory=lambda: {"M": 13, "P": 9, "J": 3, "L": 3, "Q": 3})
    variant: Dict[str, Any] = field(default_factory=lambda: {"kind": "baseline"})
    layout: str = "block"
    trials: int = 1
    seed: int = 0
    radar_channels: Optional[List[Dict[str, List[float]]]] = None
    comms_channels: Optional[List[Dict[str, List[float]]]] = None
    enforce_separation: bool = False
    solver: Dict[str, Any] = field(default_factory=dict)
    localization: Dict[str, Any] = field(default_factory=_default_localization)
    sweep: Dict[str, List[Any]] = field(default_factory=dict)
    cond_limit: float = COND_LIMIT
    output_dir: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        if int(self.trials) < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        localization = _default_localization()
        localization.update(self.localization or {})
        unknown = set(localization) - set(_default_localization())
        if unknown:
            raise ConfigError(f"unknown localization settings: {sorted(unknown)}")
        self.localization = localization
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis '{axis}', expected one of {list(SWEEP_AXES)}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep axis '{axis}' must be a non-empty list")
        try:
            self.dimensions()
            self.variant_obj()
            self.solver_settings()
        except (ModelDomainError, KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"invalid config: {e}") from e

    def dimensions(self) -> Dimensions:
        return Dimensions.from_dict(self.dims)

    def variant_obj(self) -> Variant:
        return Variant.from_dict(self.variant)

    def solver_settings(self, residual_csv: Optional[str] = None) -> SolverSettings:
        settings = dict(self.solver)
        if residual_csv:
            settings["residual_csv"] = residual_csv
        return SolverSettings(**settings)

    @property
    def grid(self) -> Tuple[int, int]:
        return int(self.localization["grid"][0]), int(self.localization["grid"][1])

    def sweep_points(self) -> List[Dict[str, Any]]:
        """Cartesian product of the sweep axes in declaration order; one empty point without axes."""
        axes = list(self.sweep.keys())
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.sweep[a] for a in axes))]

    def at_point(self, assignments: Dict[str, Any]) -> "ExperimentConfig":
        """Copy of this config with sweep-axis values applied and no sweep."""
        data = copy.deepcopy(asdict(self))
        data["sweep"] = {}
        for axis, value in assignments.items():
            if axis == "LQ":
                data["dims"]["L"] = data["dims"]["Q"] = value
            elif axis in DIM_AXES:
                data["dims"][axis] = value
            else:
                data["variant"][axis] = value
        return ExperimentConfig(**data)

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid config: {e}") from e

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r") as f:
                if path.endswith((".yaml", ".yml")):
                    data = yaml.safe_load(f)
                else:
                    data = json.load(f)
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"could not read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must contain a mapping")
        return cls.from_dict(data)


def generate_schema() -> Dict:
    """Schema document listing every config field with its default and description."""
    defaults = asdict(ExperimentConfig())
    return {
        "schema_version": SCHEMA_VERSION,
        "fields": {name: {"default": defaults[name], "description": FIELD_DOCS[name]} for name in defaults},
        "solver_defaults": asdict(SolverSettings()),
        "sweep_axes": list(SWEEP_AXES),
        "environment": ["DBD_OUTPUT_DIR", "DBD_JOBS", "DBD_LOG_FILE", "DBD_LOG_LEVEL"],
    }


def trial_seed(master_seed: int, point_index: int, trial_index: int) -> int:
    """Stable per-trial seed derived from (master seed, axis point, trial)."""
    digest = hashlib.blake2b(f"{master_seed}:{point_index}:{trial_index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (2 ** 63)


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def _write_json(path: str, payload: Dict) -> None:
    with open(path, "w") as f:
        json.dump(_clean(payload), f, indent=2)


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def _trivial_solution(problem) -> ConicSolution:
    """q = 0 with K = I / MP is optimal when y vanishes."""
    x = np.zeros(problem.num_vars)
    x[2 * problem.q_length:] = params_from_gram(np.eye(problem.gram_side) / problem.gram_side)
    q, K = problem.unpack(x)
    return ConicSolution(x=x, status="optimal", residuals={"primal": 0.0, "dual": 0.0, "gap": 0.0},
                         iterations=0, objective=problem.objective_value(x), q=q, K=K)


class ExperimentRunner:
    """Runs the simulate -> solve -> localize -> recover -> score pipeline."""

    def __init__(self, config: ExperimentConfig, out_dir: Optional[str] = None,
                 emit_residuals: bool = False, grid: Optional[Tuple[int, int]] = None):
        self.config = config
        self.out_dir = out_dir
        self.emit_residuals = emit_residuals
        self.grid = grid or config.grid
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    def _path(self, name: str) -> Optional[str]:
        return os.path.join(self.out_dir, name) if self.out_dir else None

    def simulate(self, seed: int) -> Tuple[Scenario, Measurement]:
        """Draw the scenario for seed and synthesize its measurement."""
        cfg = self.config
        scenario = draw_scenario(cfg.dimensions(), cfg.variant_obj(), seed, layout=cfg.layout,
                                 radar_channels=cfg.radar_channels, comms_channels=cfg.comms_channels,
                                 enforce_separation=cfg.enforce_separation)
        measurement = synth_measurement(scenario)
        if self.out_dir:
            _write_json(self._path("scenario.json"), scenario.to_dict())
            _write_json(self._path("measurement.json"), measurement.to_dict())
        return scenario, measurement

    def localize(self, q: np.ndarray, scenario: Scenario) -> Tuple[List[SupportEstimate], List[SupportEstimate], Dict]:
        """Locate supports for every emitter; writes the primary emitters' norm grids."""
        loc = self.config.localization
        dims = scenario.dims
        diagnostics = {"sup_norm": {}, "true_support_min_norm": {}}
        found = {"radar": [], "comms": []}
        for kind, emitters in (("radar", scenario.radar_emitters()), ("comms", scenario.comms_emitters())):
            bound = scenario.variant.radar_bound if kind == "radar" else 1.0
            for i, emitter in enumerate(emitters):
                norms = grid_scan(q, emitter.bases, dims, kind, self.grid)
                if i == 0 and self.out_dir:
                    write_grid_csv(self._path(f"poly_{kind}.csv"), norms, self.grid)
                estimate = locate_supports(q, emitter.bases, dims, kind, eps_loc=loc["eps_loc"], grid=self.grid,
                                           refine_iters=loc["refine_iters"], bound=bound,
                                           merge_radius=loc["merge_radius"], norms=norms)
                found[kind].append(estimate)
                label = kind if i == 0 else f"{kind}_{i}"
                diagnostics["sup_norm"][label] = float(norms.max())
                if emitter.channel.count:
                    evaluate = eval_poly_r if kind == "radar" else eval_poly_c
                    values = [np.linalg.norm(evaluate(q, r, emitter.bases, dims)) for r in emitter.channel.supports]
                    diagnostics["true_support_min_norm"][label] = float(min(values))
        return found["radar"], found["comms"], diagnostics

    def run_trial(self, seed: int) -> Dict:
        """Full pipeline for one seed; returns the metrics record and intermediate objects."""
        started = time.time()
        scenario, measurement = self.simulate(seed)
        problem = build_for_scenario(scenario, measurement)
        if not np.any(measurement.y):
            logger.info("Measurement is identically zero; using the trivial dual point")
            solution = _trivial_solution(problem)
        else:
            residual_csv = self._path("residuals.csv") if self.emit_residuals else None
            solution = solve(problem, self.config.solver_settings(residual_csv))
            if not solution.optimal:
                logger.warning(f"Solver stopped with status {solution.status} after {solution.iterations} iterations; "
                               f"supports are read from the best iterate")
        if self.out_dir:
            _write_json(self._path("dual.json"), {"status": solution.status, "iterations": solution.iterations,
                                                  "residuals": solution.residuals, "q": complex_to_json(solution.q)})

        radar_found, comms_found, diagnostics = self.localize(solution.q, scenario)
        error = None
        try:
            estimate = recover(measurement, radar_found, comms_found,
                               [e.bases for e in scenario.radar_emitters()],
                               [e.bases for e in scenario.comms_emitters()], self.config.cond_limit)
        except RecoveryError as e:
            logger.error(f"Recovery failed for seed {seed}: {e}")
            error = str(e)
            estimate = Estimate([], [], float(np.linalg.norm(measurement.y)), {"error": error})
        estimate.diagnostics.update(diagnostics)
        estimate.diagnostics["solver_status"] = solution.status

        metrics = score(estimate, scenario)
        metrics.update({
            "seed": seed,
            "solver_status": solution.status,
            "iterations": solution.iterations,
            "dual_value": inner_product(solution.q, measurement.y),
            "certificate_sup_norm": max(diagnostics["sup_norm"].values(), default=0.0),
            "recovery_error": error,
            "elapsed": time.time() - started,
        })
        if self.out_dir:
            _write_json(self._path("estimate.json"), estimate.to_dict())
            _write_json(self._path("metrics.json"), metrics)
        logger.info(f"Trial seed={seed}: solver={solution.status} success={metrics['success']} "
                    f"radar={metrics['radar_count']}/{metrics['radar_true_count']} "
                    f"comms={metrics['comms_count']}/{metrics['comms_true_count']}")
        return {"metrics": metrics, "estimate": estimate, "solution": solution,
                "scenario": scenario, "measurement": measurement}


def run_single(config: ExperimentConfig, out_dir: Optional[str] = None, seed: Optional[int] = None,
               emit_residuals: bool = False, grid: Optional[Tuple[int, int]] = None) -> Dict:
    """One pipeline run with artifacts written to out_dir."""
    runner = ExperimentRunner(config, out_dir, emit_residuals, grid)
    return runner.run_trial(config.seed if seed is None else seed)


def _run_sweep_trial(task: Tuple[Dict, int, Dict, int, int]) -> Dict:
    """Worker entry point; never raises."""
    config_data, point_index, assignments, trial_index, seed = task
    row = {"point": point_index, "trial": trial_index, "seed": seed, **assignments}
    try:
        config = ExperimentConfig(**config_data).at_point(assignments)
        result = ExperimentRunner(config).run_trial(seed)
        metrics = result["metrics"]
        row.update({k: metrics[k] for k in ["success", "radar_count", "comms_count", "dual_value",
                                            "solver_status", "iterations"] + ERROR_COLUMNS})
        row["status"] = "ok" if metrics["recovery_error"] is None else "recovery_error"
        row["error"] = metrics["recovery_error"] or ""
    except Exception as e:
        logger.error(f"Trial {trial_index} at point {point_index} failed: {e}")
        row.update({"status": "error", "success": False, "error": str(e)})
    return row


def aggregate(rows: List[Dict], axes: List[str]) -> List[Dict]:
    """Per-point success probability with standard error and mean error columns."""
    summary = []
    for point in sorted({r["point"] for r in rows}):
        mine = [r for r in rows if r["point"] == point]
        n = len(mine)
        successes = sum(1 for r in mine if r.get("success"))
        p = successes / n
        entry = {"point": point, **{a: mine[0].get(a) for a in axes}, "trials": n, "successes": successes,
                 "success_probability": p, "std_error": math.sqrt(p * (1.0 - p) / n),
                 "failed_trials": sum(1 for r in mine if r.get("status") == "error")}
        for column in ERROR_COLUMNS:
            values = [r.get(column) for r in mine]
            finite = [float(v) for v in values if v is not None and math.isfinite(float(v))]
            entry[f"mean_{column}"] = float(np.mean(finite)) if finite else float("nan")
        summary.append(entry)
    return summary


def _write_csv(path: str, rows: List[Dict], columns: List[str]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(c)) for c in columns])


def run_sweep(config: ExperimentConfig, out_dir: Optional[str] = None, jobs: int = 1,
              show_progress: bool = True) -> Tuple[List[Dict], List[Dict]]:
    """All (point, trial) runs on a bounded worker pool; outputs are sorted, so reruns are byte-identical."""
    points = config.sweep_points()
    axes = list(config.sweep.keys())
    config_data = asdict(config)
    tasks = [(config_data, p, assignments, t, trial_seed(config.seed, p, t))
             for p, assignments in enumerate(points) for t in range(config.trials)]
    logger.info(f"Sweep '{config.name}': {len(points)} points x {config.trials} trials on {jobs} worker(s)")

    rows = []
    if jobs <= 1:
        for task in tqdm(tasks, desc=config.name, disable=not show_progress, dynamic_ncols=True):
            rows.append(_run_sweep_trial(task))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_sweep_trial, task) for task in tasks]
            for future in tqdm(as_completed(futures), total=len(futures), desc=config.name,
                               disable=not show_progress, dynamic_ncols=True):
                rows.append(future.result())
    rows.sort(key=lambda r: (r["point"], r["trial"]))
    summary = aggregate(rows, axes)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        columns = ["point", "trial", "seed"] + axes + ["status", "success", "radar_count", "comms_count",
                                                        "solver_status", "iterations", "dual_value"] + \
            ERROR_COLUMNS + ["error"]
        _write_csv(os.path.join(out_dir, "sweep.csv"), rows, columns)
        summary_columns = ["point"] + axes + ["trials", "successes", "success_probability", "std_error",
                                              "failed_trials"] + [f"mean_{c}" for c in ERROR_COLUMNS]
        _write_csv(os.path.join(out_dir, "sweep_summary.csv"), summary, summary_columns)
    return rows, summary


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def parse_grid(text: str) -> Tuple[int, int]:
    try:
        g_tau, g_nu = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 256x256, got '{text}'")
    if g_tau < 2 or g_nu < 2:
        raise argparse.ArgumentTypeError("grid sides must be >= 2")
    return g_tau, g_nu


def build_parser() -> argparse.ArgumentParser:
    epilog = "Config fields and defaults:\n" + "\n".join(
        f"  {name} = {json.dumps(_clean(value))}: {FIELD_DOCS[name]}"
        for name, value in asdict(ExperimentConfig()).items())
    parser = argparse.ArgumentParser(description="Dual-blind deconvolution experiments",
                                     formatter_class=argparse.RawDescriptionHelpFormatter, epilog=epilog)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=False, grid=True, residuals=False):
        p.add_argument("--config", help="JSON or YAML experiment config (defaults when omitted)")
        p.add_argument("--seed", type=int, help="Master seed (overrides the config)")
        p.add_argument("--out", default=DEFAULT_OUTPUT_DIR, help=f"Output directory (default: {DEFAULT_OUTPUT_DIR})")
        if jobs:
            p.add_argument("--jobs", type=int, default=DEFAULT_JOBS,
                           help=f"Worker processes (default: {DEFAULT_JOBS})")
        if grid:
            p.add_argument("--grid", type=parse_grid, help="Localization grid GtauxGnu (default: 256x256)")
        if residuals:
            p.add_argument("--emit-residuals", action="store_true", help="Write the solver residual trace CSV")

    common(sub.add_parser("simulate", help="Draw a scenario and its measurement"), grid=False)
    common(sub.add_parser("solve", help="Run the full pipeline once"), residuals=True)
    common(sub.add_parser("sweep", help="Monte-Carlo sweep over config axes"), jobs=True)
    localize = sub.add_parser("localize", help="Localize supports from saved scenario and dual files")
    common(localize)
    localize.add_argument("--input", help="Directory holding scenario.json and dual.json (default: --out)")
    schema = sub.add_parser("schema", help="Write the config schema")
    schema.add_argument("--out", default=DEFAULT_OUTPUT_DIR, help="Output directory")
    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _print_banner(title: str) -> None:
    print(f"\n{'='*50}")
    print(title)
    print(f"{'='*50}")


def command_localize(args, config: ExperimentConfig) -> int:
    source = args.input or args.out
    with open(os.path.join(source, "scenario.json"), "r") as f:
        scenario = Scenario.from_dict(json.load(f))
    with open(os.path.join(source, "dual.json"), "r") as f:
        q = complex_from_json(json.load(f)["q"])
    runner = ExperimentRunner(config, args.out, grid=args.grid)
    radar, comms, diagnostics = runner.localize(q, scenario)
    payload = {"radar": [s.to_dict() for s in radar], "comms": [s.to_dict() for s in comms],
               "diagnostics": diagnostics}
    _write_json(os.path.join(args.out, "supports.json"), payload)
    _print_banner("LOCALIZATION SUMMARY")
    for s in radar + comms:
        print(f"{s.kind}: {s.count} supports")
        for point, peak in zip(s.supports, s.peak_norms):
            print(f"  - tau={point[0]:.6f} nu={point[1]:.6f} |f|={peak:.6f}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        if args.command == "schema":
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "config_schema.json")
            _write_json(path, generate_schema())
            print(f"Schema written to: {path}")
            return EXIT_OK

        config = _load_config(args)
        if args.command == "simulate":
            runner = ExperimentRunner(config, args.out)
            scenario, measurement = runner.simulate(config.seed)
            _print_banner("SIMULATION SUMMARY")
            print(f"Dimensions: {scenario.dims.to_dict()}")
            print(f"Variant: {scenario.variant.kind}")
            print(f"Measurement length: {measurement.y.size}")
            print(f"\nResults saved to: {args.out}")
            return EXIT_OK

        if args.command == "solve":
            result = run_single(config, args.out, emit_residuals=args.emit_residuals, grid=args.grid)
            metrics = result["metrics"]
            _print_banner("SOLVE SUMMARY")
            print(f"Solver status: {metrics['solver_status']} ({metrics['iterations']} iterations)")
            print(f"Radar supports: {metrics['radar_count']} / {metrics['radar_true_count']}")
            print(f"Comms supports: {metrics['comms_count']} / {metrics['comms_true_count']}")
            print(f"Radar support error: {metrics['radar_support_error']}")
            print(f"Comms support error: {metrics['comms_support_error']}")
            print(f"Message error: {metrics['message_error']}")
            print(f"Success: {metrics['success']}")
            print(f"\nResults saved to: {args.out}")
            return EXIT_OK if metrics["solver_status"] == "optimal" else EXIT_SOLVER

        if args.command == "sweep":
            if args.grid:
                config.localization["grid"] = list(args.grid)
            rows, summary = run_sweep(config, args.out, jobs=args.jobs)
            _print_banner("SWEEP SUMMARY")
            print(f"Trials: {len(rows)}")
            print(f"Failed trials: {sum(1 for r in rows if r.get('status') == 'error')}")
            for entry in summary:
                axes = {a: entry[a] for a in config.sweep}
                print(f"  - {axes}: P(success) = {entry['success_probability']:.3f} "
                      f"+/- {entry['std_error']:.3f}")
            print(f"\nResults saved to: {os.path.join(args.out, 'sweep.csv')}")
            return EXIT_OK

        if args.command == "localize":
            return command_localize(args, config)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Unexpected failure: {e}")
        return EXIT_UNEXPECTED
    return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
