"""Command-line front end: calibrate thresholds and run Pfa/Pd experiments.

Subcommands
-----------
calibrate   compute/cache detection thresholds for (detector, N, K, Pfa)
pfa         estimate false-alarm probability at one configuration
pd          estimate detection probability at one configuration
sweep       estimate Pfa/Pd along one parameter axis
mesa        detection-probability grid over (mismatch angle, SINR)

Result commands write an RFC-4180 CSV next to a JSON manifest holding the
fully resolved configuration; re-running with ``--config manifest.json`` and
the same seed reproduces the CSV byte for byte.  Configuration precedence:
command-line flags over config file over ``--figure`` preset over defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .detectors import DetectorId
from .engine import (ExperimentConfig, MesaGrid, ResultTable,
                     estimate_probability, mesa_grid, set_parallel_workers,
                     sweep)
from .errors import CalibrationError, ConfigurationError, EstimationError
from .recovery import DEFAULT_N_ITERATIONS, DEFAULT_Q_GRID, SlimConfig
from .scene import AngularGrid, ArrayGeometry, InterferenceModel, exp_covariance
from .thresholds import ThresholdTable, calibration_method, resolve_threshold

CACHE_ENV = "SPARSEDET_CACHE"
DEFAULT_CACHE = "sparsedet-thresholds.json"

EXIT_CONFIG = 2
EXIT_CALIBRATION = 3
EXIT_NUMERIC = 4

ALL_DETECTORS = "kelly,amf,rao,wabort,ace,sad-glrt,sad-amf,bslim-amf,bslim-glrt"
NEW_DETECTORS = "sad-glrt,sad-amf,bslim-amf,bslim-glrt"

_DEFAULTS = {
    "n": 8,
    "k": 32,
    "rho": 0.95,
    "spacing": 0.5,
    "pointing_deg": 0.0,
    "delta_theta_deg": 3.0,
    "half_span_deg": 48.0,
    "m_bins": None,
    "theta_t_deg": None,          # pd/sweep/mesa default to the pointing angle
    "sinr_db": 14.0,
    "phase_rad": 0.0,
    "pfa": 1e-3,
    "detectors": None,            # per-command default
    "trials": None,               # per-command default
    "seed": None,
    "n_iterations": DEFAULT_N_ITERATIONS,
    "q_grid": list(DEFAULT_Q_GRID),
    "h_max": None,
    "stop_tol": None,
    "chunk_size": 8192,
    "bslim_mode": "auto",
    "cal_trials": None,           # default ceil(1000/pfa)
    "cal_seed": 0,
    "thresholds": None,           # explicit {detector: value}, e.g. manifest replay
    "axis": None,
    "values": None,
    "hypothesis": "h1",
    "theta_values": None,
    "sinr_values": None,
}

# Parameter sets reproducing the published experiments, keyed by figure.
PRESETS = {
    "fig2": {"command": "sweep", "axis": "n-iteration",
             "values": [1, 3, 5, 7, 9, 11, 13, 15, 17, 19], "hypothesis": "h0",
             "n": 8, "k": 32, "delta_theta_deg": 3.0, "detectors": NEW_DETECTORS},
    "fig3": {"command": "sweep", "axis": "k", "values": [16, 24, 32, 40, 48],
             "hypothesis": "h0", "n": 8, "delta_theta_deg": 3.0,
             "detectors": NEW_DETECTORS},
    "fig4": {"command": "sweep", "axis": "delta-theta",
             "values": [1.0, 1.5, 2.0, 2.5, 3.0], "hypothesis": "h0",
             "n": 8, "k": 32, "detectors": NEW_DETECTORS},
    "fig5a": {"command": "sweep", "axis": "k", "values": [16, 24, 32, 40, 48],
              "delta_theta_deg": 1.0, "sinr_db": 14.0, "theta_t_deg": 0.0},
    "fig5b": {"command": "sweep", "axis": "k", "values": [16, 24, 32, 40, 48],
              "delta_theta_deg": 2.0, "sinr_db": 14.0, "theta_t_deg": 0.0},
    "fig6": {"command": "sweep", "axis": "delta-theta", "values": [0.5, 1.0, 1.5],
             "n": 24, "k": 96, "half_span_deg": 15.0, "sinr_db": 14.0,
             "theta_t_deg": 0.0},
    "fig7a": {"command": "sweep", "axis": "sinr",
              "values": [0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24],
              "delta_theta_deg": 1.0, "theta_t_deg": 0.0},
    "fig7b": {"command": "sweep", "axis": "sinr",
              "values": [0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24],
              "delta_theta_deg": 2.0, "theta_t_deg": 0.0},
    "fig8a": {"command": "sweep", "axis": "delta-theta",
              "values": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], "n": 8, "k": 32,
              "sinr_db": 14.0, "theta_t_deg": 0.0},
    "fig9a": {"command": "sweep", "axis": "theta-t", "values": "0:0.25:6",
              "delta_theta_deg": 1.0, "sinr_db": 14.0},
    "fig9b": {"command": "sweep", "axis": "theta-t", "values": "0:0.25:6",
              "delta_theta_deg": 2.0, "sinr_db": 14.0},
    "fig9c": {"command": "sweep", "axis": "theta-t", "values": "0:0.25:6",
              "delta_theta_deg": 1.0, "sinr_db": 20.0},
    "fig9d": {"command": "sweep", "axis": "theta-t", "values": "0:0.25:6",
              "delta_theta_deg": 2.0, "sinr_db": 20.0},
    "fig10a": {"command": "sweep", "axis": "k", "values": [16, 24, 32, 40],
               "delta_theta_deg": 2.0, "sinr_db": 14.0, "theta_t_deg": 0.5},
    "fig10b": {"command": "sweep", "axis": "k", "values": [16, 24, 32, 40],
               "delta_theta_deg": 2.0, "sinr_db": 14.0, "theta_t_deg": 2.0},
    "fig11": {"command": "mesa", "theta_values": "0:0.5:4", "sinr_values": "5:2.5:30",
              "delta_theta_deg": 1.0, "n": 8, "k": 32,
              "detectors": "ace,wabort,sad-glrt,bslim-glrt"},
}


# ---------------------------------------------------------------------------
# config file loading

def _parse_toml_subset(text: str) -> dict:
    """Flat TOML reader used when the stdlib parser is unavailable (<3.11).

    Supports comments, bare/quoted keys, strings, numbers, booleans and
    one-line arrays; table headers are accepted but ignored (keys stay flat).
    """
    def scalar(tok: str):
        tok = tok.strip()
        if tok.startswith('"') and tok.endswith('"') and len(tok) >= 2:
            return tok[1:-1]
        if tok in ("true", "false"):
            return tok == "true"
        try:
            return int(tok)
        except ValueError:
            pass
        try:
            return float(tok)
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse TOML value: {tok!r}") from exc

    out: dict = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigurationError(f"cannot parse TOML line: {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().strip('"')
        value = value.split("#", 1)[0].strip() if not value.strip().startswith('"') \
            else value.strip()
        if value.startswith("["):
            if not value.endswith("]"):
                raise ConfigurationError(f"unterminated array in TOML line: {raw!r}")
            body = value[1:-1].strip()
            out[key] = [scalar(t) for t in body.split(",")] if body else []
        else:
            out[key] = scalar(value)
    return out


def load_config_file(path: str | Path) -> dict:
    """Read a TOML or JSON config; a result manifest is also accepted."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        data = json.loads(text)
    else:
        try:
            import tomllib  # Python >= 3.11
            data = tomllib.loads(text)
        except ModuleNotFoundError:
            data = _parse_toml_subset(text)
        # flatten a single level of tables
        flat = {}
        for key, value in data.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        data = flat
    if isinstance(data, dict) and "config" in data and "tool" in data:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a table/object")
    return data


# ---------------------------------------------------------------------------
# value parsing

def parse_values(spec) -> list[float]:
    """Axis values from a list, comma string, or start:step:stop range."""
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    text = str(spec).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigurationError(f"range must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ConfigurationError("range step must be > 0")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    return [float(tok) for tok in text.split(",") if tok.strip()]


def parse_detectors(spec) -> tuple[DetectorId, ...]:
    if isinstance(spec, (list, tuple)):
        names = [str(s) for s in spec]
    else:
        names = [tok.strip() for tok in str(spec).split(",") if tok.strip()]
    try:
        dets = tuple(DetectorId(name.lower()) for name in names)
    except ValueError as exc:
        valid = ", ".join(d.value for d in DetectorId)
        raise ConfigurationError(f"unknown detector in {names}; valid: {valid}") from exc
    if not dets:
        raise ConfigurationError("detector list must be nonempty")
    return dets


# ---------------------------------------------------------------------------
# settings resolution

def _merge_settings(args: argparse.Namespace, command: str) -> dict:
    settings = dict(_DEFAULTS)
    figure = getattr(args, "figure", None)
    if figure:
        if figure not in PRESETS:
            raise ConfigurationError(
                f"unknown preset {figure!r}; available: {', '.join(sorted(PRESETS))}")
        preset = dict(PRESETS[figure])
        expected = preset.pop("command")
        if expected != command:
            raise ConfigurationError(
                f"preset {figure!r} belongs to the {expected!r} subcommand")
        settings.update(preset)
    if getattr(args, "config", None):
        file_cfg = load_config_file(args.config)
        unknown = set(file_cfg) - set(_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        settings.update(file_cfg)
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    if settings["detectors"] is None:
        settings["detectors"] = NEW_DETECTORS if (
            command == "pfa" or settings.get("hypothesis") == "h0") else ALL_DETECTORS
    if settings["theta_t_deg"] is None:
        settings["theta_t_deg"] = settings["pointing_deg"]
    if settings["trials"] is None:
        hypothesis = "h0" if command == "pfa" else str(settings["hypothesis"]).lower()
        settings["trials"] = (int(math.ceil(1000.0 / float(settings["pfa"])))
                              if hypothesis == "h0" else 10000)
    if settings["cal_trials"] is None:
        settings["cal_trials"] = int(math.ceil(1000.0 / float(settings["pfa"])))
    return settings


def _build_grid(settings: dict) -> AngularGrid:
    if settings["m_bins"] is not None:
        return AngularGrid(float(settings["pointing_deg"]),
                           float(settings["delta_theta_deg"]), int(settings["m_bins"]))
    return AngularGrid.spanning(float(settings["pointing_deg"]),
                                float(settings["delta_theta_deg"]),
                                float(settings["half_span_deg"]))


def _build_experiment(settings: dict, thresholds) -> ExperimentConfig:
    geometry = ArrayGeometry(int(settings["n"]), float(settings["spacing"]))
    slim = SlimConfig(q_grid=tuple(float(q) for q in settings["q_grid"]),
                      n_iterations=int(settings["n_iterations"]),
                      h_max=None if settings["h_max"] is None else int(settings["h_max"]),
                      stop_tol=None if settings["stop_tol"] is None
                      else float(settings["stop_tol"]))
    return ExperimentConfig(
        geometry=geometry, grid=_build_grid(settings),
        interference=exp_covariance(int(settings["n"]), float(settings["rho"])),
        k=int(settings["k"]), sinr_db=float(settings["sinr_db"]),
        theta_t_deg=float(settings["theta_t_deg"]),
        detectors=parse_detectors(settings["detectors"]), thresholds=thresholds,
        nominal_pfa=float(settings["pfa"]), trials=int(settings["trials"]),
        seed=int(settings["seed"]), slim=slim, phase_rad=float(settings["phase_rad"]),
        chunk_size=int(settings["chunk_size"]), bslim_mode=str(settings["bslim_mode"]))


class _CachedCalibrator:
    """Resolves thresholds through the JSON cache, counting hits and misses."""

    def __init__(self, cache_path: Path, settings: dict):
        self.path = cache_path
        self.table = ThresholdTable.load(cache_path)
        self.settings = settings
        self.hits = 0
        self.misses = 0

    def thresholds_for(self, n: int, k: int, detectors) -> dict[DetectorId, float]:
        s = self.settings
        out: dict[DetectorId, float] = {}
        for det in detectors:
            if det is DetectorId.SAD:
                continue
            record, hit = resolve_threshold(
                det, n, k, float(s["pfa"]),
                geometry=ArrayGeometry(n, float(s["spacing"])),
                model=exp_covariance(n, float(s["rho"])),
                table=self.table, mc_trials=int(s["cal_trials"]),
                mc_seed=int(s["cal_seed"]), pointing_deg=float(s["pointing_deg"]),
                chunk_size=int(s["chunk_size"]))
            self.hits += int(hit)
            self.misses += int(not hit)
            out[det] = record.threshold
        return out

    def save(self) -> None:
        if self.misses:
            self.table.save(self.path)


# ---------------------------------------------------------------------------
# output

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_result_csv(path: Path, table: ResultTable, axis_columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(axis_columns + ["detector", "estimate", "ci_halfwidth",
                                        "trials", "seed"])
        for row in table.rows:
            writer.writerow([_fmt(row.axis[c]) for c in axis_columns]
                            + [row.detector.value, _fmt(row.estimate),
                               _fmt(row.half_width), row.trials, row.seed])


def write_mesa_csv(path: Path, grid: MesaGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_t_deg", "sinr_db", "detector", "estimate",
                         "ci_halfwidth", "trials", "seed"])
        for det, mat in grid.pd.items():
            for i, theta in enumerate(grid.theta_t_deg):
                for j, sinr in enumerate(grid.sinr_db):
                    writer.writerow([_fmt(float(theta)), _fmt(float(sinr)),
                                     det.value, _fmt(float(mat[i, j])),
                                     _fmt(float(grid.half_width[det][i, j])),
                                     grid.trials, grid.seed])


def write_manifest(path: Path, command: str, settings: dict,
                   thresholds: dict[DetectorId, float], calibrator, wall_clock: float,
                   outputs: list[str], diagnostics: dict | None) -> None:
    config = {key: settings[key] for key in _DEFAULTS}
    config["detectors"] = [d.value for d in parse_detectors(settings["detectors"])]
    config["thresholds"] = {det.value: float(v) for det, v in thresholds.items()}
    manifest = {
        "tool": {"name": "sparsedet", "version": __version__},
        "command": command,
        "config": config,
        "seed": settings["seed"],
        "wall_clock_s": wall_clock,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "threshold_cache": {
            "path": str(calibrator.path) if calibrator else None,
            "hits": calibrator.hits if calibrator else 0,
            "misses": calibrator.misses if calibrator else 0,
        },
        "outputs": outputs,
        "diagnostics": diagnostics or {},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def _require_seed(settings: dict) -> None:
    if settings["seed"] is None:
        raise ConfigurationError("--seed is required for result-emitting commands")


def _cache_path(args: argparse.Namespace) -> Path:
    if getattr(args, "cache", None):
        return Path(args.cache)
    return Path(os.environ.get(CACHE_ENV, DEFAULT_CACHE))


def _resolve_thresholds(settings: dict, calibrator: _CachedCalibrator,
                        detectors) -> dict[DetectorId, float]:
    if settings["thresholds"]:
        explicit = {DetectorId(name): float(v)
                    for name, v in settings["thresholds"].items()}
        missing = [d.value for d in detectors
                   if d is not DetectorId.SAD and d not in explicit]
        if missing:
            raise ConfigurationError(f"explicit thresholds missing: {missing}")
        return explicit
    return calibrator.thresholds_for(int(settings["n"]), int(settings["k"]), detectors)


def cmd_calibrate(args: argparse.Namespace) -> int:
    settings = _merge_settings(args, "calibrate")
    detectors = parse_detectors(args.det)
    cache_path = _cache_path(args)
    calibrator = _CachedCalibrator(cache_path, settings)
    if args.trials is not None:
        settings["cal_trials"] = int(float(args.trials))
    if args.seed is not None:
        settings["cal_seed"] = int(args.seed)
    for det in detectors:
        if det is DetectorId.SAD:
            raise ConfigurationError("sad is a gate-only rule with no threshold")
        method = calibration_method(det)
        record, hit = resolve_threshold(
            det, int(settings["n"]), int(settings["k"]), float(settings["pfa"]),
            geometry=ArrayGeometry(int(settings["n"]), float(settings["spacing"])),
            model=exp_covariance(int(settings["n"]), float(settings["rho"])),
            table=calibrator.table, mc_trials=int(settings["cal_trials"]),
            mc_seed=int(settings["cal_seed"]),
            pointing_deg=float(settings["pointing_deg"]),
            chunk_size=int(settings["chunk_size"]))
        calibrator.hits += int(hit)
        calibrator.misses += int(not hit)
        origin = "cached" if hit else "computed"
        extra = f", trials={record.trials_used}, seed={record.seed}" \
            if method.value == "monte_carlo" else ""
        print(f"{det.value}: n={record.n} k={record.k} pfa={record.pfa} -> "
              f"{record.threshold!r} ({record.method}, {origin}{extra})")
    calibrator.save()
    print(f"cache: {cache_path} ({calibrator.hits} hit(s), "
          f"{calibrator.misses} new entr{'y' if calibrator.misses == 1 else 'ies'})")
    return 0


def _run_point_command(args: argparse.Namespace, command: str) -> int:
    settings = _merge_settings(args, command)
    _require_seed(settings)
    set_parallel_workers(getattr(args, "workers", None))
    calibrator = _CachedCalibrator(_cache_path(args), settings)
    detectors = parse_detectors(settings["detectors"])
    started = time.perf_counter()
    thresholds = _resolve_thresholds(settings, calibrator, detectors)
    config = _build_experiment(settings, thresholds)
    hypothesis = "H0" if command == "pfa" else "H1"
    table = estimate_probability(hypothesis, config)
    wall = time.perf_counter() - started
    out_path = Path(args.out or f"{command}.csv")
    write_result_csv(out_path, table, [])
    calibrator.save()
    write_manifest(out_path.with_suffix(".manifest.json"), command, settings,
                   thresholds, calibrator, wall, [out_path.name], table.meta)
    print(f"wrote {out_path} and {out_path.with_suffix('.manifest.json')}")
    return 0


def cmd_pfa(args: argparse.Namespace) -> int:
    return _run_point_command(args, "pfa")


def cmd_pd(args: argparse.Namespace) -> int:
    return _run_point_command(args, "pd")


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = _merge_settings(args, "sweep")
    _require_seed(settings)
    if settings["axis"] is None or settings["values"] is None:
        raise ConfigurationError("sweep needs --axis and --values")
    set_parallel_workers(getattr(args, "workers", None))
    calibrator = _CachedCalibrator(_cache_path(args), settings)
    detectors = parse_detectors(settings["detectors"])
    axis = str(settings["axis"]).replace("-", "_").upper()
    values = parse_values(settings["values"])
    hypothesis = "H0" if str(settings["hypothesis"]).lower() == "h0" else "H1"
    started = time.perf_counter()
    thresholds = _resolve_thresholds(settings, calibrator, detectors)
    config = _build_experiment(settings, thresholds)

    provider = None
    if axis == "K" and not settings["thresholds"]:
        def provider(cfg: ExperimentConfig):
            return calibrator.thresholds_for(cfg.geometry.n_elements, cfg.k, detectors)

    table = sweep(axis, values, config, hypothesis=hypothesis,
                  threshold_provider=provider)
    wall = time.perf_counter() - started
    out_path = Path(args.out or "sweep.csv")
    from .engine import _AXIS_COLUMN
    write_result_csv(out_path, table, [_AXIS_COLUMN[axis]])
    calibrator.save()
    write_manifest(out_path.with_suffix(".manifest.json"), "sweep", settings,
                   thresholds, calibrator, wall, [out_path.name],
                   {"points": len(values), "axis": axis})
    print(f"wrote {out_path} and {out_path.with_suffix('.manifest.json')}")
    return 0


def cmd_mesa(args: argparse.Namespace) -> int:
    settings = _merge_settings(args, "mesa")
    _require_seed(settings)
    if settings["theta_values"] is None or settings["sinr_values"] is None:
        raise ConfigurationError("mesa needs --theta-values and --sinr-values")
    set_parallel_workers(getattr(args, "workers", None))
    calibrator = _CachedCalibrator(_cache_path(args), settings)
    detectors = parse_detectors(settings["detectors"])
    started = time.perf_counter()
    thresholds = _resolve_thresholds(settings, calibrator, detectors)
    config = _build_experiment(settings, thresholds)
    grid = mesa_grid(parse_values(settings["theta_values"]),
                     parse_values(settings["sinr_values"]), config)
    wall = time.perf_counter() - started
    out_path = Path(args.out or "mesa.csv")
    write_mesa_csv(out_path, grid)
    calibrator.save()
    write_manifest(out_path.with_suffix(".manifest.json"), "mesa", settings,
                   thresholds, calibrator, wall, [out_path.name],
                   {"grid": [len(grid.theta_t_deg), len(grid.sinr_db)]})
    print(f"wrote {out_path} and {out_path.with_suffix('.manifest.json')}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_experiment_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML/JSON config file (or a result manifest)")
    p.add_argument("--figure", help="named preset, e.g. fig8a, fig10b")
    p.add_argument("--n", type=int, help="array elements N")
    p.add_argument("--k", type=int, help="training vectors K")
    p.add_argument("--rho", type=float, help="one-lag correlation of the interference")
    p.add_argument("--spacing", type=float, help="element spacing d/lambda")
    p.add_argument("--pointing", dest="pointing_deg", type=float,
                   help="nominal pointing angle, degrees")
    p.add_argument("--delta-theta", dest="delta_theta_deg", type=float,
                   help="azimuth bin spacing, degrees")
    p.add_argument("--half-span", dest="half_span_deg", type=float,
                   help="dictionary half-span, degrees")
    p.add_argument("--m-bins", dest="m_bins", type=int,
                   help="explicit odd dictionary size (overrides --half-span)")
    p.add_argument("--theta-t", dest="theta_t_deg", type=float,
                   help="true target angle, degrees")
    p.add_argument("--sinr", dest="sinr_db", type=float, help="target SINR, dB")
    p.add_argument("--phase", dest="phase_rad", type=float, help="target phase, rad")
    p.add_argument("--pfa", type=float, help="nominal false-alarm probability")
    p.add_argument("--detectors", help="comma-separated detector list")
    p.add_argument("--trials", type=lambda s: int(float(s)), help="Monte Carlo trials")
    p.add_argument("--seed", type=int, help="master seed (required for results)")
    p.add_argument("--n-iterations", dest="n_iterations", type=int,
                   help="recovery iterations per q")
    p.add_argument("--q-grid", dest="q_grid",
                   type=lambda s: [float(t) for t in s.split(",")],
                   help="sparsity exponents, comma separated")
    p.add_argument("--h-max", dest="h_max", type=int, help="max model order")
    p.add_argument("--stop-tol", dest="stop_tol", type=float,
                   help="optional relative-change early stop")
    p.add_argument("--chunk-size", dest="chunk_size", type=int,
                   help="trials per kernel batch (no effect on results)")
    p.add_argument("--bslim-mode", dest="bslim_mode", choices=["auto", "full"],
                   help="force sparse recovery on every trial with 'full'")
    p.add_argument("--cal-trials", dest="cal_trials", type=lambda s: int(float(s)),
                   help="trials for Monte Carlo threshold calibration")
    p.add_argument("--cal-seed", dest="cal_seed", type=int,
                   help="seed for Monte Carlo threshold calibration")
    p.add_argument("--cache", help=f"threshold cache path (or ${CACHE_ENV})")
    p.add_argument("--workers", type=int, help="max parallel kernel threads")
    p.add_argument("--out", help="output CSV path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsedet",
        description="Adaptive radar detection with sparse-recovery detectors: "
                    "threshold calibration and Monte Carlo Pfa/Pd studies.")
    parser.add_argument("--version", action="version",
                        version=f"sparsedet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="compute/cache detection thresholds")
    p.add_argument("--det", required=True, help="detector name(s), comma separated")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--pfa", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--spacing", type=float)
    p.add_argument("--pointing", dest="pointing_deg", type=float)
    p.add_argument("--trials", type=lambda s: int(float(s)),
                   help="Monte Carlo calibration trials")
    p.add_argument("--seed", type=int, help="Monte Carlo calibration seed")
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--cache", help=f"threshold cache path (or ${CACHE_ENV})")
    p.add_argument("--config", help="TOML/JSON config file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pfa", help="false-alarm probability at one configuration")
    _add_experiment_options(p)
    p.set_defaults(func=cmd_pfa)

    p = sub.add_parser("pd", help="detection probability at one configuration")
    _add_experiment_options(p)
    p.set_defaults(func=cmd_pd)

    p = sub.add_parser("sweep", help="Pfa/Pd along one parameter axis")
    _add_experiment_options(p)
    p.add_argument("--axis", choices=["k", "sinr", "delta-theta", "theta-t",
                                      "n-iteration"])
    p.add_argument("--values", help="comma list or start:step:stop")
    p.add_argument("--hypothesis", choices=["h0", "h1"])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mesa", help="Pd grid over (mismatch angle, SINR)")
    _add_experiment_options(p)
    p.add_argument("--theta-values", dest="theta_values",
                   help="mismatch angles, comma list or start:step:stop")
    p.add_argument("--sinr-values", dest="sinr_values",
                   help="SINR values, comma list or start:step:stop")
    p.set_defaults(func=cmd_mesa)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (EstimationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
