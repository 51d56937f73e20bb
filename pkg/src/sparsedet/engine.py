"""Monte Carlo estimation of false-alarm and detection probabilities.

Each trial draws fresh training data and a snapshot from its own counter
stream, forms the SCM, optionally runs the sparse recovery once, and feeds
the same data to every requested detector (common random numbers).  Trials
are processed in chunks by the compiled kernel; chunking and worker count
never change the random numbers, so results are bit-identical for any
degree of parallelism.

Sparse recovery is skipped on trials where no composite detector can fire
(lazy mode): the sparse statistics are dominated by their classical
counterparts and the two-stage rules AND with them, so decisions and
estimates are unchanged.  Runs that report the plain sparse-gate detector
evaluate the recovery on every trial instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import _kernel
from .detectors import (CLASSICAL, DetectorId, bslim_amf_statistic,
                        bslim_glrt_statistic, classical_statistic, sad_gate)
from .errors import ConfigurationError
from .recovery import SlimConfig, bslim, sample_covariance
from .scene import (HYPOTHESES, AngularGrid, ArrayGeometry, Dictionary,
                    InterferenceModel, Snapshot, TargetScenario, TrainingSet,
                    amplitude_for_sinr, build_dictionary, steering_vector)
from .streams import (complex_normals, trial_stride, trial_uniforms,
                      uniforms_per_trial)

SWEEP_AXES = ("K", "SINR", "DELTA_THETA", "THETA_T", "N_ITERATION")

_AXIS_COLUMN = {
    "K": "k",
    "SINR": "sinr_db",
    "DELTA_THETA": "delta_theta_deg",
    "THETA_T": "theta_t_deg",
    "N_ITERATION": "n_iteration",
}

_STAT_COLUMN = {
    DetectorId.KELLY: _kernel.COL_KELLY,
    DetectorId.AMF: _kernel.COL_AMF,
    DetectorId.RAO: _kernel.COL_RAO,
    DetectorId.WABORT: _kernel.COL_WABORT,
    DetectorId.ACE: _kernel.COL_ACE,
    DetectorId.BSLIM_AMF: _kernel.COL_BSLIM_AMF,
    DetectorId.BSLIM_GLRT: _kernel.COL_BSLIM_GLRT,
}

#: composite rule -> (thresholded statistic column, needs sparse gate,
#:                    classical column that per-trial exceedance must imply)
_COMPOSITE = {
    DetectorId.SAD_GLRT: (_kernel.COL_KELLY, True, _kernel.COL_KELLY),
    DetectorId.SAD_AMF: (_kernel.COL_AMF, True, _kernel.COL_AMF),
    DetectorId.BSLIM_GLRT: (_kernel.COL_BSLIM_GLRT, False, _kernel.COL_KELLY),
    DetectorId.BSLIM_AMF: (_kernel.COL_BSLIM_AMF, False, _kernel.COL_AMF),
}

#: statistic-domination pairs checked per evaluated trial
_DOMINATION = ((DetectorId.BSLIM_AMF, _kernel.COL_BSLIM_AMF, _kernel.COL_AMF),
               (DetectorId.BSLIM_GLRT, _kernel.COL_BSLIM_GLRT, _kernel.COL_KELLY))


def set_parallel_workers(n: int | None) -> None:
    """Cap kernel parallelism; results do not depend on the worker count."""
    if n is None:
        return
    import numba
    numba.set_num_threads(max(1, int(n)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one Monte Carlo point."""

    geometry: ArrayGeometry
    grid: AngularGrid
    interference: InterferenceModel
    k: int
    sinr_db: float
    theta_t_deg: float
    detectors: tuple[DetectorId, ...]
    thresholds: Mapping[DetectorId, float]
    nominal_pfa: float
    trials: int
    seed: int
    slim: SlimConfig = field(default_factory=SlimConfig)
    phase_rad: float = 0.0
    chunk_size: int = 8192
    bslim_mode: str = "auto"

    def __post_init__(self):
        if not self.detectors:
            raise ConfigurationError("detector list must be nonempty")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not 0.0 < self.nominal_pfa < 1.0:
            raise ConfigurationError("nominal_pfa must lie in (0, 1)")
        if self.k < self.geometry.n_elements:
            raise ConfigurationError(
                f"k={self.k} must be >= n_elements={self.geometry.n_elements}")
        if self.chunk_size < 1:
            raise ConfigurationError("chunk_size must be >= 1")
        if self.bslim_mode not in ("auto", "full"):
            raise ConfigurationError("bslim_mode must be 'auto' or 'full'")
        missing = [d.value for d in self.detectors
                   if d is not DetectorId.SAD and d not in self.thresholds]
        if missing:
            raise ConfigurationError(f"missing thresholds for: {', '.join(missing)}")

    @property
    def dictionary(self) -> Dictionary:
        return build_dictionary(self.geometry, self.grid)

    @property
    def scenario(self) -> TargetScenario:
        return TargetScenario(sinr_db=self.sinr_db, true_angle_deg=self.theta_t_deg,
                              phase_rad=self.phase_rad)


@dataclass(frozen=True)
class ResultRow:
    """One (axis point, detector) probability estimate."""

    axis: dict[str, float]
    detector: DetectorId
    estimate: float
    half_width: float
    trials: int
    seed: int


@dataclass
class ResultTable:
    """Estimates plus run diagnostics (counts, domination checks, mode)."""

    rows: list[ResultRow]
    meta: dict

    def estimate(self, detector: DetectorId, **axis: float) -> float:
        for row in self.rows:
            if row.detector == detector and all(
                    row.axis.get(k) == v for k, v in axis.items()):
                return row.estimate
        raise KeyError(f"no row for {detector} at {axis}")


@dataclass(frozen=True)
class MesaGrid:
    """Detection-probability surfaces over (mismatch angle, SINR)."""

    theta_t_deg: np.ndarray
    sinr_db: np.ndarray
    pd: dict[DetectorId, np.ndarray]
    half_width: dict[DetectorId, np.ndarray]
    trials: int
    seed: int

    def __post_init__(self):
        shape = (len(self.theta_t_deg), len(self.sinr_db))
        for det, mat in self.pd.items():
            if mat.shape != shape:
                raise ValueError(f"{det}: grid shape {mat.shape} != axes {shape}")


def binomial_half_width(p_hat: float, trials: int) -> float:
    """95% normal-approximation half-width for a binomial proportion."""
    return 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / trials)


def _resolve_bslim_mode(config: ExperimentConfig) -> tuple[int, float, float]:
    """Pick kernel mode and lazy triggers from the requested detectors."""
    dets = set(config.detectors)
    sparse_needed = bool(dets & set(
        (DetectorId.SAD, DetectorId.SAD_GLRT, DetectorId.SAD_AMF,
         DetectorId.BSLIM_AMF, DetectorId.BSLIM_GLRT)))
    if not sparse_needed:
        return _kernel.BSLIM_OFF, math.inf, math.inf
    if config.bslim_mode == "full" or DetectorId.SAD in dets:
        return _kernel.BSLIM_FULL, math.inf, math.inf
    thr = config.thresholds
    amf_side = [thr[d] for d in (DetectorId.SAD_AMF, DetectorId.BSLIM_AMF) if d in dets]
    kelly_side = [thr[d] for d in (DetectorId.SAD_GLRT, DetectorId.BSLIM_GLRT) if d in dets]
    trig_amf = min(amf_side) if amf_side else math.inf
    trig_kelly = min(kelly_side) if kelly_side else math.inf
    return _kernel.BSLIM_LAZY, trig_amf, trig_kelly


def _signal_vector(hypothesis: str, config: ExperimentConfig) -> np.ndarray:
    n = config.geometry.n_elements
    if hypothesis == "H0":
        return np.zeros(n, dtype=np.complex128)
    alpha = amplitude_for_sinr(config.scenario, config.interference, config.geometry)
    return alpha * steering_vector(config.geometry, config.theta_t_deg)


def _decisions(det: DetectorId, stats: np.ndarray, thresholds: Mapping[DetectorId, float]
               ) -> np.ndarray:
    if det is DetectorId.SAD:
        return stats[:, _kernel.COL_GATE] > 0.0
    if det in _COMPOSITE:
        col, needs_gate, _ = _COMPOSITE[det]
        fire = stats[:, col] > thresholds[det]
        if needs_gate:
            fire &= stats[:, _kernel.COL_GATE] > 0.0
        return fire
    return stats[:, _STAT_COLUMN[det]] > thresholds[det]


def _reference_chunk(wn: np.ndarray, config: ExperimentConfig, sig: np.ndarray,
                     mode: int, trig_amf: float, trig_kelly: float) -> np.ndarray:
    """Per-trial path through the public scene/recovery/detector API.

    Slow; exists to validate the compiled kernel against an independent
    implementation route on identical inputs.
    """
    dictionary = config.dictionary
    n = config.geometry.n_elements
    k = config.k
    m0 = dictionary.nominal_index - 1
    v_m = dictionary.nominal_column
    colf = config.interference.factor
    h_max = config.slim.resolved_h_max(dictionary.n_bins)
    out = np.zeros((wn.shape[0], _kernel.N_COLS), dtype=np.float64)
    for t in range(wn.shape[0]):
        w = wn[t]
        training = TrainingSet(samples=(colf @ w[: n * k].reshape(k, n).T).T)
        snap = Snapshot(z=colf @ w[n * k:] + sig)
        scm = sample_covariance(training)
        for det in CLASSICAL:
            out[t, _STAT_COLUMN[det]] = classical_statistic(det, snap, scm, v_m, k)
        if mode == _kernel.BSLIM_OFF:
            continue
        if mode == _kernel.BSLIM_LAZY and not (
                out[t, _kernel.COL_AMF] > trig_amf
                or out[t, _kernel.COL_KELLY] > trig_kelly):
            continue
        out[t, _kernel.COL_BSLIM_RAN] = 1.0
        est = bslim(snap, dictionary, scm, replace(config.slim, h_max=h_max))
        gate = sad_gate(est, dictionary.nominal_index)
        alpha_m = complex(est.alpha[m0])
        out[t, _kernel.COL_GATE] = 1.0 if gate else 0.0
        out[t, _kernel.COL_BSLIM_AMF] = bslim_amf_statistic(snap, scm, v_m, alpha_m)
        out[t, _kernel.COL_BSLIM_GLRT] = bslim_glrt_statistic(snap, scm, v_m, alpha_m, k)
    return out


def iter_chunks(hypothesis: str, config: ExperimentConfig, axis_index: int = 0,
                use_kernel: bool = True, bslim_off: bool = False
                ) -> Iterable[np.ndarray]:
    """Yield per-trial statistic arrays chunk by chunk."""
    if hypothesis not in HYPOTHESES:
        raise ConfigurationError(f"hypothesis must be one of {HYPOTHESES}")
    mode, trig_amf, trig_kelly = _resolve_bslim_mode(config)
    if bslim_off:
        mode, trig_amf, trig_kelly = _kernel.BSLIM_OFF, math.inf, math.inf
    dictionary = config.dictionary
    n = config.geometry.n_elements
    sig = _signal_vector(hypothesis, config)
    draws = uniforms_per_trial(n, config.k)
    stride = trial_stride(n, config.k)
    q_grid = np.asarray(config.slim.q_grid, dtype=np.float64)
    h_max = config.slim.resolved_h_max(dictionary.n_bins)
    stop_tol = config.slim.stop_tol if config.slim.stop_tol is not None else 0.0
    vmat = dictionary.matrix
    m0 = dictionary.nominal_index - 1
    if mode == _kernel.BSLIM_OFF:
        # classical statistics only touch the nominal column
        vmat = np.ascontiguousarray(vmat[:, m0:m0 + 1])
        m0 = 0
    first = 0
    while first < config.trials:
        size = min(config.chunk_size, config.trials - first)
        uniforms = trial_uniforms(config.seed, axis_index, first, size, stride)
        wn = complex_normals(uniforms[:, :draws])
        if use_kernel:
            out = np.empty((size, _kernel.N_COLS), dtype=np.float64)
            _kernel.simulate_chunk(
                wn, config.interference.factor, vmat, sig,
                config.k, m0, q_grid,
                config.slim.n_iterations, h_max, stop_tol, mode,
                trig_amf, trig_kelly, out)
        else:
            out = _reference_chunk(wn, config, sig, mode, trig_amf, trig_kelly)
        yield out
        first += size


def estimate_probability(hypothesis: str, config: ExperimentConfig, *,
                         axis_index: int = 0, axis: dict[str, float] | None = None,
                         use_kernel: bool = True) -> ResultTable:
    """Estimate the H0/H1 decision probability of every requested detector.

    All detectors see the same trials.  The table's meta carries raw counts,
    the per-trial domination and implication violation tallies (both must be
    zero), and how many trials actually evaluated the sparse recovery.
    """
    mode, trig_amf, trig_kelly = _resolve_bslim_mode(config)
    counts = {det: 0 for det in config.detectors}
    dom_viol = {det.value: 0 for det, _, _ in _DOMINATION}
    impl_viol = {det.value: 0 for det in _COMPOSITE if det in config.detectors}
    evaluated = 0
    for stats in iter_chunks(hypothesis, config, axis_index, use_kernel):
        for det in config.detectors:
            counts[det] += int(np.count_nonzero(_decisions(det, stats, config.thresholds)))
        ran = stats[:, _kernel.COL_BSLIM_RAN] > 0.0
        evaluated += int(np.count_nonzero(ran))
        if mode != _kernel.BSLIM_OFF:
            for det, col, ref_col in _DOMINATION:
                tol = 1e-9 * (1.0 + np.abs(stats[ran, ref_col]))
                dom_viol[det.value] += int(np.count_nonzero(
                    stats[ran, col] > stats[ran, ref_col] + tol))
            for det in impl_viol:
                did = DetectorId(det)
                _, _, classical_col = _COMPOSITE[did]
                fired = _decisions(did, stats, config.thresholds)
                classical = stats[:, classical_col] > config.thresholds[did]
                impl_viol[det] += int(np.count_nonzero(fired & ~classical))
    rows = []
    for det in config.detectors:
        p_hat = counts[det] / config.trials
        rows.append(ResultRow(axis=dict(axis or {}), detector=det, estimate=p_hat,
                              half_width=binomial_half_width(p_hat, config.trials),
                              trials=config.trials, seed=config.seed))
    meta = {
        "hypothesis": hypothesis,
        "counts": {det.value: c for det, c in counts.items()},
        "bslim_evaluations": evaluated,
        "bslim_mode": {_kernel.BSLIM_OFF: "off", _kernel.BSLIM_LAZY: "lazy",
                       _kernel.BSLIM_FULL: "full"}[mode],
        "domination_violations": dom_viol,
        "implication_violations": impl_viol,
        "thresholds": {det.value: float(v) for det, v in config.thresholds.items()},
        "axis_index": axis_index,
    }
    return ResultTable(rows=rows, meta=meta)


def _with_axis_value(base: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "K":
        return replace(base, k=int(value))
    if axis == "SINR":
        return replace(base, sinr_db=float(value))
    if axis == "THETA_T":
        return replace(base, theta_t_deg=float(value))
    if axis == "N_ITERATION":
        return replace(base, slim=replace(base.slim, n_iterations=int(value)))
    if axis == "DELTA_THETA":
        g = base.grid
        half_span = g.delta_deg * (g.n_bins - 1) / 2.0
        return replace(base, grid=AngularGrid.spanning(g.pointing_deg, float(value),
                                                       half_span))
    raise ConfigurationError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def sweep(axis: str, values: Sequence[float], base: ExperimentConfig,
          hypothesis: str = "H1",
          threshold_provider: Callable[[ExperimentConfig], Mapping[DetectorId, float]] | None = None,
          use_kernel: bool = True) -> ResultTable:
    """Run estimate_probability along one parameter axis.

    Thresholds depend on (N, K), so sweeping K requires a threshold_provider
    that returns the threshold map for each point.  Point i uses RNG axis
    index i, making the whole table a pure function of (config, seed).
    """
    axis = axis.upper()
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if len(values) == 0:
        raise ConfigurationError("sweep values must be nonempty")
    if axis == "K" and threshold_provider is None and len(set(values)) > 1:
        raise ConfigurationError("sweeping K requires a threshold_provider")
    rows: list[ResultRow] = []
    meta: dict = {"axis": axis, "points": []}
    column = _AXIS_COLUMN[axis]
    for i, value in enumerate(values):
        cfg = _with_axis_value(base, axis, value)
        if threshold_provider is not None:
            cfg = replace(cfg, thresholds=dict(threshold_provider(cfg)))
        table = estimate_probability(hypothesis, cfg, axis_index=i,
                                     axis={column: float(value)},
                                     use_kernel=use_kernel)
        rows.extend(table.rows)
        meta["points"].append(table.meta)
    return ResultTable(rows=rows, meta=meta)


def mesa_grid(theta_axis: Sequence[float], sinr_axis: Sequence[float],
              base: ExperimentConfig, use_kernel: bool = True) -> MesaGrid:
    """Detection probability over a (mismatch angle x SINR) grid."""
    if len(theta_axis) == 0 or len(sinr_axis) == 0:
        raise ConfigurationError("mesa axes must be nonempty")
    pd = {det: np.zeros((len(theta_axis), len(sinr_axis))) for det in base.detectors}
    hw = {det: np.zeros((len(theta_axis), len(sinr_axis))) for det in base.detectors}
    for i, theta in enumerate(theta_axis):
        for j, sinr in enumerate(sinr_axis):
            cfg = replace(base, theta_t_deg=float(theta), sinr_db=float(sinr))
            table = estimate_probability(
                "H1", cfg, axis_index=i * len(sinr_axis) + j, use_kernel=use_kernel)
            for row in table.rows:
                pd[row.detector][i, j] = row.estimate
                hw[row.detector][i, j] = row.half_width
    return MesaGrid(theta_t_deg=np.asarray(theta_axis, dtype=float),
                    sinr_db=np.asarray(sinr_axis, dtype=float),
                    pd=pd, half_width=hw, trials=base.trials, seed=base.seed)


def null_statistics(config: ExperimentConfig, n_trials: int, seed: int,
                    axis_index: int = 0) -> np.ndarray:
    """Classical H0 statistics for threshold calibration, shape (n_trials, 5).

    Columns follow the kernel layout for KELLY, AMF, RAO, WABORT, ACE.  A
    fresh SCM is drawn every trial so calibration reflects full adaptivity.
    """
    cfg = replace(config, trials=n_trials, seed=seed,
                  detectors=(DetectorId.KELLY,),
                  thresholds={DetectorId.KELLY: 0.0})
    chunks = [stats[:, : _kernel.COL_ACE + 1]
              for stats in iter_chunks("H0", cfg, axis_index, bslim_off=True)]
    return np.concatenate(chunks, axis=0)
