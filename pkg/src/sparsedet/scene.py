"""Array geometry, angular grids, steering dictionaries and synthetic data.

Angles are degrees at the API and radians internally.  Azimuth bins are
numbered 1..M so that the nominal pointing direction sits exactly at bin
(M+1)/2 of a symmetric, odd-length grid.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator
from scipy.linalg import solve_triangular

from .errors import EstimationError
from .streams import complex_normals, trial_stride, uniforms_per_trial

HYPOTHESES = ("H0", "H1")


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count and spacing in wavelengths."""

    n_elements: int
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if self.n_elements < 2:
            raise ValueError(f"n_elements must be >= 2, got {self.n_elements}")
        if not self.spacing_ratio > 0:
            raise ValueError(f"spacing_ratio must be > 0, got {self.spacing_ratio}")


@dataclass(frozen=True)
class AngularGrid:
    """Symmetric grid of M azimuth bins spaced delta_deg about pointing_deg.

    M must be odd so the center bin is exactly the pointing direction.
    """

    pointing_deg: float
    delta_deg: float
    n_bins: int

    def __post_init__(self):
        if self.n_bins < 1 or self.n_bins % 2 == 0:
            raise ValueError(f"n_bins must be a positive odd integer, got {self.n_bins}")
        if not self.delta_deg > 0:
            raise ValueError(f"delta_deg must be > 0, got {self.delta_deg}")
        a = self.angles_deg
        if a[0] <= -90.0 or a[-1] >= 90.0:
            raise ValueError(
                f"grid [{a[0]}, {a[-1]}] deg must lie strictly inside (-90, 90)")

    @property
    def angles_deg(self) -> np.ndarray:
        half = (self.n_bins - 1) // 2
        return self.pointing_deg + self.delta_deg * (np.arange(self.n_bins) - half)

    @property
    def nominal_index(self) -> int:
        """1-based index of the pointing-direction bin."""
        return (self.n_bins + 1) // 2

    @staticmethod
    def spanning(pointing_deg: float, delta_deg: float, half_span_deg: float) -> "AngularGrid":
        """Largest symmetric grid with spacing delta_deg inside +-half_span_deg."""
        if not half_span_deg > 0:
            raise ValueError("half_span_deg must be > 0")
        half = int(math.floor(half_span_deg / delta_deg + 1e-9))
        return AngularGrid(pointing_deg, delta_deg, 2 * half + 1)


def steering_vector(geometry: ArrayGeometry, angle_deg: float) -> np.ndarray:
    """Plane-wave array response; element i carries phase i*2*pi*(d/lambda)*sin(angle)."""
    if not abs(angle_deg) < 90.0:
        raise ValueError(f"angle must satisfy |angle| < 90 deg, got {angle_deg}")
    idx = np.arange(geometry.n_elements)
    phase = 2.0 * np.pi * geometry.spacing_ratio * math.sin(math.radians(angle_deg))
    return np.exp(1j * idx * phase)


@dataclass(frozen=True)
class Dictionary:
    """Steering matrix over an angular grid; column l is v(angles_deg[l])."""

    matrix: np.ndarray
    grid: AngularGrid
    geometry: ArrayGeometry
    nominal_index: int

    @property
    def n_bins(self) -> int:
        return self.matrix.shape[1]

    @property
    def nominal_column(self) -> np.ndarray:
        return self.matrix[:, self.nominal_index - 1]


def build_dictionary(geometry: ArrayGeometry, grid: AngularGrid) -> Dictionary:
    """Stack steering vectors for every grid bin into an N x M matrix."""
    cols = [steering_vector(geometry, a) for a in grid.angles_deg]
    matrix = np.column_stack(cols)
    matrix.setflags(write=False)
    return Dictionary(matrix=matrix, grid=grid, geometry=geometry,
                      nominal_index=grid.nominal_index)


@dataclass(frozen=True)
class InterferenceModel:
    """Hermitian positive-definite interference covariance with cached factor.

    ``factor`` is the lower-triangular Cholesky factor L with L L^H = covariance;
    it colors white noise and whitens data via triangular solves.
    """

    covariance: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)
    label: str = ""

    def __post_init__(self):
        r = np.asarray(self.covariance, dtype=np.complex128)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"covariance must be square, got shape {r.shape}")
        herm = np.linalg.norm(r - r.conj().T) / max(np.linalg.norm(r), 1e-300)
        if herm > 1e-12:
            raise ValueError(f"covariance is not Hermitian (relative deviation {herm:.2e})")
        r = 0.5 * (r + r.conj().T)
        try:
            fac = np.linalg.cholesky(r)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        r.setflags(write=False)
        fac.setflags(write=False)
        object.__setattr__(self, "covariance", r)
        object.__setattr__(self, "factor", fac)

    @property
    def n(self) -> int:
        return self.covariance.shape[0]

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Apply L^{-1} so that whitened noise is unit white."""
        return solve_triangular(self.factor, x, lower=True)

    def fingerprint(self) -> str:
        """Stable identifier for threshold-cache keys."""
        if self.label:
            return self.label
        return hashlib.sha256(np.ascontiguousarray(self.covariance).tobytes()).hexdigest()[:16]


def exp_covariance(n: int, rho: float) -> InterferenceModel:
    """Exponentially correlated covariance, entry (i, j) = rho^|i-j|."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    idx = np.arange(n)
    cov = np.power(rho, np.abs(idx[:, None] - idx[None, :])).astype(np.complex128)
    return InterferenceModel(covariance=cov, label=f"exp(n={n},rho={rho!r})")


@dataclass(frozen=True)
class TargetScenario:
    """Coherent return: SINR in dB, true arrival angle, deterministic phase."""

    sinr_db: float
    true_angle_deg: float
    phase_rad: float = 0.0


@dataclass(frozen=True)
class Snapshot:
    """Cell-under-test vector z."""

    z: np.ndarray


@dataclass(frozen=True)
class TrainingSet:
    """K signal-free secondary vectors, stored as rows of an (K, N) array."""

    samples: np.ndarray

    @property
    def k(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]


def amplitude_for_sinr(scenario: TargetScenario, model: InterferenceModel,
                       geometry: ArrayGeometry) -> complex:
    """Complex amplitude whose whitened power matches the requested SINR.

    Solves |a|^2 * v^H R^{-1} v = 10^(sinr_db/10) with arg(a) = phase_rad,
    where v is the steering vector at the true target angle.
    """
    v = steering_vector(geometry, scenario.true_angle_deg)
    vw = model.whiten(v)
    quad = float(np.real(np.vdot(vw, vw)))
    mag = math.sqrt(10.0 ** (scenario.sinr_db / 10.0) / quad)
    return mag * complex(math.cos(scenario.phase_rad), math.sin(scenario.phase_rad))


def synthesize_trial(hypothesis: str, scenario: TargetScenario, model: InterferenceModel,
                     geometry: ArrayGeometry, k: int, rng: Generator
                     ) -> tuple[Snapshot, TrainingSet]:
    """Draw one Monte Carlo trial: snapshot plus K homogeneous training vectors.

    Noise is factor @ w with w i.i.d. unit circular complex Gaussian; under H1
    the snapshot additionally carries amplitude_for_sinr(...) times the exact
    steering vector at the true angle (off-grid targets are never snapped).
    Training vectors never contain signal.  Consumes exactly one trial
    stride of uniforms from rng, so identically seeded streams reproduce the
    trial bit-for-bit and consecutive calls stay aligned with the engine's
    per-trial counter slices.
    """
    if hypothesis not in HYPOTHESES:
        raise ValueError(f"hypothesis must be one of {HYPOTHESES}, got {hypothesis!r}")
    n = geometry.n_elements
    if k < n:
        raise EstimationError(f"need k >= n for an invertible SCM, got k={k}, n={n}")
    w = complex_normals(rng.random(trial_stride(n, k))[: uniforms_per_trial(n, k)])
    training = (model.factor @ w[: n * k].reshape(k, n).T).T
    z = model.factor @ w[n * k:]
    if hypothesis == "H1":
        alpha = amplitude_for_sinr(scenario, model, geometry)
        z = z + alpha * steering_vector(geometry, scenario.true_angle_deg)
    return Snapshot(z=z), TrainingSet(samples=training)


def _whitened_columns(dictionary: Dictionary, model: InterferenceModel) -> np.ndarray:
    return model.whiten(dictionary.matrix)


def dictionary_coherence(dictionary: Dictionary, model: InterferenceModel) -> float:
    """Worst-case normalized correlation between distinct whitened columns."""
    m = dictionary.n_bins
    if m < 2:
        raise ValueError("coherence needs at least two dictionary columns")
    vw = _whitened_columns(dictionary, model)
    norms = np.linalg.norm(vw, axis=0)
    gram = np.abs(vw.conj().T @ vw) / np.outer(norms, norms)
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))


def bin_coherence(dictionary: Dictionary, model: InterferenceModel, bin_index: int) -> float:
    """Worst normalized whitened correlation of one bin against all others.

    ``bin_index`` is 1-based, matching the grid's bin numbering.
    """
    m = dictionary.n_bins
    if m < 2:
        raise ValueError("coherence needs at least two dictionary columns")
    if not 1 <= bin_index <= m:
        raise ValueError(f"bin_index must lie in 1..{m}, got {bin_index}")
    vw = _whitened_columns(dictionary, model)
    col = vw[:, bin_index - 1]
    norms = np.linalg.norm(vw, axis=0)
    corr = np.abs(vw.conj().T @ col) / (norms * norms[bin_index - 1])
    corr[bin_index - 1] = 0.0
    return float(min(corr.max(), 1.0))
