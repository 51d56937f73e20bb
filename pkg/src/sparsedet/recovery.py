"""Sample covariance, SLIM sparse amplitude recovery and BIC order selection.

The recovery pipeline estimates a sparse amplitude vector over the azimuth
dictionary: a fixed-point iteration solves the MAP problem for each sparsity
exponent q, BIC truncates each solution to its best support size, and the
q with the lowest BIC wins.  All tie-breaks are deterministic: lower bin
index, then smaller support size, then smaller q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EstimationError
from .scene import Dictionary, Snapshot, TrainingSet

ZERO_FLOOR_REL = 1e-12

DEFAULT_Q_GRID = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_N_ITERATIONS = 15


@dataclass(frozen=True)
class ScmEstimate:
    """Sample covariance of K training vectors with cached Cholesky factor."""

    matrix: np.ndarray
    k: int
    chol_lower: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        try:
            fac = np.linalg.cholesky(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("sample covariance is numerically singular") from exc
        self.matrix.setflags(write=False)
        fac.setflags(write=False)
        object.__setattr__(self, "chol_lower", fac)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Triangular solve with the cached factor; never forms the inverse."""
        return solve_triangular(self.chol_lower, x, lower=True)


def sample_covariance(training: TrainingSet) -> ScmEstimate:
    """SCM over the training rows: (1/K) sum_k z_k z_k^H."""
    z = np.asarray(training.samples, dtype=np.complex128)
    k, n = z.shape
    if k < n:
        raise EstimationError(f"need K >= N for an invertible SCM, got K={k}, N={n}")
    scm = (z.T @ z.conj()) / k
    scm = 0.5 * (scm + scm.conj().T)
    return ScmEstimate(matrix=scm, k=k)


@dataclass(frozen=True)
class SlimConfig:
    """Recovery settings: sparsity-exponent grid, iteration count, max order.

    ``stop_tol`` optionally stops iterating once the sup-norm change falls
    below stop_tol times the iterate's sup-norm; disabled by default so runs
    always perform exactly n_iterations updates.
    """

    q_grid: tuple[float, ...] = DEFAULT_Q_GRID
    n_iterations: int = DEFAULT_N_ITERATIONS
    h_max: int | None = None
    stop_tol: float | None = None

    def __post_init__(self):
        qs = tuple(float(q) for q in self.q_grid)
        if not qs:
            raise ValueError("q_grid must be nonempty")
        if any(not 0.0 < q <= 1.0 for q in qs):
            raise ValueError(f"q_grid values must lie in (0, 1], got {qs}")
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError("q_grid must be strictly increasing")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.h_max is not None and self.h_max < 1:
            raise ValueError("h_max must be >= 1")
        object.__setattr__(self, "q_grid", qs)

    def resolved_h_max(self, n_bins: int) -> int:
        if self.h_max is None:
            return n_bins
        if self.h_max > n_bins:
            raise ValueError(f"h_max={self.h_max} exceeds dictionary size M={n_bins}")
        return self.h_max


@dataclass(frozen=True)
class SparseEstimate:
    """Recovered amplitudes: hard-thresholded vector, order, q and BIC value."""

    alpha: np.ndarray
    selected_order: int
    selected_q: float
    bic_value: float


def _as_vector(z) -> np.ndarray:
    if isinstance(z, Snapshot):
        return z.z
    return np.asarray(z, dtype=np.complex128)


def ml_amplitude(z, scm: ScmEstimate, v: np.ndarray) -> complex:
    """Unconstrained per-steering ML amplitude (v^H S^{-1} z) / (v^H S^{-1} v)."""
    zv = _as_vector(z)
    vw = scm.whiten(v)
    zw = scm.whiten(zv)
    return complex(np.vdot(vw, zw) / np.real(np.vdot(vw, vw)))


def _apply_floor(alpha: np.ndarray) -> None:
    mx = np.max(np.abs(alpha)) if alpha.size else 0.0
    if mx > 0.0:
        alpha[np.abs(alpha) < ZERO_FLOOR_REL * mx] = 0.0


def slim_iterate(z, dictionary: Dictionary, scm: ScmEstimate, q: float,
                 n_iterations: int, stop_tol: float | None = None) -> np.ndarray:
    """Run the sparse-amplitude fixed-point iteration for one exponent q.

    Starting from the per-bin ML amplitudes, each update solves the
    reweighted normal equations with the penalty weights frozen at the
    current iterate.  The update is evaluated in N-dimensional whitened
    space as P V_w^H (V_w P V_w^H + I)^{-1} z_w, which matches the direct
    M x M normal-equation solve wherever all weights are positive but also
    handles exact-zero amplitudes: a zero weight pins its amplitude to zero
    for all later iterations.  Amplitudes below ZERO_FLOOR_REL times the
    largest magnitude are snapped to exact zero each sweep.

    Returns the amplitude vector after exactly n_iterations updates (fewer
    only if stop_tol is set and reached, or the iterate collapses to zero).
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    zw = scm.whiten(_as_vector(z))
    vw = scm.whiten(dictionary.matrix)
    n, m = vw.shape
    gains = np.real(np.einsum("ij,ij->j", vw.conj(), vw))
    alpha = (vw.conj().T @ zw) / gains
    eye = np.eye(n, dtype=np.complex128)
    for _ in range(n_iterations):
        if not np.any(alpha):
            break
        _apply_floor(alpha)
        weights = np.abs(alpha) ** (2.0 - q)
        a_mat = eye + (vw * weights) @ vw.conj().T
        y = np.linalg.solve(a_mat, zw)
        new_alpha = weights * (vw.conj().T @ y)
        if stop_tol is not None:
            scale = np.max(np.abs(new_alpha))
            if scale > 0.0 and np.max(np.abs(new_alpha - alpha)) <= stop_tol * scale:
                alpha = new_alpha
                break
        alpha = new_alpha
    _apply_floor(alpha)
    return alpha


def slim_objective(alpha: np.ndarray, z, dictionary: Dictionary, scm: ScmEstimate,
                   q: float) -> float:
    """Penalized whitened misfit minimized by the fixed-point iteration."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    resid = scm.whiten(_as_vector(z) - dictionary.matrix @ alpha)
    penalty = (2.0 / q) * np.sum(np.abs(alpha) ** q - 1.0)
    return float(np.real(np.vdot(resid, resid)) + penalty)


def bic_value(z, dictionary: Dictionary, scm: ScmEstimate, alpha_trunc: np.ndarray,
              h: int) -> float:
    """Order-h BIC: twice the whitened residual power plus 3*h*ln(2N).

    Three real parameters (complex amplitude plus angle) are charged per
    retained target; the log is natural.
    """
    m = dictionary.n_bins
    if not 1 <= h <= m:
        raise ValueError(f"h must lie in 1..{m}, got {h}")
    resid = scm.whiten(_as_vector(z) - dictionary.matrix @ alpha_trunc)
    return float(2.0 * np.real(np.vdot(resid, resid))
                 + 3.0 * h * math.log(2 * scm.n))


def _magnitude_order(alpha: np.ndarray) -> np.ndarray:
    """Bin indices sorted by decreasing magnitude, ties to the lower index."""
    m = alpha.shape[0]
    return np.lexsort((np.arange(m), -np.abs(alpha)))


def truncate_to_order(alpha: np.ndarray, h: int) -> np.ndarray:
    """Keep the h largest-magnitude entries, zeroing the rest."""
    keep = _magnitude_order(alpha)[:h]
    out = np.zeros_like(alpha)
    out[keep] = alpha[keep]
    return out


def bic_select(z, dictionary: Dictionary, scm: ScmEstimate, alpha_full: np.ndarray,
               h_max: int) -> tuple[np.ndarray, float, int]:
    """Pick the support size in 1..h_max minimizing BIC.

    Returns (truncated amplitudes, BIC value, selected order); BIC ties go to
    the smaller order.
    """
    m = dictionary.n_bins
    if not 1 <= h_max <= m:
        raise ValueError(f"h_max must lie in 1..{m}, got {h_max}")
    zw = scm.whiten(_as_vector(z))
    vw = scm.whiten(dictionary.matrix)
    order = _magnitude_order(alpha_full)
    penalty = 3.0 * math.log(2 * scm.n)
    resid = zw.copy()
    best_h, best_bic = 1, math.inf
    for h in range(1, h_max + 1):
        l = order[h - 1]
        resid = resid - alpha_full[l] * vw[:, l]
        bic = 2.0 * float(np.real(np.vdot(resid, resid))) + penalty * h
        if bic < best_bic:
            best_bic, best_h = bic, h
    return truncate_to_order(alpha_full, best_h), best_bic, best_h


def bslim(z, dictionary: Dictionary, scm: ScmEstimate, config: SlimConfig) -> SparseEstimate:
    """Parameter-free recovery: iterate over the q grid, keep the lowest BIC.

    BIC ties across exponents resolve to the smaller q.  The reported order
    equals the number of nonzero amplitudes; it can fall below the BIC-chosen
    support size only in the degenerate all-zero case (z = 0).
    """
    h_max = config.resolved_h_max(dictionary.n_bins)
    best: tuple[float, float, np.ndarray] | None = None
    for q in config.q_grid:
        alpha = slim_iterate(z, dictionary, scm, q, config.n_iterations,
                             stop_tol=config.stop_tol)
        trunc, bic, _ = bic_select(z, dictionary, scm, alpha, h_max)
        if best is None or bic < best[0]:
            best = (bic, q, trunc)
    bic, q_hat, alpha_hat = best
    return SparseEstimate(alpha=alpha_hat,
                          selected_order=int(np.count_nonzero(alpha_hat)),
                          selected_q=q_hat, bic_value=bic)
