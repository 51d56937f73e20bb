"""Adaptive detection statistics and composite decision rules.

All quadratic forms are evaluated through the cached triangular factor of the
sample covariance (solve then norm); inverses are never formed explicitly.
Statistics depend on the snapshot only through squared moduli and real
quadratic forms, so they are invariant to a common phase rotation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve

from .recovery import ScmEstimate, SparseEstimate, _as_vector


class DetectorId(Enum):
    KELLY = "kelly"
    AMF = "amf"
    RAO = "rao"
    WABORT = "wabort"
    ACE = "ace"
    SAD = "sad"
    SAD_GLRT = "sad-glrt"
    SAD_AMF = "sad-amf"
    BSLIM_AMF = "bslim-amf"
    BSLIM_GLRT = "bslim-glrt"


#: Detectors whose decision is a plain threshold test on a scalar statistic.
CLASSICAL = (DetectorId.KELLY, DetectorId.AMF, DetectorId.RAO,
             DetectorId.WABORT, DetectorId.ACE)
#: Detectors that need the sparse amplitude estimate at the nominal bin.
SPARSE_BASED = (DetectorId.SAD, DetectorId.SAD_GLRT, DetectorId.SAD_AMF,
                DetectorId.BSLIM_AMF, DetectorId.BSLIM_GLRT)


@dataclass(frozen=True)
class DetectorOutcome:
    """Named statistic and binary decision for one detector on one trial."""

    id: DetectorId
    statistic: float | None
    decision: bool


def _whitened(z, scm: ScmEstimate, v: np.ndarray):
    zw = scm.whiten(_as_vector(z))
    vw = scm.whiten(v)
    a = complex(np.vdot(vw, zw))
    b = float(np.real(np.vdot(vw, vw)))
    c = float(np.real(np.vdot(zw, zw)))
    return a, b, c


def amf_statistic(z, scm: ScmEstimate, v: np.ndarray) -> float:
    """|v^H S^{-1} z|^2 / (v^H S^{-1} v)."""
    a, b, _ = _whitened(z, scm, v)
    return abs(a) ** 2 / b


def kelly_statistic(z, scm: ScmEstimate, v: np.ndarray, k: int) -> float:
    """AMF statistic further normalized by K + z^H S^{-1} z; lies in [0, 1)."""
    a, b, c = _whitened(z, scm, v)
    return abs(a) ** 2 / (b * (k + c))


def selective_statistic(det: DetectorId, z, scm: ScmEstimate, v: np.ndarray,
                        k: int) -> float:
    """RAO, W-ABORT or ACE statistic."""
    if det == DetectorId.ACE:
        a, b, c = _whitened(z, scm, v)
        return abs(a) ** 2 / (b * c)
    if det == DetectorId.WABORT:
        a, b, c = _whitened(z, scm, v)
        kelly = abs(a) ** 2 / (b * (k + c))
        return (1.0 / (k + c)) / (1.0 - kelly) ** 2
    if det == DetectorId.RAO:
        zv = _as_vector(z)
        s1 = np.outer(zv, zv.conj()) + k * scm.matrix
        fac = np.linalg.cholesky(s1)
        s1_inv_z = cho_solve((fac, True), zv)
        s1_inv_v = cho_solve((fac, True), v)
        num = abs(np.vdot(v, s1_inv_z)) ** 2
        den = float(np.real(np.vdot(v, s1_inv_v)))
        return num / den
    raise ValueError(f"not a selective detector: {det}")


def bslim_amf_statistic(z, scm: ScmEstimate, v_m: np.ndarray, alpha_m: complex) -> float:
    """Gain of explaining the snapshot by amplitude alpha_m at the nominal bin.

    Difference of whitened quadratic forms,
    z^H S^{-1} z - (z - a v)^H S^{-1} (z - a v); zero amplitude gives exactly 0
    and no division is involved.
    """
    zv = _as_vector(z)
    resid_w = scm.whiten(zv - alpha_m * v_m)
    zw = scm.whiten(zv)
    return float(np.real(np.vdot(zw, zw)) - np.real(np.vdot(resid_w, resid_w)))


def bslim_glrt_statistic(z, scm: ScmEstimate, v_m: np.ndarray, alpha_m: complex,
                         k: int) -> float:
    """BSLIM-AMF statistic normalized by K + z^H S^{-1} z."""
    zw = scm.whiten(_as_vector(z))
    c = float(np.real(np.vdot(zw, zw)))
    return bslim_amf_statistic(z, scm, v_m, alpha_m) / (k + c)


def sad_gate(estimate: SparseEstimate, nominal_index: int) -> bool:
    """True iff the recovered amplitude at the nominal bin (1-based) is nonzero.

    Zeros in the estimate are exact by construction, so this is a hard test.
    """
    m = estimate.alpha.shape[0]
    if not 1 <= nominal_index <= m:
        raise ValueError(f"nominal_index must lie in 1..{m}, got {nominal_index}")
    return bool(estimate.alpha[nominal_index - 1] != 0)


def two_stage_decision(gate: bool, statistic: float, threshold: float) -> bool:
    """Logical AND of the sparse gate and a strict threshold exceedance."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    return bool(gate and statistic > threshold)


def classical_statistic(det: DetectorId, z, scm: ScmEstimate, v: np.ndarray,
                        k: int) -> float:
    """Dispatch for the five threshold-only statistics."""
    if det == DetectorId.KELLY:
        return kelly_statistic(z, scm, v, k)
    if det == DetectorId.AMF:
        return amf_statistic(z, scm, v)
    if det in (DetectorId.RAO, DetectorId.WABORT, DetectorId.ACE):
        return selective_statistic(det, z, scm, v, k)
    raise ValueError(f"not a classical detector: {det}")
