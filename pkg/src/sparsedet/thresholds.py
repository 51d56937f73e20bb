"""Detection thresholds for a nominal false-alarm probability.

Three calibration routes, chosen by detector family:

* closed form for the Kelly GLRT (shared by the GLRT-gated composites),
* numeric inversion of the AMF false-alarm integral (shared by the
  AMF-gated composites),
* Monte Carlo order statistics for RAO, W-ABORT and ACE, with a fresh SCM
  every trial.

Calibrated values can be persisted in a JSON table keyed by detector, data
sizes, nominal Pfa and (for Monte Carlo entries) the interference
fingerprint, seed and trial count.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gammaln

from .detectors import DetectorId
from .errors import CalibrationError
from .scene import AngularGrid, ArrayGeometry, InterferenceModel

#: detectors calibrated by each route (composites inherit their gate's threshold)
CLOSED_FORM_FAMILY = (DetectorId.KELLY, DetectorId.SAD_GLRT, DetectorId.BSLIM_GLRT)
QUADRATURE_FAMILY = (DetectorId.AMF, DetectorId.SAD_AMF, DetectorId.BSLIM_AMF)
MONTE_CARLO_FAMILY = (DetectorId.RAO, DetectorId.WABORT, DetectorId.ACE)


class CalibrationMethod(Enum):
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"


def kelly_threshold(pfa: float, n: int, k: int) -> float:
    """Exact Kelly GLRT threshold: 1 - pfa^(1/(K-N+1))."""
    if not 0.0 < pfa <= 1.0:
        raise ValueError(f"pfa must lie in (0, 1], got {pfa}")
    if k < n:
        raise ValueError(f"need k >= n, got k={k}, n={n}")
    return 1.0 - pfa ** (1.0 / (k - n + 1))


def beta_pdf(x: float, n: int, m: int) -> float:
    """Central complex Beta density with integer shape parameters.

    Coefficient (n+m-1)!/((n-1)!(m-1)!) evaluated through log-gamma so that
    shapes in the hundreds do not overflow.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if n < 1 or m < 1:
        raise ValueError("shape parameters must be >= 1")
    if x == 0.0:
        return 0.0 if n > 1 else float(m)
    if x == 1.0:
        return 0.0 if m > 1 else float(n)
    log_coef = gammaln(n + m) - gammaln(n) - gammaln(m)
    return float(math.exp(log_coef + (n - 1) * math.log(x) + (m - 1) * math.log1p(-x)))


def amf_pfa_of_threshold(eta: float, n: int, k: int) -> float:
    """False-alarm probability of the AMF at threshold eta.

    Adaptive quadrature of the loss-factor integral
    int_0^1 f_beta(rho; L+1, N-1) (1 + eta rho / K)^(-L) drho with L = K-N+1;
    strictly decreasing in eta, equal to 1 at eta = 0.
    """
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    if n < 2:
        raise ValueError("AMF calibration needs n >= 2")
    if k < n:
        raise ValueError(f"need k >= n, got k={k}, n={n}")
    big_l = k - n + 1

    def integrand(rho: float) -> float:
        return beta_pdf(rho, big_l + 1, n - 1) * (1.0 + eta * rho / k) ** (-big_l)

    value, _ = quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(value)


def amf_threshold(pfa: float, n: int, k: int) -> float:
    """Invert the AMF false-alarm integral by bracketed root finding."""
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must lie in (0, 1), got {pfa}")
    hi = 1.0
    while amf_pfa_of_threshold(hi, n, k) > pfa:
        hi *= 2.0
        if hi > 2.0 ** 60:
            raise CalibrationError(f"could not bracket AMF threshold for pfa={pfa}")
    return float(brentq(lambda e: amf_pfa_of_threshold(e, n, k) - pfa,
                        0.0, hi, xtol=1e-14, rtol=1e-12))


def montecarlo_threshold(det: DetectorId, geometry: ArrayGeometry,
                         model: InterferenceModel, k: int, pfa: float,
                         n_trials: int, seed: int, pointing_deg: float = 0.0,
                         chunk_size: int = 8192) -> float:
    """Order-statistic threshold from freshly simulated null statistics.

    Generates n_trials H0 trials (new SCM each trial), sorts the requested
    statistic and returns the value at rank ceil(n_trials * (1 - pfa)).
    Reproducible: the same seed gives the same threshold bit for bit,
    independent of chunking or worker count.
    """
    from . import engine  # deferred: engine depends on detectors, not on us
    from . import _kernel

    if det not in MONTE_CARLO_FAMILY and det not in (DetectorId.KELLY, DetectorId.AMF):
        raise CalibrationError(f"no Monte Carlo null statistic for {det}")
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must lie in (0, 1), got {pfa}")
    if n_trials < 100.0 / pfa:
        raise CalibrationError(
            f"n_trials={n_trials} too small for pfa={pfa}; need >= {100.0 / pfa:.0f}")
    cfg = engine.ExperimentConfig(
        geometry=geometry, grid=AngularGrid(pointing_deg, 1.0, 1),
        interference=model, k=k, sinr_db=0.0, theta_t_deg=pointing_deg,
        detectors=(DetectorId.KELLY,), thresholds={DetectorId.KELLY: 0.0},
        nominal_pfa=pfa, trials=n_trials, seed=seed, chunk_size=chunk_size)
    col = {DetectorId.KELLY: _kernel.COL_KELLY, DetectorId.AMF: _kernel.COL_AMF,
           DetectorId.RAO: _kernel.COL_RAO, DetectorId.WABORT: _kernel.COL_WABORT,
           DetectorId.ACE: _kernel.COL_ACE}[det]
    stats = np.sort(engine.null_statistics(cfg, n_trials, seed)[:, col])
    rank = math.ceil(n_trials * (1.0 - pfa))
    return float(stats[rank - 1])


@dataclass(frozen=True)
class ThresholdRecord:
    """One calibrated threshold plus enough metadata to audit or redo it."""

    detector: str
    n: int
    k: int
    pfa: float
    fingerprint: str
    threshold: float
    method: str
    trials_used: int = 0
    seed: int | None = None


def _key(detector: str, n: int, k: int, pfa: float, fingerprint: str) -> tuple:
    return (detector, int(n), int(k), repr(float(pfa)), fingerprint)


class ThresholdTable:
    """In-memory threshold cache with JSON persistence."""

    def __init__(self, records: dict[tuple, ThresholdRecord] | None = None):
        self._records = dict(records or {})

    def __len__(self) -> int:
        return len(self._records)

    def lookup(self, detector: DetectorId, n: int, k: int, pfa: float,
               fingerprint: str = "") -> ThresholdRecord | None:
        return self._records.get(_key(detector.value, n, k, pfa, fingerprint))

    def store(self, record: ThresholdRecord) -> None:
        if record.threshold < 0:
            raise ValueError("thresholds must be >= 0")
        self._records[_key(record.detector, record.n, record.k, record.pfa,
                           record.fingerprint)] = record

    def records(self) -> list[ThresholdRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def save(self, path: str | Path) -> None:
        payload = [asdict(r) for r in self.records()]
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdTable":
        path = Path(path)
        if not path.exists():
            return cls()
        records = [ThresholdRecord(**item) for item in json.loads(path.read_text())]
        return cls({_key(r.detector, r.n, r.k, r.pfa, r.fingerprint): r
                    for r in records})


def calibration_method(det: DetectorId) -> CalibrationMethod:
    if det in CLOSED_FORM_FAMILY:
        return CalibrationMethod.CLOSED_FORM
    if det in QUADRATURE_FAMILY:
        return CalibrationMethod.QUADRATURE
    if det in MONTE_CARLO_FAMILY:
        return CalibrationMethod.MONTE_CARLO
    raise CalibrationError(f"{det} has no threshold (gate-only rule)")


def resolve_threshold(det: DetectorId, n: int, k: int, pfa: float, *,
                      geometry: ArrayGeometry | None = None,
                      model: InterferenceModel | None = None,
                      table: ThresholdTable | None = None,
                      mc_trials: int | None = None, mc_seed: int = 0,
                      pointing_deg: float = 0.0,
                      chunk_size: int = 8192) -> tuple[ThresholdRecord, bool]:
    """Return (record, cache_hit) for one detector, calibrating on a miss.

    Closed-form and quadrature entries are CFAR and carry an empty
    interference fingerprint; Monte Carlo entries are keyed by the model's
    fingerprint and record their seed and trial count.
    """
    method = calibration_method(det)
    fingerprint = ""
    if method == CalibrationMethod.MONTE_CARLO:
        if model is None or geometry is None:
            raise CalibrationError(
                f"{det.value} needs an interference model and geometry to calibrate")
        fingerprint = model.fingerprint()
    if table is not None:
        cached = table.lookup(det, n, k, pfa, fingerprint)
        if cached is not None:
            return cached, True
    if method == CalibrationMethod.CLOSED_FORM:
        record = ThresholdRecord(det.value, n, k, pfa, "", kelly_threshold(pfa, n, k),
                                 CalibrationMethod.CLOSED_FORM.value)
    elif method == CalibrationMethod.QUADRATURE:
        record = ThresholdRecord(det.value, n, k, pfa, "", amf_threshold(pfa, n, k),
                                 CalibrationMethod.QUADRATURE.value)
    else:
        trials = int(mc_trials if mc_trials is not None else math.ceil(1000.0 / pfa))
        value = montecarlo_threshold(det, geometry, model, k, pfa, trials, mc_seed,
                                     pointing_deg=pointing_deg, chunk_size=chunk_size)
        record = ThresholdRecord(det.value, n, k, pfa, fingerprint, value,
                                 CalibrationMethod.MONTE_CARLO.value,
                                 trials_used=trials, seed=mc_seed)
    if table is not None:
        table.store(record)
    return record, False
