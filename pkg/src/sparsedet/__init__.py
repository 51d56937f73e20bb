"""Tunable selective adaptive radar detection built on sparse recovery.

A library plus CLI for simulating adaptive detectors on a uniform linear
array: sparse amplitude recovery over an azimuth dictionary, the composite
decision rules built on it, classical CFAR references (Kelly GLRT, AMF,
RAO, W-ABORT, ACE), threshold calibration, and a deterministic Monte Carlo
engine for Pfa/Pd studies.
"""

from .detectors import (DetectorId, DetectorOutcome, amf_statistic,
                        bslim_amf_statistic, bslim_glrt_statistic,
                        kelly_statistic, sad_gate, selective_statistic,
                        two_stage_decision)
from .engine import (ExperimentConfig, MesaGrid, ResultRow, ResultTable,
                     estimate_probability, mesa_grid, set_parallel_workers,
                     sweep)
from .errors import CalibrationError, ConfigurationError, EstimationError
from .recovery import (ScmEstimate, SlimConfig, SparseEstimate, bic_select,
                       bic_value, bslim, ml_amplitude, sample_covariance,
                       slim_iterate, slim_objective)
from .scene import (AngularGrid, ArrayGeometry, Dictionary, InterferenceModel,
                    Snapshot, TargetScenario, TrainingSet, amplitude_for_sinr,
                    bin_coherence, build_dictionary, dictionary_coherence,
                    exp_covariance, steering_vector, synthesize_trial)
from .thresholds import (CalibrationMethod, ThresholdRecord, ThresholdTable,
                         amf_pfa_of_threshold, amf_threshold, beta_pdf,
                         kelly_threshold, montecarlo_threshold,
                         resolve_threshold)

__version__ = "0.1.0"

__all__ = [
    "AngularGrid", "ArrayGeometry", "CalibrationError", "CalibrationMethod",
    "ConfigurationError", "DetectorId", "DetectorOutcome", "Dictionary",
    "EstimationError", "ExperimentConfig", "InterferenceModel", "MesaGrid",
    "ResultRow", "ResultTable", "ScmEstimate", "SlimConfig", "Snapshot",
    "SparseEstimate", "TargetScenario", "ThresholdRecord", "ThresholdTable",
    "TrainingSet", "amf_pfa_of_threshold", "amf_statistic", "amf_threshold",
    "amplitude_for_sinr", "beta_pdf", "bic_select", "bic_value",
    "bin_coherence", "bslim", "bslim_amf_statistic", "bslim_glrt_statistic",
    "build_dictionary", "dictionary_coherence", "estimate_probability",
    "exp_covariance", "kelly_statistic", "kelly_threshold", "mesa_grid",
    "ml_amplitude", "montecarlo_threshold", "resolve_threshold",
    "sad_gate", "sample_covariance", "selective_statistic",
    "set_parallel_workers", "slim_iterate", "slim_objective",
    "steering_vector", "sweep", "synthesize_trial", "two_stage_decision",
    "__version__",
]
