"""Detector statistics: trivial values, cross-formula identities, invariances."""

import numpy as np
import pytest

from sparsedet import (AngularGrid, ArrayGeometry, DetectorId, DetectorOutcome,
                       SlimConfig, SparseEstimate, TargetScenario, TrainingSet,
                       amf_statistic, bslim, bslim_amf_statistic,
                       bslim_glrt_statistic, build_dictionary, exp_covariance,
                       kelly_statistic, ml_amplitude, sad_gate,
                       sample_covariance, selective_statistic,
                       synthesize_trial, two_stage_decision)
from sparsedet.streams import trial_generator, trial_stride

GEO8 = ArrayGeometry(8)
DICT8 = build_dictionary(GEO8, AngularGrid(0.0, 3.0, 33))


def random_case(seed, n=8, k=32, hypothesis="H1"):
    geo = ArrayGeometry(n)
    model = exp_covariance(n, 0.9)
    gen = trial_generator(seed, 0, 0, trial_stride(n, k))
    snap, train = synthesize_trial(hypothesis, TargetScenario(8.0, 1.0), model,
                                   geo, k, gen)
    return snap.z, sample_covariance(train)


def quad_forms(z, scm, v):
    """Brute-force quadratic forms through an explicit inverse."""
    r_inv = np.linalg.inv(scm.matrix)
    a = v.conj() @ r_inv @ z
    b = float(np.real(v.conj() @ r_inv @ v))
    c = float(np.real(z.conj() @ r_inv @ z))
    return a, b, c


class TestKellyAndAmf:
    def test_orthogonal_snapshot_scores_zero(self):
        z, scm = random_case(1)
        v = DICT8.nominal_column
        vw = scm.whiten(v)
        rng = np.random.default_rng(0)
        r = rng.normal(size=8) + 1j * rng.normal(size=8)
        zw = r - vw * (np.vdot(vw, r) / np.vdot(vw, vw))
        z_perp = scm.chol_lower @ zw
        assert kelly_statistic(z_perp, scm, v, 32) < 1e-12
        assert amf_statistic(z_perp, scm, v) < 1e-12

    def test_collinear_snapshot_closed_forms(self):
        z, scm = random_case(2)
        v = DICT8.nominal_column
        c = 2.0 - 1.0j
        _, b, _ = quad_forms(c * v, scm, v)
        g = abs(c) ** 2 * b
        got_amf = amf_statistic(c * v, scm, v)
        got_kelly = kelly_statistic(c * v, scm, v, 32)
        assert abs(got_amf - g) < 1e-10 * g
        assert abs(got_kelly - g / (32.0 + g)) < 1e-12

    def test_ratio_identity_and_ml_link(self):
        for seed in range(20):
            z, scm = random_case(seed)
            v = DICT8.nominal_column
            amf = amf_statistic(z, scm, v)
            kelly = kelly_statistic(z, scm, v, 32)
            _, b, c = quad_forms(z, scm, v)
            assert abs(kelly - amf / (32.0 + c)) < 1e-12 * max(1.0, kelly)
            ml = ml_amplitude(z, scm, v)
            assert abs(amf - abs(ml) ** 2 * b) < 1e-12 * max(1.0, amf)


class TestSelective:
    def test_ace_is_one_on_collinear_snapshot(self):
        z, scm = random_case(3)
        v = DICT8.nominal_column
        got = selective_statistic(DetectorId.ACE, (0.5 + 2.0j) * v, scm, v, 32)
        assert abs(got - 1.0) < 1e-12

    def test_wabort_orthogonal_limit(self):
        z, scm = random_case(4)
        v = DICT8.nominal_column
        vw = scm.whiten(v)
        rng = np.random.default_rng(1)
        r = rng.normal(size=8) + 1j * rng.normal(size=8)
        zw = r - vw * (np.vdot(vw, r) / np.vdot(vw, vw))
        z_perp = scm.chol_lower @ zw
        _, _, c = quad_forms(z_perp, scm, v)
        got = selective_statistic(DetectorId.WABORT, z_perp, scm, v, 32)
        assert abs(got - 1.0 / (32.0 + c)) < 1e-12

    def test_rao_matches_brute_force_inverse(self):
        for seed in range(10):
            z, scm = random_case(seed + 10)
            v = DICT8.nominal_column
            s1 = np.outer(z, z.conj()) + 32.0 * scm.matrix
            s1_inv = np.linalg.inv(s1)
            want = abs(v.conj() @ s1_inv @ z) ** 2 / np.real(v.conj() @ s1_inv @ v)
            got = selective_statistic(DetectorId.RAO, z, scm, v, 32)
            assert abs(got - want) < 1e-10 * max(1.0, abs(want))

    def test_dispatch_rejects_non_selective(self):
        z, scm = random_case(5)
        with pytest.raises(ValueError):
            selective_statistic(DetectorId.KELLY, z, scm, DICT8.nominal_column, 32)


class TestBslimStatistics:
    def test_zero_amplitude_gives_zero(self):
        z, scm = random_case(6)
        v = DICT8.nominal_column
        assert bslim_amf_statistic(z, scm, v, 0.0) == 0.0
        assert bslim_glrt_statistic(z, scm, v, 0.0, 32) == 0.0

    def test_ml_amplitude_recovers_classical(self):
        z, scm = random_case(7)
        v = DICT8.nominal_column
        ml = ml_amplitude(z, scm, v)
        amf = amf_statistic(z, scm, v)
        kelly = kelly_statistic(z, scm, v, 32)
        assert abs(bslim_amf_statistic(z, scm, v, ml) - amf) < 1e-10 * amf
        assert abs(bslim_glrt_statistic(z, scm, v, ml, 32) - kelly) < 1e-10 * kelly

    def test_multiplier_recast_and_ratio(self):
        rng = np.random.default_rng(8)
        for seed in range(20):
            z, scm = random_case(seed + 30)
            v = DICT8.nominal_column
            alpha = complex(*rng.normal(scale=0.5, size=2))
            got = bslim_amf_statistic(z, scm, v, alpha)
            ml = ml_amplitude(z, scm, v)
            amf = amf_statistic(z, scm, v)
            recast = amf * (1.0 - abs(alpha - ml) ** 2 / abs(ml) ** 2)
            assert abs(got - recast) < 1e-10 * max(1.0, abs(got))
            _, _, c = quad_forms(z, scm, v)
            got_glrt = bslim_glrt_statistic(z, scm, v, alpha, 32)
            assert abs(got_glrt - got / (32.0 + c)) < 1e-12 * max(1.0, abs(got_glrt))
            # domination by the classical statistics
            assert got <= amf * (1.0 + 1e-12) + 1e-12
            assert got_glrt <= kelly_statistic(z, scm, v, 32) * (1.0 + 1e-12) + 1e-12


class TestInvariances:
    def test_ranges(self):
        for seed in range(15):
            z, scm = random_case(seed + 50, hypothesis="H0")
            v = DICT8.nominal_column
            kelly = kelly_statistic(z, scm, v, 32)
            ace = selective_statistic(DetectorId.ACE, z, scm, v, 32)
            assert 0.0 <= kelly < 1.0
            assert 0.0 <= ace <= 1.0
            assert amf_statistic(z, scm, v) >= 0.0
            assert selective_statistic(DetectorId.RAO, z, scm, v, 32) >= 0.0
            assert selective_statistic(DetectorId.WABORT, z, scm, v, 32) > 0.0

    def test_common_phase_rotation(self):
        z, scm = random_case(9)
        v = DICT8.nominal_column
        rot = np.exp(1.1j)
        alpha = 0.3 - 0.2j
        pairs = [
            (kelly_statistic(z, scm, v, 32), kelly_statistic(rot * z, scm, v, 32)),
            (amf_statistic(z, scm, v), amf_statistic(rot * z, scm, v)),
            (selective_statistic(DetectorId.ACE, z, scm, v, 32),
             selective_statistic(DetectorId.ACE, rot * z, scm, v, 32)),
            (selective_statistic(DetectorId.RAO, z, scm, v, 32),
             selective_statistic(DetectorId.RAO, rot * z, scm, v, 32)),
            (selective_statistic(DetectorId.WABORT, z, scm, v, 32),
             selective_statistic(DetectorId.WABORT, rot * z, scm, v, 32)),
            (bslim_amf_statistic(z, scm, v, alpha),
             bslim_amf_statistic(rot * z, scm, v, rot * alpha)),
        ]
        for a, b in pairs:
            assert abs(a - b) < 1e-10 * max(1.0, abs(a))

    def test_invariance_under_common_invertible_transform(self):
        rng = np.random.default_rng(10)
        v = DICT8.nominal_column
        k = 32
        u = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        u += 8.0 * np.eye(8)   # comfortably invertible
        gen = trial_generator(99, 0, 0, trial_stride(8, k))
        snap, train = synthesize_trial("H1", TargetScenario(8.0, 1.0),
                                       exp_covariance(8, 0.9), GEO8, k, gen)
        scm = sample_covariance(train)
        scm_u = sample_covariance(TrainingSet(samples=train.samples @ u.T))
        z, zu, vu = snap.z, u @ snap.z, u @ v
        checks = [
            (kelly_statistic(z, scm, v, k), kelly_statistic(zu, scm_u, vu, k)),
            (amf_statistic(z, scm, v), amf_statistic(zu, scm_u, vu)),
            (selective_statistic(DetectorId.ACE, z, scm, v, k),
             selective_statistic(DetectorId.ACE, zu, scm_u, vu, k)),
            (selective_statistic(DetectorId.RAO, z, scm, v, k),
             selective_statistic(DetectorId.RAO, zu, scm_u, vu, k)),
            (selective_statistic(DetectorId.WABORT, z, scm, v, k),
             selective_statistic(DetectorId.WABORT, zu, scm_u, vu, k)),
        ]
        for a, b in checks:
            assert abs(a - b) < 1e-8 * max(1.0, abs(a))


class TestDecisions:
    def test_sad_gate_exact_zero_semantics(self):
        alpha = np.zeros(33, dtype=complex)
        est = SparseEstimate(alpha=alpha, selected_order=0, selected_q=0.1,
                             bic_value=0.0)
        assert sad_gate(est, 17) is False
        alpha2 = alpha.copy()
        alpha2[16] = 1e-3
        est2 = SparseEstimate(alpha=alpha2, selected_order=1, selected_q=0.1,
                              bic_value=0.0)
        assert sad_gate(est2, 17) is True
        with pytest.raises(ValueError):
            sad_gate(est, 0)
        with pytest.raises(ValueError):
            sad_gate(est, 34)

    def test_gate_fires_reliably_on_matched_high_sinr_trials(self):
        geo = ArrayGeometry(8)
        model = exp_covariance(8, 0.95)
        hits = 0
        trials = 60
        for t in range(trials):
            gen = trial_generator(7, 3, t, trial_stride(8, 32))
            snap, train = synthesize_trial("H1", TargetScenario(20.0, 0.0),
                                           model, geo, 32, gen)
            est = bslim(snap, DICT8, sample_covariance(train), SlimConfig())
            hits += sad_gate(est, DICT8.nominal_index)
        assert hits / trials >= 0.9

    def test_two_stage_truth_table(self):
        assert two_stage_decision(True, 2.0, 1.0) is True
        assert two_stage_decision(False, 2.0, 1.0) is False
        assert two_stage_decision(True, 0.5, 1.0) is False
        assert two_stage_decision(True, 1.0, 1.0) is False   # ties resolve to H0
        with pytest.raises(ValueError):
            two_stage_decision(True, 1.0, -0.5)

    def test_outcome_is_immutable_record(self):
        out = DetectorOutcome(id=DetectorId.SAD, statistic=None, decision=True)
        assert out.decision and out.statistic is None
        with pytest.raises(AttributeError):
            out.decision = False
