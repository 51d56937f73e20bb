"""Geometry, dictionaries, covariance models, synthesis and coherence."""

import cmath
import math

import numpy as np
import pytest
from scipy.linalg import sqrtm

from sparsedet import (AngularGrid, ArrayGeometry, EstimationError,
                       InterferenceModel, TargetScenario, amplitude_for_sinr,
                       bin_coherence, build_dictionary, dictionary_coherence,
                       exp_covariance, steering_vector, synthesize_trial)
from sparsedet.streams import trial_generator, trial_stride

GEO8 = ArrayGeometry(8)


def scalar_steering_oracle(n, spacing, angle_deg):
    """Elementwise evaluation, independent of the vectorized path."""
    return np.array([cmath.exp(1j * i * 2.0 * math.pi * spacing
                               * math.sin(math.radians(angle_deg)))
                     for i in range(n)])


class TestSteeringVector:
    def test_broadside_is_all_ones(self):
        np.testing.assert_allclose(steering_vector(ArrayGeometry(4), 0.0),
                                   np.ones(4), atol=1e-15)

    def test_thirty_degrees_two_elements(self):
        v = steering_vector(ArrayGeometry(2), 30.0)
        np.testing.assert_allclose(v, [1.0, 1.0j], atol=1e-12)

    def test_matches_scalar_oracle(self):
        v = steering_vector(GEO8, 7.3)
        np.testing.assert_allclose(v, scalar_steering_oracle(8, 0.5, 7.3),
                                   rtol=0, atol=1e-14)
        np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-14)

    def test_unit_modulus_and_norm(self):
        rng = np.random.default_rng(0)
        for angle in rng.uniform(-89.9, 89.9, 25):
            v = steering_vector(GEO8, angle)
            assert v[0] == 1.0
            np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-13)
            assert abs(np.linalg.norm(v) - math.sqrt(8)) < 1e-12

    @pytest.mark.parametrize("angle", [90.0, -90.0, 120.0])
    def test_endfire_rejected(self, angle):
        with pytest.raises(ValueError):
            steering_vector(GEO8, angle)


class TestGeometryAndGrid:
    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            ArrayGeometry(1)
        with pytest.raises(ValueError):
            ArrayGeometry(4, spacing_ratio=0.0)

    def test_grid_symmetric_with_exact_center(self):
        grid = AngularGrid(5.0, 0.75, 11)
        angles = grid.angles_deg
        assert angles[grid.nominal_index - 1] == 5.0
        np.testing.assert_allclose(angles + angles[::-1], 10.0, atol=1e-12)

    def test_paper_spans(self):
        wide = AngularGrid(0.0, 3.0, 33)
        assert (wide.angles_deg[0], wide.angles_deg[-1]) == (-48.0, 48.0)
        narrow = AngularGrid(0.0, 0.5, 61)
        assert (narrow.angles_deg[0], narrow.angles_deg[-1]) == (-15.0, 15.0)

    def test_single_bin_grid(self):
        grid = AngularGrid(2.0, 1.0, 1)
        assert grid.nominal_index == 1
        np.testing.assert_array_equal(grid.angles_deg, [2.0])

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            AngularGrid(0.0, 3.0, 32)        # even
        with pytest.raises(ValueError):
            AngularGrid(0.0, 3.0, 0)
        with pytest.raises(ValueError):
            AngularGrid(0.0, -1.0, 3)
        with pytest.raises(ValueError):
            AngularGrid(80.0, 5.0, 11)       # reaches past 90 deg

    def test_spanning_constructor(self):
        grid = AngularGrid.spanning(0.0, 3.0, 48.0)
        assert grid.n_bins == 33
        grid = AngularGrid.spanning(0.0, 2.5, 48.0)
        assert grid.n_bins == 39 and grid.angles_deg[-1] == 47.5

    def test_dictionary_columns_and_nominal(self):
        grid = AngularGrid(0.0, 3.0, 33)
        d = build_dictionary(GEO8, grid)
        assert d.matrix.shape == (8, 33)
        assert d.nominal_index == 17
        for l in (0, 7, 16, 32):
            np.testing.assert_allclose(d.matrix[:, l],
                                       steering_vector(GEO8, grid.angles_deg[l]),
                                       atol=1e-14)
        np.testing.assert_allclose(np.linalg.norm(d.matrix, axis=0),
                                   math.sqrt(8), atol=1e-12)
        np.testing.assert_array_equal(d.nominal_column, np.ones(8))


class TestInterference:
    def test_zero_correlation_gives_identity(self):
        np.testing.assert_array_equal(exp_covariance(3, 0.0).covariance, np.eye(3))

    def test_first_row_is_powers_of_rho(self):
        r = exp_covariance(3, 0.95).covariance
        np.testing.assert_allclose(r[0].real, [1.0, 0.95, 0.9025], atol=1e-15)

    def test_structure_exact(self):
        r = exp_covariance(8, 0.95).covariance
        assert np.all(r.imag == 0.0)
        np.testing.assert_array_equal(np.diag(r), np.ones(8))
        np.testing.assert_array_equal(r, r.T)
        for off in range(1, 8):
            assert len(set(np.diag(r, off).real.tolist())) == 1  # Toeplitz

    def test_positive_definite_by_eigendecomposition(self):
        w = np.linalg.eigvalsh(exp_covariance(8, 0.95).covariance)
        assert w.min() > 0.0

    @pytest.mark.parametrize("rho", [1.0, 1.2, -0.1])
    def test_rho_domain(self, rho):
        with pytest.raises(ValueError):
            exp_covariance(4, rho)

    def test_factor_reproduces_covariance(self):
        model = exp_covariance(8, 0.95)
        rebuilt = model.factor @ model.factor.conj().T
        err = np.linalg.norm(rebuilt - model.covariance) / np.linalg.norm(model.covariance)
        assert err < 1e-10

    def test_non_hermitian_rejected(self):
        bad = np.eye(3) + 0.1j * np.triu(np.ones((3, 3)), 1)
        with pytest.raises(ValueError):
            InterferenceModel(covariance=bad)

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError):
            InterferenceModel(covariance=np.diag([1.0, -1.0]).astype(complex))

    def test_fingerprint_stable_and_distinct(self):
        a = InterferenceModel(np.eye(4, dtype=complex))
        b = InterferenceModel(np.eye(4, dtype=complex))
        c = InterferenceModel(2.0 * np.eye(4, dtype=complex))
        assert a.fingerprint() == b.fingerprint() != c.fingerprint()


class TestAmplitude:
    def test_zero_db_white_noise(self):
        alpha = amplitude_for_sinr(TargetScenario(0.0, 0.0),
                                   InterferenceModel(np.eye(8, dtype=complex)), GEO8)
        assert abs(abs(alpha) - 1 / math.sqrt(8)) < 1e-12

    def test_fourteen_db_white_noise(self):
        alpha = amplitude_for_sinr(TargetScenario(14.0, 0.0),
                                   InterferenceModel(np.eye(8, dtype=complex)), GEO8)
        assert abs(abs(alpha) - math.sqrt(10.0 ** 1.4 / 8.0)) < 1e-12

    def test_phase_passthrough(self):
        alpha = amplitude_for_sinr(TargetScenario(5.0, 3.0, phase_rad=math.pi / 3),
                                   exp_covariance(8, 0.95), GEO8)
        assert abs(cmath.phase(alpha) - math.pi / 3) < 1e-12

    def test_definition_holds_in_colored_noise(self):
        model = exp_covariance(8, 0.95)
        scen = TargetScenario(14.0, 2.0)
        alpha = amplitude_for_sinr(scen, model, GEO8)
        v = steering_vector(GEO8, 2.0)
        quad = np.real(v.conj() @ np.linalg.solve(model.covariance, v))
        assert abs(abs(alpha) ** 2 * quad - 10.0 ** 1.4) < 1e-10 * 10.0 ** 1.4


class TestSynthesizeTrial:
    MODEL = exp_covariance(8, 0.95)
    DRAWS = trial_stride(8, 32)

    def test_bit_identical_replay(self):
        scen = TargetScenario(10.0, 1.0)
        snap1, train1 = synthesize_trial("H1", scen, self.MODEL, GEO8, 32,
                                         trial_generator(5, 0, 3, self.DRAWS))
        snap2, train2 = synthesize_trial("H1", scen, self.MODEL, GEO8, 32,
                                         trial_generator(5, 0, 3, self.DRAWS))
        np.testing.assert_array_equal(snap1.z, snap2.z)
        np.testing.assert_array_equal(train1.samples, train2.samples)

    def test_training_never_contains_signal(self):
        scen = TargetScenario(60.0, 0.0)
        _, train0 = synthesize_trial("H0", scen, self.MODEL, GEO8, 32,
                                     trial_generator(5, 0, 0, self.DRAWS))
        _, train1 = synthesize_trial("H1", scen, self.MODEL, GEO8, 32,
                                     trial_generator(5, 0, 0, self.DRAWS))
        np.testing.assert_array_equal(train0.samples, train1.samples)

    def test_high_sinr_limit_recovers_steering(self):
        scen = TargetScenario(60.0, 4.0, phase_rad=0.3)
        alpha = amplitude_for_sinr(scen, self.MODEL, GEO8)
        snap, _ = synthesize_trial("H1", scen, self.MODEL, GEO8, 32,
                                   trial_generator(11, 0, 0, self.DRAWS))
        np.testing.assert_allclose(snap.z / alpha, steering_vector(GEO8, 4.0),
                                   atol=1e-2)

    def test_snapshot_mean_is_zero_under_h0(self):
        n_draws = 100_000
        draws = trial_stride(8, 8)
        rng = trial_generator(17, 0, 0, draws)
        scen = TargetScenario(0.0, 0.0)
        acc = np.zeros(8, dtype=complex)
        for _ in range(n_draws):
            snap, _ = synthesize_trial("H0", scen, self.MODEL, GEO8, 8, rng)
            acc += snap.z
        mean = acc / n_draws
        assert np.all(np.abs(mean) < 4.0 / math.sqrt(n_draws))

    def test_scm_mean_matches_covariance(self):
        n_sets = 10_000
        rng = trial_generator(23, 0, 0, trial_stride(8, 32))
        scen = TargetScenario(0.0, 0.0)
        acc = np.zeros((8, 8), dtype=complex)
        for _ in range(n_sets):
            _, train = synthesize_trial("H0", scen, self.MODEL, GEO8, 32, rng)
            acc += train.samples.T @ train.samples.conj() / 32.0
        err = np.linalg.norm(acc / n_sets - self.MODEL.covariance)
        assert err / np.linalg.norm(self.MODEL.covariance) < 0.02

    def test_rejects_small_k_and_bad_hypothesis(self):
        scen = TargetScenario(0.0, 0.0)
        rng = trial_generator(0, 0, 0, trial_stride(8, 8))
        with pytest.raises(EstimationError):
            synthesize_trial("H0", scen, self.MODEL, GEO8, 4, rng)
        with pytest.raises(ValueError):
            synthesize_trial("h2", scen, self.MODEL, GEO8, 32, rng)


class TestCoherence:
    def test_orthogonal_two_column_dictionary(self):
        geo = ArrayGeometry(2)
        d = build_dictionary(geo, AngularGrid(0.0, 60.0, 3))
        # columns at -60, 0, 60 are not orthogonal; build the +-30 pair instead
        pair = build_dictionary(geo, AngularGrid(0.0, 30.0, 3))
        model = InterferenceModel(np.eye(2, dtype=complex))
        sub = pair.matrix[:, [0, 2]]
        assert abs(np.vdot(sub[:, 0], sub[:, 1])) < 1e-12
        assert dictionary_coherence(d, model) > 0.0

    def test_pair_coherence_zero_and_one_limits(self):
        geo = ArrayGeometry(2)
        model = InterferenceModel(np.eye(2, dtype=complex))
        # v(-30), v(30) are exactly orthogonal for two half-wavelength elements
        ortho = build_dictionary(geo, AngularGrid(0.0, 30.0, 3))
        assert bin_coherence(ortho, model, 1) <= 1.0
        mu = abs(np.vdot(ortho.matrix[:, 0], ortho.matrix[:, 2])) / 2.0
        assert mu < 1e-12
        tight = build_dictionary(GEO8, AngularGrid(0.0, 1e-6, 3))
        model8 = InterferenceModel(np.eye(8, dtype=complex))
        assert dictionary_coherence(tight, model8) > 1.0 - 1e-6
        assert dictionary_coherence(tight, model8) <= 1.0

    def test_reference_boundary_value(self):
        d = build_dictionary(ArrayGeometry(24), AngularGrid(0.0, 1.5, 21))
        model = exp_covariance(24, 0.95)
        mu = bin_coherence(d, model, d.nominal_index)
        assert abs(mu - 0.4909) < 5e-4

    def test_quadratic_form_equals_explicit_whitening(self):
        d = build_dictionary(GEO8, AngularGrid(0.0, 3.0, 9))
        model = exp_covariance(8, 0.95)
        root = np.linalg.inv(sqrtm(model.covariance))
        vw = root @ d.matrix
        norms = np.linalg.norm(vw, axis=0)
        gram = np.abs(vw.conj().T @ vw) / np.outer(norms, norms)
        np.fill_diagonal(gram, 0.0)
        assert abs(dictionary_coherence(d, model) - gram.max()) < 1e-10
        m = d.nominal_index
        assert abs(bin_coherence(d, model, m) - gram[m - 1].max()) < 1e-10

    def test_bin_coherence_never_exceeds_dictionary_coherence(self):
        model = exp_covariance(8, 0.9)
        d = build_dictionary(GEO8, AngularGrid(0.0, 2.0, 15))
        mu = dictionary_coherence(d, model)
        per_bin = [bin_coherence(d, model, i) for i in range(1, 16)]
        assert all(b <= mu + 1e-14 for b in per_bin)
        # the dictionary coherence is attained by some bin
        assert abs(max(per_bin) - mu) < 1e-12

    def test_nominal_coherence_non_increasing_in_spacing(self):
        model = exp_covariance(8, 0.95)
        values = []
        for delta in (0.5, 1.0, 1.5, 2.0, 3.0):
            d = build_dictionary(GEO8, AngularGrid.spanning(0.0, delta, 48.0))
            values.append(bin_coherence(d, model, d.nominal_index))
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_domain_errors(self):
        model = exp_covariance(8, 0.95)
        single = build_dictionary(GEO8, AngularGrid(0.0, 1.0, 1))
        with pytest.raises(ValueError):
            dictionary_coherence(single, model)
        d = build_dictionary(GEO8, AngularGrid(0.0, 3.0, 9))
        with pytest.raises(ValueError):
            bin_coherence(d, model, 0)
        with pytest.raises(ValueError):
            bin_coherence(d, model, 10)
