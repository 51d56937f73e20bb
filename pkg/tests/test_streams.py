"""Counter-stream properties: chunk invariance and the normal transform."""

import numpy as np
import pytest

from sparsedet.streams import (complex_normals, trial_generator, trial_stride,
                               trial_uniforms, uniforms_per_trial)


def test_stride_is_block_aligned_and_covers_draws():
    for n, k in ((8, 32), (5, 6), (24, 96), (3, 3)):
        stride = trial_stride(n, k)
        assert stride % 4 == 0
        assert 0 <= stride - uniforms_per_trial(n, k) < 4


def test_uniforms_independent_of_chunking():
    stride = trial_stride(8, 32)
    whole = trial_uniforms(123, 4, 0, 40, stride)
    pieces = np.concatenate([
        trial_uniforms(123, 4, 0, 7, stride),
        trial_uniforms(123, 4, 7, 13, stride),
        trial_uniforms(123, 4, 20, 20, stride),
    ])
    np.testing.assert_array_equal(whole, pieces)


def test_unaligned_stride_rejected():
    with pytest.raises(ValueError):
        trial_uniforms(1, 0, 1, 2, 10)


def test_streams_differ_across_seed_and_axis():
    base = trial_uniforms(1, 0, 0, 4, 64)
    assert not np.array_equal(base, trial_uniforms(2, 0, 0, 4, 64))
    assert not np.array_equal(base, trial_uniforms(1, 1, 0, 4, 64))


def test_trial_generator_matches_block_slices():
    stride = trial_stride(4, 8)
    block = trial_uniforms(9, 2, 0, 6, stride)
    for t in (0, 3, 5):
        got = trial_generator(9, 2, t, stride).random(stride)
        np.testing.assert_array_equal(got, block[t])


def test_complex_normals_fixed_consumption_and_layout():
    u = np.linspace(0.05, 0.95, 10)
    w = complex_normals(u)
    assert w.shape == (5,)
    r = np.sqrt(-np.log1p(-u[0::2]))
    expect = r * (np.cos(2 * np.pi * u[1::2]) + 1j * np.sin(2 * np.pi * u[1::2]))
    np.testing.assert_array_equal(w, expect)


def test_complex_normals_moments():
    rng = np.random.default_rng(7)
    w = complex_normals(rng.random(2 * 200_000))
    # unit total variance, split evenly over quadratures, zero mean
    assert abs(np.mean(np.abs(w) ** 2) - 1.0) < 0.01
    assert abs(np.var(w.real) - 0.5) < 0.01
    assert abs(np.mean(w)) < 0.01


def test_complex_normals_edge_uniforms_are_finite():
    w = complex_normals(np.array([0.0, 0.0, 1.0 - 1e-16, 0.5]))
    assert np.all(np.isfinite(w.view(np.float64)))
