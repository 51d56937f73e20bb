"""Counter-based random streams for reproducible, order-free Monte Carlo.

Every trial owns a fixed-length slice of a Philox counter stream keyed by
(master seed, axis index).  Philox advances in blocks of four 64-bit words,
so each trial is given a stride padded up to a multiple of four uniforms;
trial ``t`` then starts exactly at counter block ``t * stride / 4``.  Any
chunking of trials onto workers produces bit-identical data: a chunk simply
advances the counter to its first trial and reads contiguously.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox

TWO_PI = 2.0 * np.pi


def uniforms_per_trial(n_elements: int, k: int) -> int:
    """Uniform draws consumed by one trial: snapshot plus K training vectors."""
    return 2 * n_elements * (k + 1)


def trial_stride(n_elements: int, k: int) -> int:
    """Per-trial stream stride: draws padded to a whole Philox block."""
    draws = uniforms_per_trial(n_elements, k)
    return -(-draws // 4) * 4


def _positioned(seed: int, axis_index: int, trial_index: int, stride: int) -> Philox:
    if stride % 4:
        raise ValueError(f"stride must be a multiple of 4, got {stride}")
    bg = Philox(key=[np.uint64(seed), np.uint64(axis_index)])
    if trial_index:
        bg.advance(trial_index * (stride // 4))
    return bg


def trial_uniforms(seed: int, axis_index: int, first_trial: int, n_trials: int,
                   stride: int) -> np.ndarray:
    """Uniform slices for a contiguous block of trials, shape (n_trials, stride).

    Independent of how trials are blocked: the stream position is a pure
    function of (seed, axis_index, trial index).
    """
    bg = _positioned(seed, axis_index, first_trial, stride)
    return Generator(bg).random((n_trials, stride))


def trial_generator(seed: int, axis_index: int, trial_index: int,
                    stride: int) -> Generator:
    """Generator positioned at the start of one trial's uniform slice."""
    return Generator(_positioned(seed, axis_index, trial_index, stride))


def complex_normals(uniforms: np.ndarray) -> np.ndarray:
    """Map 2m uniforms to m unit-variance circular complex Gaussians.

    Polar transform: modulus sqrt(Exp(1)), phase uniform on [0, 2pi).
    Consumption is fixed (two uniforms per sample), which keeps trial slices
    aligned; rejection-based normal samplers would not.
    """
    u1 = uniforms[..., 0::2]
    u2 = uniforms[..., 1::2]
    r = np.sqrt(-np.log1p(-u1))
    return r * (np.cos(TWO_PI * u2) + 1j * np.sin(TWO_PI * u2))
