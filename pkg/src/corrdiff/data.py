"""Seeded synthetic signals used by tests, demos and the RD sweep."""

import numpy as np


def patch_textures(n: int, seed: int = 0, size: int = 8, levels=(-0.8, 0.8)) -> np.ndarray:
    """Piecewise-constant ``size x size`` patches built from 2x2 or 4x4 blocks, plus mild noise."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, size, size))
    for k in range(n):
        block = int(rng.choice([2, 4]))
        cells = rng.uniform(*levels, size=(size // block, size // block))
        out[k] = np.kron(cells, np.ones((block, block)))
    out += 0.02 * rng.standard_normal(out.shape)
    return out


def gaussian_mixture_draws(n: int, weights, means, variances, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    weights = np.asarray(weights, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    comp = rng.choice(len(weights), size=n, p=weights / weights.sum())
    std = np.sqrt(np.asarray(variances, dtype=np.float64))[comp]
    noise = rng.standard_normal((n,) + means.shape[1:])
    return means[comp] + std.reshape((n,) + (1,) * (means.ndim - 1)) * noise


def bundled_sample_set() -> np.ndarray:
    """The fixed evaluation set: eight 8x8 texture patches."""
    return patch_textures(8, seed=2024)
