"""Small data generators shared by the tests."""

import numpy as np


def separable_blobs(seed, n=40, sigma=0.5, margin=2.0, dim=2):
    """Two Gaussian blobs whose sample clouds are at least ``margin`` sigmas apart.

    Returns (x, labels) with labels 0 (bona fide) and 1 (morph), n//2 each.
    """
    rng = np.random.default_rng(seed)
    half = n // 2
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    while True:
        a = rng.normal(0.0, sigma, (half, dim))
        b = rng.normal(0.0, sigma, (half, dim))
        # push b along `direction` until the projected gap is margin*sigma
        gap = (a @ direction).max() - (b @ direction).min() + margin * sigma
        b += gap * direction
        x = np.vstack([a, b])
        if ((b @ direction).min() - (a @ direction).max()) >= margin * sigma - 1e-12:
            return x, np.repeat([0, 1], half)
