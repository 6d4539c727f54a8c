"""Exhaustive grid evaluation of the reward landscape."""

from __future__ import annotations

import itertools

import numpy as np

from . import rewards
from .errors import InvalidArgument

MIN_LEVELS, MAX_LEVELS = 2, 9


def grid_levels(lower, upper, n):
    """Per-axis levels. Odd ``n`` spans [lower, upper] inclusive; even ``n``
    uses ``n`` equal steps of (upper - lower) / n starting at ``lower``, so a
    symmetric range still contains 0.
    """
    if not MIN_LEVELS <= n <= MAX_LEVELS:
        raise InvalidArgument(f"levels must be in [{MIN_LEVELS}, {MAX_LEVELS}], got {n}")
    if n % 2:
        return np.linspace(lower, upper, n)
    return lower + (upper - lower) / n * np.arange(n)


def grid_points(space, levels, max_evaluations=None):
    count = levels**space.dim
    if max_evaluations is not None and count > max_evaluations:
        raise InvalidArgument(
            f"{levels}^{space.dim} = {count} grid evaluations exceeds the cap of {max_evaluations}"
        )
    axes = [grid_levels(lo, hi, levels) for lo, hi in zip(space.lower, space.upper)]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, space.dim)


def evaluate_grid(scope, space, levels, noise=False, max_evaluations=None):
    """Rewards at every grid vertex. Returns ``(X, Y)`` with Y columns (contrast, fft).

    Noise-free vertices use the clean rendering; noisy vertices go through
    ``scope.acquire`` in index order, so results are deterministic per seed.
    """
    X = grid_points(space, levels, max_evaluations)
    Y = np.empty((len(X), 2))
    for i, x in enumerate(X):
        state = space.state(x)
        image = scope.acquire(state)[0] if noise else scope.render(state)
        Y[i] = rewards.evaluate(image).as_array()
    return X, Y
