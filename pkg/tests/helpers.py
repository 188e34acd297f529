"""Shared builders for small random instances."""

from dataclasses import replace

import numpy as np

from fimstar.channel import sample_task
from fimstar.metrics import AllocationDecision
from fimstar.ris import StarBdRisParams


def crandn(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_channels(rng, cfg, scale=1.0):
    """A task with its channel tensors replaced by unit-scale Gaussian draws."""
    ch = sample_task(rng, cfg)
    u, n, m, k = ch.dims
    return replace(ch, g=crandn(rng, u, n, m, scale=scale), h_br=crandn(rng, n, m, k, scale=scale),
                   h_ru=crandn(rng, u, n, k, scale=scale),
                   noise_power=rng.uniform(0.5, 2.0, (u, n)))


def random_decision(rng, ch, alpha=None):
    u, n, m, k = ch.dims
    if alpha is None:
        alpha = (rng.uniform(size=(u, n)) < 0.6).astype(float)
    ris = StarBdRisParams(rng.uniform(size=k), rng.uniform(0, 2 * np.pi, k), rng.uniform(0, 2 * np.pi, k))
    return AllocationDecision(crandn(rng, u, n, m, scale=0.3), np.asarray(alpha, float), ch.shape, ris)
