"""Shared helpers for the test suite."""

import numpy as np

from stare.selection import ComponentDivergence, ComponentDivergenceProfile


def random_profile(rng: np.random.Generator, k: int | None = None,
                   allow_zero: bool = True) -> ComponentDivergenceProfile:
    """A random but internally consistent divergence profile."""
    if k is None:
        k = int(rng.integers(1, 6))
    counts = rng.integers(0 if allow_zero else 1, 400, size=k).astype(float)
    if counts.sum() == 0:
        counts[rng.integers(k)] = 1.0
    divs = rng.uniform(0.0, 2.0, size=k)
    divs[counts == 0] = 0.0
    per = [ComponentDivergence(component_index=i, n=float(counts[i]),
                               divergence=float(divs[i])) for i in range(k)]
    return ComponentDivergenceProfile(k=k, per_component=per,
                                      total_n=float(counts.sum()))


def profile_from(counts, divergences) -> ComponentDivergenceProfile:
    counts = np.asarray(counts, dtype=float)
    divergences = np.asarray(divergences, dtype=float)
    per = [ComponentDivergence(component_index=i, n=float(counts[i]),
                               divergence=float(divergences[i]))
           for i in range(counts.size)]
    return ComponentDivergenceProfile(k=counts.size, per_component=per,
                                      total_n=float(counts.sum()))
