from __future__ import annotations

import numpy as np
import pytest

from courtfactors.tensor import SparseCountTensor

from _oracles import random_count_tensor


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def make_tensor(rng, dims, density=0.3, max_count=9) -> SparseCountTensor:
    subs, vals = random_count_tensor(rng, dims, density=density, max_count=max_count)
    return SparseCountTensor.from_arrays(dims, subs, vals)


def random_factors(rng, dims, rank):
    return tuple(rng.uniform(0.05, 1.0, size=(d, rank)) for d in dims)


def block_factors(rng, dims, rank, noise=0.05):
    """Well-separated components: each dominates its own index block per mode."""
    factors = []
    for d in dims:
        f = rng.uniform(0.0, noise, size=(d, rank))
        edges = np.linspace(0, d, rank + 1).astype(int)
        for r in range(rank):
            f[edges[r] : edges[r + 1], r] += rng.uniform(0.8, 1.2, size=edges[r + 1] - edges[r])
        factors.append(f)
    return tuple(factors)
