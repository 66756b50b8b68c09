"""Independent brute-force oracles used to pin down kernel behavior.

Everything here is derived directly from definitions with plain numpy and
never calls into the package, so a bug cannot hide on both sides of a test.
"""

from __future__ import annotations

import numpy as np


def dense_unfold(arr: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n unfolding, remaining axes flattened lower-mode-fastest."""
    moved = np.moveaxis(arr, mode - 1, 0)
    return np.reshape(moved, (arr.shape[mode - 1], -1), order="F")


def dense_vec(arr: np.ndarray) -> np.ndarray:
    """Column-major vectorization: first mode varies fastest."""
    return arr.flatten(order="F")


def dense_from_factors(a, b, c, weights=None) -> np.ndarray:
    """Sum of rank-one outer products, optionally weighted per component."""
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    w = np.ones(a.shape[1]) if weights is None else np.asarray(weights)
    return np.einsum("f,if,jf,kf->ijk", w, a, b, c)


def dense_kron3(c, b, a) -> np.ndarray:
    """Explicit (C kron B kron A) matrix."""
    return np.kron(np.kron(np.asarray(c), np.asarray(b)), np.asarray(a))


def dense_generalized_kl(x: np.ndarray, m: np.ndarray) -> float:
    """Cellwise sum of x*log(x/m) - x + m with 0*log(0) = 0."""
    total = 0.0
    for xv, mv in zip(x.ravel(), m.ravel()):
        if xv > 0:
            total += xv * np.log(xv / mv) - xv + mv
        else:
            total += mv
    return float(total)


def brute_silhouette(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette from the definition, double loop over points."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    n = len(points)
    uniq = np.unique(labels)
    dists = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    scores = []
    for i in range(n):
        own = labels[i]
        own_mask = (labels == own) & (np.arange(n) != i)
        if not own_mask.any():
            scores.append(0.0)  # singleton cluster
            continue
        a = dists[i, own_mask].mean()
        b = min(dists[i, labels == other].mean() for other in uniq if other != own)
        denom = max(a, b)
        scores.append(0.0 if denom == 0 else (b - a) / denom)
    return float(np.mean(scores))


def random_count_tensor(rng: np.random.Generator, dims, density=0.3, max_count=9):
    """Random sparse nonnegative integer entries as (subs, vals) arrays."""
    size = int(np.prod(dims))
    nnz = max(1, int(round(density * size)))
    lin = rng.choice(size, size=nnz, replace=False)
    i = lin % dims[0]
    j = (lin // dims[0]) % dims[1]
    k = lin // (dims[0] * dims[1])
    vals = rng.integers(1, max_count + 1, size=nnz).astype(float)
    return np.stack([i, j, k], axis=1), vals
