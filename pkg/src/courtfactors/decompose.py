"""Nonnegative CP decomposition under generalized KL divergence.

The fitter is the multiplicative-update flavor of alternating Poisson
regression: each mode's factor is updated by elementwise ratios accumulated
over the tensor's nonzeros while the other modes stay fixed with unit
1-norm columns.  Updates never increase the objective, which the fit
history records and tests pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, KernelError, UsageError
from .tensor import SparseCountTensor

# Slack for "non-increasing" objective checks: relative with an absolute
# floor so near-zero objectives are not hostage to rounding of large sums.
MONOTONE_SLACK = 1e-9

# Degeneracy thresholds: classic two-component degeneracy (congruence near
# -1) cannot occur with nonnegative factors, so near-duplicate components
# and collapsed weights are what we flag.
NEGATIVE_CONGRUENCE_CUTOFF = -0.85
DUPLICATE_CONGRUENCE_CUTOFF = 0.98
WEIGHT_COLLAPSE_RATIO = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Knobs for :func:`fit_cp_kl`."""

    max_outer_iters: int = 500
    rel_tol: float = 1e-6
    inner_iters: int = 10
    epsilon: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.inner_iters < 1:
            raise UsageError("iteration counts must be positive")
        if not (0 < self.rel_tol < 1) and self.rel_tol != 0:
            raise UsageError("rel_tol must be in [0, 1)")
        if self.epsilon <= 0:
            raise UsageError("epsilon must be positive")


@dataclass(frozen=True)
class CpModel:
    """Rank-F factor triple (A, B, C) with per-component weights.

    After normalization each factor column has unit 1-norm, the removed
    scale lives in ``weights``, and components are sorted by weight
    (descending, ties broken by the first-mode column lexicographically).
    """

    rank: int
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]
    weights: np.ndarray
    fit_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.rank < 1:
            raise UsageError("rank must be >= 1")
        factors = tuple(np.array(f, dtype=np.float64, copy=True, order="C") for f in self.factors)
        if len(factors) != 3 or any(f.ndim != 2 or f.shape[1] != self.rank for f in factors):
            raise UsageError("factors must be three matrices with rank columns")
        if any(np.any(f < 0) for f in factors):
            raise UsageError("factor entries must be nonnegative")
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64).reshape(-1))
        if weights.size != self.rank or np.any(weights < 0):
            raise UsageError("weights must be a nonnegative length-rank vector")
        for f in factors:
            f.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "fit_history", tuple(float(v) for v in self.fit_history))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.factors)  # type: ignore[return-value]

    def values_at(self, subs: np.ndarray) -> np.ndarray:
        """Model reconstruction at the given (n, 3) index array."""
        a, b, c = self.factors
        prod = a[subs[:, 0]] * b[subs[:, 1]] * c[subs[:, 2]]
        return prod @ self.weights

    def reconstruct(self) -> np.ndarray:
        """Dense reconstruction; intended for small models and tests."""
        if int(np.prod(self.dims)) > 10**7:
            raise UsageError("dense reconstruction too large; use values_at")
        a, b, c = self.factors
        return np.einsum("f,if,jf,kf->ijk", self.weights, a, b, c)

    def total_mass(self) -> float:
        a, b, c = self.factors
        return float(np.sum(self.weights * a.sum(axis=0) * b.sum(axis=0) * c.sum(axis=0)))

    def permuted(self, order) -> "CpModel":
        order = list(order)
        return CpModel(
            self.rank,
            tuple(f[:, order] for f in self.factors),
            self.weights[order],
            self.fit_history,
        )


def _check_shapes(tensor: SparseCountTensor, model: CpModel) -> None:
    if model.dims != tensor.dims:
        raise UsageError(f"model dims {model.dims} do not match tensor dims {tensor.dims}")


def kl_objective(tensor: SparseCountTensor, model: CpModel, epsilon: float = 1e-12) -> float:
    """Generalized KL divergence sum(x*log(x/m) - x + m) over all cells.

    Evaluated exactly over the nonzeros plus a closed-form total-mass term
    for the zero cells; reconstruction values below ``epsilon`` under
    nonzero data are floored at ``epsilon``.
    """
    _check_shapes(tensor, model)
    return _kl_value(tensor.subs, tensor.vals, model.factors, model.weights, epsilon)


def _kl_value(subs, vals, factors, lam, epsilon) -> float:
    a, b, c = factors
    if vals.size:
        m = (a[subs[:, 0]] * b[subs[:, 1]] * c[subs[:, 2]]) @ lam
        m = np.maximum(m, epsilon)
        data_terms = float(np.sum(vals * np.log(vals / m) - vals))
    else:
        data_terms = 0.0
    mass = float(np.sum(lam * a.sum(axis=0) * b.sum(axis=0) * c.sum(axis=0)))
    return data_terms + mass


def fit_cp_kl(tensor: SparseCountTensor, rank: int, config: FitConfig | None = None) -> CpModel:
    """Fit a rank-F nonnegative CP model by minimizing generalized KL.

    Parameters
    ----------
    tensor:
        Nonempty sparse count tensor.
    rank:
        Number of components F >= 1.
    config:
        Iteration limits, tolerance, zero-division guard, and the seed for
        the uniform-(0, 1] initialization.

    Returns
    -------
    CpModel
        Normalized model (unit 1-norm columns, weights sorted descending)
        whose ``fit_history`` holds the objective per outer iteration,
        starting with the initial objective.

    Raises
    ------
    UsageError
        If rank < 1 or the tensor has no entries.
    KernelError
        If the objective ever increases beyond slack (a kernel bug, since
        multiplicative updates are non-increasing by construction).
    """
    if rank < 1:
        raise UsageError("rank must be >= 1")
    if tensor.nnz == 0:
        raise UsageError("cannot fit an empty tensor")
    config = config or FitConfig()

    rng = np.random.default_rng(config.seed)
    factors = [1.0 - rng.random((d, rank)) for d in tensor.dims]  # uniform (0, 1]
    lam = np.ones(rank)
    for n in range(3):
        lam, factors[n] = _pull_column_scale(lam, factors[n])

    subs, vals = tensor.subs, tensor.vals
    history = [_kl_value(subs, vals, factors, lam, config.epsilon)]

    for _ in range(config.max_outer_iters):
        for n in range(3):
            scaled = factors[n] * lam[None, :]
            rows = subs[:, n]
            o1, o2 = [m for m in range(3) if m != n]
            pi = factors[o1][subs[:, o1]] * factors[o2][subs[:, o2]]
            for _ in range(config.inner_iters):
                m_at = np.einsum("zf,zf->z", scaled[rows], pi)
                w = vals / np.maximum(m_at, config.epsilon)
                phi = np.zeros_like(scaled)
                np.add.at(phi, rows, w[:, None] * pi)
                scaled *= phi
            lam, factors[n] = _pull_column_scale(None, scaled)
        obj = _kl_value(subs, vals, factors, lam, config.epsilon)
        prev = history[-1]
        history.append(obj)
        if obj > prev + MONOTONE_SLACK * max(abs(prev), 1.0):
            raise KernelError(f"objective increased from {prev} to {obj}")
        if prev - obj <= config.rel_tol * max(abs(prev), 1e-300):
            break

    model = CpModel(rank, tuple(factors), lam, tuple(history))
    return normalize_model(model)


def _pull_column_scale(lam, matrix):
    """Rescale columns to unit 1-norm, returning (scales, normalized)."""
    norms = matrix.sum(axis=0)  # nonnegative entries: 1-norm == column sum
    safe = np.where(norms > 0, norms, 1.0)
    scales = norms if lam is None else lam * norms
    return scales, matrix / safe[None, :]


def normalize_model(model: CpModel) -> CpModel:
    """Absorb factor column scales into the weights and sort components.

    Reconstruction is unchanged; all-zero columns get weight 0.  Idempotent.
    """
    lam = model.weights.copy()
    factors = []
    for f in model.factors:
        norms = f.sum(axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        lam = lam * norms
        factors.append(f / safe[None, :])
    a = factors[0]
    order = sorted(range(model.rank), key=lambda f: (-lam[f], tuple(a[:, f])))
    return CpModel(
        model.rank,
        tuple(f[:, order] for f in factors),
        lam[order],
        model.fit_history,
    )


def is_normalized(model: CpModel, tol: float = 1e-9) -> bool:
    lam = model.weights
    if np.any(lam[:-1] < lam[1:] - tol):
        return False
    for f in model.factors:
        norms = f.sum(axis=0)
        live = lam > 0
        if np.any(np.abs(norms[live] - 1.0) > tol):
            return False
    return True


def congruence_matrix(model_a: CpModel, model_b: CpModel) -> np.ndarray:
    """Pairwise component congruence: product over modes of column cosines."""
    out = np.ones((model_a.rank, model_b.rank))
    for fa, fb in zip(model_a.factors, model_b.factors):
        na = np.linalg.norm(fa, axis=0)
        nb = np.linalg.norm(fb, axis=0)
        denom = np.outer(np.where(na > 0, na, 1.0), np.where(nb > 0, nb, 1.0))
        cos = (fa.T @ fb) / denom
        cos[na == 0, :] = 0.0
        cos[:, nb == 0] = 0.0
        out *= cos
    return out


def match_components(model_a: CpModel, model_b: CpModel) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching of components by congruence."""
    congr = congruence_matrix(model_a, model_b).copy()
    pairs = []
    for _ in range(min(model_a.rank, model_b.rank)):
        fa, fb = np.unravel_index(np.argmax(congr), congr.shape)
        pairs.append((int(fa), int(fb), float(congr[fa, fb])))
        congr[fa, :] = -np.inf
        congr[:, fb] = -np.inf
    return pairs


@dataclass(frozen=True)
class DegeneracyReport:
    """Near-duplicate component pairs and weight-collapsed components."""

    pairs: tuple[tuple[int, int, float], ...]
    collapsed: tuple[int, ...]

    @property
    def flagged_components(self) -> tuple[int, ...]:
        seen = set(self.collapsed)
        for f, g, _ in self.pairs:
            seen.update((f, g))
        return tuple(sorted(seen))

    def __bool__(self) -> bool:
        return bool(self.pairs or self.collapsed)


def detect_degenerate(model: CpModel) -> DegeneracyReport:
    """Flag component pairs that behave degenerately under nonnegativity.

    A pair is flagged when its triple congruence is <= -0.85 (unreachable
    with nonnegative factors, kept for symmetry with the classic rule) or
    >= 0.98 (near-duplicate); a single component is flagged when its weight
    collapses below 1e-8 of the largest.
    """
    if not is_normalized(model):
        raise UsageError("detect_degenerate expects a normalized model")
    congr = congruence_matrix(model, model)
    pairs = []
    for f in range(model.rank):
        for g in range(f + 1, model.rank):
            value = float(congr[f, g])
            if value <= NEGATIVE_CONGRUENCE_CUTOFF or value >= DUPLICATE_CONGRUENCE_CUTOFF:
                pairs.append((f, g, value))
    lam_max = float(model.weights.max()) if model.rank else 0.0
    collapsed = tuple(
        f for f in range(model.rank) if model.weights[f] < WEIGHT_COLLAPSE_RATIO * lam_max
    )
    return DegeneracyReport(tuple(pairs), collapsed)


def write_model(model: CpModel, path) -> None:
    """Serialize: `rank F`, `lambda <f> <value>`, then one
    `factor <mode> <row> <f> <value>` line per nonzero factor entry.
    """
    lines = [f"rank {model.rank}"]
    for f in range(model.rank):
        lines.append(f"lambda {f} {float(model.weights[f])!r}")
    for mode, fac in enumerate(model.factors, start=1):
        rows, cols = np.nonzero(fac)
        for r, f in zip(rows, cols):
            lines.append(f"factor {mode} {r} {f} {float(fac[r, f])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model(path, dims: tuple[int, int, int] | None = None) -> CpModel:
    """Load a serialized model.

    ``dims`` pins the factor row counts; without it they are inferred from
    the largest row index seen per mode (all-zero trailing rows would be
    lost, which fitted strictly-positive factors never have).
    """
    rank = None
    lam: dict[int, float] = {}
    entries: dict[int, list[tuple[int, int, float]]] = {1: [], 2: [], 3: []}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.split()
            if not tok:
                continue
            try:
                if tok[0] == "rank":
                    rank = int(tok[1])
                elif tok[0] == "lambda":
                    lam[int(tok[1])] = float(tok[2])
                elif tok[0] == "factor":
                    entries[int(tok[1])].append((int(tok[2]), int(tok[3]), float(tok[4])))
                else:
                    raise ValueError(f"unknown keyword {tok[0]!r}")
            except (IndexError, ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: malformed model line {raw.rstrip()!r}") from exc
    if rank is None or sorted(lam) != list(range(rank)):
        raise DataError(f"{path}: missing or incomplete rank/lambda lines")
    factors = []
    for mode in (1, 2, 3):
        rows = entries[mode]
        nrow = (dims[mode - 1] if dims else (max((r for r, _, _ in rows), default=-1) + 1))
        fac = np.zeros((max(nrow, 1), rank))
        for r, f, v in rows:
            if r >= fac.shape[0] or f >= rank:
                raise DataError(f"{path}: factor index out of range in mode {mode}")
            fac[r, f] = v
        factors.append(fac)
    weights = np.array([lam[f] for f in range(rank)])
    return CpModel(rank, tuple(factors), weights)


def rescaled(model: CpModel, scale: float) -> CpModel:
    """Model with all component weights multiplied by ``scale``."""
    if scale < 0:
        raise UsageError("scale must be nonnegative")
    return replace(model, weights=model.weights * scale)
