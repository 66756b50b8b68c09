"""Sparse 3-mode count tensors and the multilinear kernels built on them.

Unfolding convention (used everywhere in this package): the mode-n fibers
become columns of the unfolded matrix, remaining modes ordered so that the
lower-numbered mode varies fastest.  Concretely, entry (i, j, k) lands at

    mode 1: row i, column j + J*k
    mode 2: row j, column i + I*k
    mode 3: row k, column i + I*j

``vec`` of a tensor is the column-major vectorization of the mode-1
unfolding, i.e. position i + I*j + I*J*k.  Under this convention a rank-F
factor triple (A, B, C) satisfies unfold_1 = A @ khatri_rao(C, B).T and
vec = (C kron B kron A) @ vec(core), which the test suite pins against a
dense Kronecker oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DataError, UsageError

_MODES = (1, 2, 3)


def _check_mode(mode: int) -> None:
    if mode not in _MODES:
        raise UsageError(f"mode must be one of {_MODES}, got {mode!r}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SparseCountTensor:
    """3-mode nonnegative tensor in coordinate form.

    ``subs`` is an (nnz, 3) int array of zero-based indices, ``vals`` the
    matching nonnegative values.  ``mode_labels`` maps each index of each
    mode to an external id (player id, zone name, possession id, ...).
    Instances are immutable; the backing arrays are marked read-only.
    """

    dims: tuple[int, int, int]
    subs: np.ndarray
    vals: np.ndarray
    mode_labels: tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise UsageError(f"dims must be three positive integers, got {self.dims!r}")
        subs = np.ascontiguousarray(np.asarray(self.subs, dtype=np.int64).reshape(-1, 3))
        vals = np.ascontiguousarray(np.asarray(self.vals, dtype=np.float64).reshape(-1))
        if subs.shape[0] != vals.shape[0]:
            raise UsageError("subs and vals length mismatch")
        if subs.size:
            if subs.min() < 0 or np.any(subs >= np.asarray(dims)[None, :]):
                raise UsageError("tensor entry index out of bounds")
            lin = self.linear_index(subs[:, 0], subs[:, 1], subs[:, 2])
            if np.unique(lin).size != lin.size:
                raise UsageError("duplicate (i, j, k) entries; build via from_entries to sum them")
        if np.any(vals < 0):
            raise UsageError("tensor values must be nonnegative")
        labels = self.mode_labels
        if labels is None:
            labels = tuple(tuple(str(r) for r in range(d)) for d in dims)
        else:
            labels = tuple(tuple(str(x) for x in table) for table in labels)
            if len(labels) != 3 or any(len(t) != d for t, d in zip(labels, dims)):
                raise UsageError("mode_labels lengths must equal dims")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "subs", _readonly(subs))
        object.__setattr__(self, "vals", _readonly(vals))
        object.__setattr__(self, "mode_labels", labels)

    @classmethod
    def from_entries(cls, dims, entries, mode_labels=None) -> "SparseCountTensor":
        """Build a tensor from (i, j, k, value) tuples.

        Duplicate indices are summed (counts are additive) and entries whose
        accumulated value is zero are dropped from storage.
        """
        dims = tuple(int(d) for d in dims)
        rows = list(entries)
        if not rows:
            return cls(dims, np.empty((0, 3), dtype=np.int64), np.empty(0), mode_labels)
        arr = np.asarray(rows, dtype=np.float64).reshape(-1, 4)
        subs = arr[:, :3].astype(np.int64)
        if not np.array_equal(subs, arr[:, :3]):
            raise UsageError("entry indices must be integers")
        vals = arr[:, 3]
        return cls.from_arrays(dims, subs, vals, mode_labels)

    @classmethod
    def from_arrays(cls, dims, subs, vals, mode_labels=None) -> "SparseCountTensor":
        """Array-based variant of :meth:`from_entries` (same summing/dropping)."""
        dims = tuple(int(d) for d in dims)
        subs = np.asarray(subs, dtype=np.int64).reshape(-1, 3)
        vals = np.asarray(vals, dtype=np.float64).reshape(-1)
        if subs.size and (subs.min() < 0 or np.any(subs >= np.asarray(dims)[None, :])):
            raise UsageError("tensor entry index out of bounds")
        I, J, K = dims
        lin = subs[:, 0] + I * (subs[:, 1] + J * subs[:, 2])
        uniq, inv = np.unique(lin, return_inverse=True)
        acc = np.zeros(uniq.size)
        np.add.at(acc, inv, vals)
        keep = acc != 0.0
        uniq, acc = uniq[keep], acc[keep]
        out_subs = np.empty((uniq.size, 3), dtype=np.int64)
        out_subs[:, 0] = uniq % I
        out_subs[:, 1] = (uniq // I) % J
        out_subs[:, 2] = uniq // (I * J)
        return cls(dims, out_subs, acc, mode_labels)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def entries(self) -> list[tuple[int, int, int, float]]:
        return [(int(i), int(j), int(k), float(v)) for (i, j, k), v in zip(self.subs, self.vals)]

    def linear_index(self, i, j, k):
        """vec position of entry (i, j, k): i varies fastest."""
        I, J, _ = self.dims
        return np.asarray(i) + I * (np.asarray(j) + J * np.asarray(k))

    def total(self) -> float:
        return float(self.vals.sum())

    def to_dense(self) -> "DenseTensor":
        arr = np.zeros(self.dims)
        arr[self.subs[:, 0], self.subs[:, 1], self.subs[:, 2]] = self.vals
        return DenseTensor.from_array(arr)

    def vec(self) -> np.ndarray:
        """Dense vectorization under the module convention (mode-1 fastest)."""
        out = np.zeros(int(np.prod(self.dims)))
        out[self.linear_index(self.subs[:, 0], self.subs[:, 1], self.subs[:, 2])] = self.vals
        return out


@dataclass(frozen=True)
class DenseTensor:
    """Small dense 3-mode tensor (core tensors, oracle intermediates)."""

    dims: tuple[int, ...]
    values: np.ndarray  # row-major flattening of the dims-shaped array

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).reshape(-1))
        if values.size != int(np.prod(dims)):
            raise UsageError("value count must equal the product of dims")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "DenseTensor":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape, np.ascontiguousarray(arr).reshape(-1))

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.dims)

    def vec(self) -> np.ndarray:
        """Column-major vectorization (first mode fastest)."""
        return self.array.flatten(order="F")


def _unfold_coords(subs: np.ndarray, dims: tuple[int, int, int], mode: int):
    I, J, K = dims
    i, j, k = subs[:, 0], subs[:, 1], subs[:, 2]
    if mode == 1:
        return i, j + J * k, (I, J * K)
    if mode == 2:
        return j, i + I * k, (J, I * K)
    return k, i + I * j, (K, I * J)


def unfold(tensor: SparseCountTensor, mode: int) -> sp.coo_matrix:
    """Mode-n matricization as a sparse COO matrix (see module docstring)."""
    _check_mode(mode)
    rows, cols, shape = _unfold_coords(tensor.subs, tensor.dims, mode)
    return sp.coo_matrix((tensor.vals.copy(), (rows, cols)), shape=shape)


def fold(matrix, mode: int, dims, mode_labels=None) -> SparseCountTensor:
    """Inverse of :func:`unfold` for the same mode and dims."""
    _check_mode(mode)
    dims = tuple(int(d) for d in dims)
    I, J, K = dims
    coo = sp.coo_matrix(matrix)
    rows, cols, vals = coo.row, coo.col, coo.data
    subs = np.empty((vals.size, 3), dtype=np.int64)
    if mode == 1:
        subs[:, 0], subs[:, 1], subs[:, 2] = rows, cols % J, cols // J
    elif mode == 2:
        subs[:, 1], subs[:, 0], subs[:, 2] = rows, cols % I, cols // I
    else:
        subs[:, 2], subs[:, 0], subs[:, 1] = rows, cols % I, cols // I
    return SparseCountTensor.from_arrays(dims, subs, vals, mode_labels)


def khatri_rao(m1: np.ndarray, m2: np.ndarray) -> np.ndarray:
    """Columnwise Kronecker product; column f is kron(m1[:, f], m2[:, f])."""
    m1 = np.asarray(m1, dtype=np.float64)
    m2 = np.asarray(m2, dtype=np.float64)
    if m1.ndim != 2 or m2.ndim != 2 or m1.shape[1] != m2.shape[1]:
        raise UsageError("khatri_rao needs two matrices with equal column counts")
    out = m1[:, None, :] * m2[None, :, :]
    return out.reshape(m1.shape[0] * m2.shape[0], m1.shape[1])


def _check_factors(tensor: SparseCountTensor, factors) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, b, c = (np.asarray(f, dtype=np.float64) for f in factors)
    ranks = {a.shape[1], b.shape[1], c.shape[1]}
    if len(ranks) != 1:
        raise UsageError("factor matrices must share a column count")
    for f, d, name in ((a, tensor.dims[0], "A"), (b, tensor.dims[1], "B"), (c, tensor.dims[2], "C")):
        if f.shape[0] != d:
            raise UsageError(f"factor {name} has {f.shape[0]} rows, tensor dim is {d}")
    return a, b, c


def mttkrp(tensor: SparseCountTensor, factors, mode: int) -> np.ndarray:
    """Matricized-tensor times Khatri-Rao product, touching only nonzeros.

    Equals unfold(tensor, mode) @ khatri_rao(late, early) for the two
    factors of the other modes (later mode first), at O(nnz * F) cost.
    """
    _check_mode(mode)
    a, b, c = _check_factors(tensor, factors)
    others = {1: (b, c), 2: (a, c), 3: (a, b)}[mode]
    idx = {1: (1, 2), 2: (0, 2), 3: (0, 1)}[mode]
    rank = a.shape[1]
    out = np.zeros((tensor.dims[mode - 1], rank))
    if tensor.nnz == 0:
        return out
    contrib = tensor.vals[:, None] * others[0][tensor.subs[:, idx[0]]] * others[1][tensor.subs[:, idx[1]]]
    np.add.at(out, tensor.subs[:, mode - 1], contrib)
    return out


def ttm(tensor: SparseCountTensor | DenseTensor, matrix: np.ndarray, mode: int) -> DenseTensor:
    """Mode-n product with a dense matrix; replaces that mode by matrix rows.

    Equivalent to applying (I kron ... kron matrix kron ... I) to ``vec``
    under the module convention.  Sparse inputs are processed touching only
    nonzeros; the result is always dense.
    """
    _check_mode(mode)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise UsageError("ttm needs a 2-D matrix")
    if matrix.shape[1] != tensor.dims[mode - 1]:
        raise UsageError(
            f"matrix has {matrix.shape[1]} columns, tensor dim along mode {mode} is {tensor.dims[mode - 1]}"
        )
    if isinstance(tensor, SparseCountTensor):
        # unfold along `mode`, multiply, restack: (R x rest) <- M @ (dim x rest)
        unf = unfold(tensor, mode).tocsc()
        prod = unf.T.dot(matrix.T).T  # dense (R, rest), rest ordered low-mode-fastest
        rest = [d for m, d in enumerate(tensor.dims, start=1) if m != mode]
        stacked = prod.reshape(matrix.shape[0], rest[0], rest[1], order="F")
        return DenseTensor.from_array(np.moveaxis(stacked, 0, mode - 1))
    arr = np.moveaxis(np.tensordot(matrix, tensor.array, axes=(1, mode - 1)), 0, mode - 1)
    return DenseTensor.from_array(arr)


ttm_dense = ttm


def write_tensor(tensor: SparseCountTensor, path) -> None:
    """Serialize in the text format: one `dims` header line, one `i j k value`
    line per nonzero (sorted by index), then `mode <n> <index> <label>` lines.
    """
    order = np.lexsort((tensor.subs[:, 2], tensor.subs[:, 1], tensor.subs[:, 0]))
    lines = ["dims {} {} {}".format(*tensor.dims)]
    for r in order:
        i, j, k = tensor.subs[r]
        lines.append(f"{i} {j} {k} {float(tensor.vals[r])!r}")
    for m, table in enumerate(tensor.mode_labels, start=1):
        for idx, label in enumerate(table):
            lines.append(f"mode {m} {idx} {_safe_label(label)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_tensor(path) -> SparseCountTensor:
    dims = None
    entries: list[tuple[int, int, int, float]] = []
    labels: dict[int, dict[int, str]] = {1: {}, 2: {}, 3: {}}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.split()
            if not tok:
                continue
            try:
                if tok[0] == "dims":
                    dims = (int(tok[1]), int(tok[2]), int(tok[3]))
                elif tok[0] == "mode":
                    labels[int(tok[1])][int(tok[2])] = tok[3]
                else:
                    entries.append((int(tok[0]), int(tok[1]), int(tok[2]), float(tok[3])))
            except (IndexError, ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: malformed tensor line {raw.rstrip()!r}") from exc
    if dims is None:
        raise DataError(f"{path}: missing dims header")
    mode_labels = None
    if any(labels[m] for m in _MODES):
        tables = []
        for m, d in zip(_MODES, dims):
            table = labels[m]
            if sorted(table) != list(range(d)):
                raise DataError(f"{path}: mode {m} label table does not cover 0..{d - 1}")
            tables.append(tuple(table[i] for i in range(d)))
        mode_labels = tuple(tables)
    return SparseCountTensor.from_entries(dims, entries, mode_labels)


def _safe_label(label: str) -> str:
    return "_".join(str(label).split()) or "_"
