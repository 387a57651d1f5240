"""Sparse vector / matrix types and the kernels the rest of the package uses.

All index arrays are 0-based. Values live in float64 while in memory and are
written as float32 by the binary blob writer; weight matrices produced by the
trainer are rounded to float32 before assembly so that a model scores
identically before and after a save/load round trip.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numba
import numpy as np
import scipy.sparse as sp

BLOB_MAGIC = b"XRLM"
LAYOUT_CSR = 0
LAYOUT_CSC = 1


class ShapeError(ValueError):
    """Raised when operand dimensions do not line up."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseVec:
    """A sparse vector with strictly increasing indices and no stored zeros."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int32)
        val = np.ascontiguousarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing and inside [0, dim)")
            if np.any(val == 0.0):
                raise ValueError("explicit zeros are not allowed")
        object.__setattr__(self, "indices", _frozen(idx))
        object.__setattr__(self, "values", _frozen(val))

    @classmethod
    def from_dense(cls, x) -> "SparseVec":
        x = np.asarray(x, dtype=np.float64).ravel()
        nz = np.flatnonzero(x)
        return cls(x.size, nz, x[nz])

    @classmethod
    def from_pairs(cls, dim: int, pairs) -> "SparseVec":
        """Build from (index, value) pairs; duplicates are summed, zeros dropped."""
        acc: dict[int, float] = {}
        for i, v in pairs:
            acc[int(i)] = acc.get(int(i), 0.0) + float(v)
        items = sorted((i, v) for i, v in acc.items() if v != 0.0)
        return cls(dim, [i for i, _ in items], [v for _, v in items])

    @classmethod
    def zeros(cls, dim: int) -> "SparseVec":
        return cls(dim, np.empty(0, np.int32), np.empty(0, np.float64))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def items(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def __eq__(self, other):
        if not isinstance(other, SparseVec):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseVec(dim={self.dim}, {self.items()!r})"


class _Compressed:
    """Shared machinery for CSR and CSC storage (major axis = rows for CSR)."""

    layout: int
    _scipy_format: str

    def __init__(self, shape, indptr, indices, data, *, check=True):
        self.shape = (int(shape[0]), int(shape[1]))
        self.indptr = _frozen(np.ascontiguousarray(indptr, dtype=np.int64))
        self.indices = _frozen(np.ascontiguousarray(indices, dtype=np.int32))
        self.data = _frozen(np.ascontiguousarray(data, dtype=np.float64))
        if check:
            self._check()

    @property
    def _major(self) -> int:
        return self.shape[0] if self.layout == LAYOUT_CSR else self.shape[1]

    @property
    def _minor(self) -> int:
        return self.shape[1] if self.layout == LAYOUT_CSR else self.shape[0]

    def _check(self):
        p = self.indptr
        if p.size != self._major + 1 or p[0] != 0:
            raise ValueError("pointer array has wrong length or does not start at 0")
        if np.any(np.diff(p) < 0):
            raise ValueError("pointer array must be nondecreasing")
        if p[-1] != self.indices.size or self.indices.size != self.data.size:
            raise ValueError("nnz does not match last pointer")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self._minor:
                raise ValueError("index out of bounds")
            owner = np.repeat(np.arange(self._major), np.diff(p))
            step = np.diff(self.indices.astype(np.int64))
            if np.any(step[owner[1:] == owner[:-1]] <= 0):
                raise ValueError("indices within a row/column must be strictly increasing")

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def to_scipy(self):
        cls = sp.csr_matrix if self.layout == LAYOUT_CSR else sp.csc_matrix
        return cls((self.data, self.indices, self.indptr), shape=self.shape)

    @classmethod
    def from_scipy(cls, m):
        m = m.asformat(cls._scipy_format, copy=True)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m.shape, m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a):
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def _slice(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.indptr[k], self.indptr[k + 1]
        return self.indices[a:b], self.data[a:b]

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape}, nnz={self.nnz})"

    # --- binary blob -----------------------------------------------------

    def write_blob(self, f: BinaryIO) -> None:
        f.write(BLOB_MAGIC)
        f.write(struct.pack("<BQQQ", self.layout, self.shape[0], self.shape[1], self.nnz))
        f.write(self.indptr.astype("<u8").tobytes())
        f.write(self.indices.astype("<u4").tobytes())
        f.write(self.data.astype("<f4").tobytes())

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.write_blob(buf)
        return buf.getvalue()


class CsrMatrix(_Compressed):
    layout = LAYOUT_CSR
    _scipy_format = "csr"

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def row(self, i: int) -> SparseVec:
        idx, val = self._slice(i)
        return SparseVec(self.shape[1], idx, val)

    def row_indices(self, i: int) -> np.ndarray:
        return self._slice(i)[0]

    def __iter__(self) -> Iterator[SparseVec]:
        for i in range(self.shape[0]):
            yield self.row(i)

    def take_rows(self, rows) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy()[np.asarray(rows, dtype=np.int64)])

    def to_csc(self) -> "CscMatrix":
        return CscMatrix.from_scipy(self.to_scipy().tocsc())

    @classmethod
    def from_rows(cls, rows: list[SparseVec], cols: int) -> "CsrMatrix":
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        for i, r in enumerate(rows):
            if r.dim != cols:
                raise ShapeError(f"row {i} has dim {r.dim}, expected {cols}")
            indptr[i + 1] = indptr[i] + r.nnz
        idx = np.concatenate([r.indices for r in rows]) if rows else np.empty(0, np.int32)
        val = np.concatenate([r.values for r in rows]) if rows else np.empty(0)
        return cls((len(rows), cols), indptr, idx, val, check=False)


class CscMatrix(_Compressed):
    layout = LAYOUT_CSC
    _scipy_format = "csc"

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def col(self, j: int) -> SparseVec:
        idx, val = self._slice(j)
        return SparseVec(self.shape[0], idx, val)

    def to_csr(self) -> CsrMatrix:
        return CsrMatrix.from_scipy(self.to_scipy().tocsr())

    def take_cols(self, cols) -> "CscMatrix":
        return CscMatrix.from_scipy(self.to_scipy()[:, np.asarray(cols, dtype=np.int64)])

    @classmethod
    def from_cols(cls, cols: list[SparseVec], rows: int) -> "CscMatrix":
        indptr = np.zeros(len(cols) + 1, dtype=np.int64)
        for j, c in enumerate(cols):
            if c.dim != rows:
                raise ShapeError(f"column {j} has dim {c.dim}, expected {rows}")
            indptr[j + 1] = indptr[j] + c.nnz
        idx = np.concatenate([c.indices for c in cols]) if cols else np.empty(0, np.int32)
        val = np.concatenate([c.values for c in cols]) if cols else np.empty(0)
        return cls((rows, len(cols)), indptr, idx, val, check=False)


def read_blob(f: BinaryIO) -> CsrMatrix | CscMatrix:
    if f.read(4) != BLOB_MAGIC:
        raise ValueError("not a matrix blob (bad magic)")
    layout, rows, cols, nnz = struct.unpack("<BQQQ", f.read(25))
    major = rows if layout == LAYOUT_CSR else cols
    indptr = np.frombuffer(f.read(8 * (major + 1)), dtype="<u8").astype(np.int64)
    indices = np.frombuffer(f.read(4 * nnz), dtype="<u4").astype(np.int32)
    data = np.frombuffer(f.read(4 * nnz), dtype="<f4").astype(np.float64)
    if indptr.size != major + 1 or indices.size != nnz or data.size != nnz:
        raise ValueError("truncated matrix blob")
    if layout == LAYOUT_CSR:
        return CsrMatrix((rows, cols), indptr, indices, data)
    if layout == LAYOUT_CSC:
        return CscMatrix((rows, cols), indptr, indices, data)
    raise ValueError(f"unknown layout tag {layout}")


def save_matrix(path, m: CsrMatrix | CscMatrix) -> None:
    with open(path, "wb") as f:
        m.write_blob(f)


def load_matrix(path) -> CsrMatrix | CscMatrix:
    with open(path, "rb") as f:
        return read_blob(f)


def indexing_matrix(assignment, n_clusters: int) -> CscMatrix:
    """Indexing matrix C (L x K) with C[l, assignment[l]] = 1."""
    c = np.asarray(assignment, dtype=np.int64)
    if c.size and (c.min() < 0 or c.max() >= n_clusters):
        raise ValueError("cluster id out of range")
    m = sp.csr_matrix((np.ones(c.size), (np.arange(c.size), c)), shape=(c.size, n_clusters))
    return CscMatrix.from_scipy(m)


def assignment_of(C: CscMatrix | CsrMatrix) -> np.ndarray:
    """Recover the per-row cluster id from an indexing matrix."""
    csr = C.to_scipy().tocsr()
    counts = np.diff(csr.indptr)
    if np.any(counts != 1):
        raise ValueError("indexing matrix must have exactly one nonzero per row")
    return csr.indices.astype(np.int64)


def binarize_matmul(Y: CsrMatrix, C: CscMatrix | CsrMatrix) -> CsrMatrix:
    """binarize(Y C) for a binary Y and an indexing matrix C."""
    if Y.shape[1] != C.shape[0]:
        raise ShapeError(f"Y has {Y.shape[1]} columns but C has {C.shape[0]} rows")
    c = assignment_of(C)
    n, K = Y.shape[0], C.shape[1]
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(Y.indptr))
    key = np.unique(rows * K + c[Y.indices])
    r, k = np.divmod(key, K)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
    return CsrMatrix((n, K), indptr, k, np.ones(key.size))


def hard_threshold(w: SparseVec, eps: float) -> SparseVec:
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    if eps == 0:
        return w
    keep = np.abs(w.values) >= eps
    return SparseVec(w.dim, w.indices[keep], w.values[keep])


# --- doubly-sparse weight blocks -------------------------------------------


@numba.njit(cache=True, nogil=True)
def _hash_slot(key, mask):
    h = np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)
    return np.int64((h >> np.uint64(32)) & np.uint64(mask))


@numba.njit(cache=True, nogil=True)
def _build_table(row_ids, cap):
    keys = np.full(cap, -1, dtype=np.int64)
    slots = np.full(cap, -1, dtype=np.int64)
    mask = cap - 1
    for r in range(row_ids.size):
        s = _hash_slot(row_ids[r], mask)
        while keys[s] != -1:
            s = (s + 1) & mask
        keys[s] = row_ids[r]
        slots[s] = r
    return keys, slots


@numba.njit(cache=True, nogil=True)
def _lookup(keys, slots, key):
    cap = keys.size
    if cap == 0:
        return -1
    mask = cap - 1
    s = _hash_slot(key, mask)
    while True:
        k = keys[s]
        if k == key:
            return slots[s]
        if k == -1:
            return -1
        s = (s + 1) & mask


@numba.njit(cache=True, nogil=True)
def _ds_spmv(keys, slots, row_ptr, row_cols, row_vals, x_idx, x_val, out):
    """out += W^T x; returns the number of stored weights touched."""
    touched = 0
    for p in range(x_idx.size):
        r = _lookup(keys, slots, x_idx[p])
        if r < 0:
            continue
        v = x_val[p]
        for q in range(row_ptr[r], row_ptr[r + 1]):
            out[row_cols[q]] += v * row_vals[q]
        touched += row_ptr[r + 1] - row_ptr[r]
    return touched


def _table_capacity(n_rows: int) -> int:
    if n_rows == 0:
        return 0
    cap = 1
    while cap < 2 * n_rows:
        cap <<= 1
    return cap


class DoublySparseMatrix:
    """A d x m weight block that stores only its non-empty rows.

    Each non-empty row is a sparse label vector of (label offset, value)
    pairs; an open-addressing hash table maps a feature id to its row.
    """

    def __init__(self, shape, row_ids, row_ptr, row_cols, row_vals):
        self.shape = (int(shape[0]), int(shape[1]))
        self.row_ids = _frozen(np.ascontiguousarray(row_ids, dtype=np.int64))
        self.row_ptr = _frozen(np.ascontiguousarray(row_ptr, dtype=np.int64))
        self.row_cols = _frozen(np.ascontiguousarray(row_cols, dtype=np.int32))
        self.row_vals = _frozen(np.ascontiguousarray(row_vals, dtype=np.float64))
        keys, slots = _build_table(self.row_ids, _table_capacity(self.row_ids.size))
        self._keys = _frozen(keys)
        self._slots = _frozen(slots)

    @property
    def cols(self) -> int:
        return self.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.row_cols.size)

    @property
    def n_rows_stored(self) -> int:
        return int(self.row_ids.size)

    def get_row(self, feature: int) -> list[tuple[int, float]]:
        r = _lookup(self._keys, self._slots, int(feature))
        if r < 0:
            return []
        a, b = self.row_ptr[r], self.row_ptr[r + 1]
        return list(zip(self.row_cols[a:b].tolist(), self.row_vals[a:b].tolist()))

    def rows(self) -> dict[int, list[tuple[int, float]]]:
        return {int(f): self.get_row(int(f)) for f in self.row_ids}

    def memory_entries(self) -> dict[str, int]:
        """Stored-entry counts: raw weights only, and with per-row and table overhead."""
        return {
            "raw_nnz": self.nnz,
            "with_overhead": self.nnz + self.n_rows_stored + 2 * self._keys.size,
        }

    def spmv(self, x: SparseVec) -> np.ndarray:
        return spmv_doubly_sparse(self, x)


def to_doubly_sparse(W_block: CscMatrix) -> DoublySparseMatrix:
    csr = W_block.to_scipy().tocsr()
    csr.sort_indices()
    counts = np.diff(csr.indptr)
    nonempty = np.flatnonzero(counts)
    row_ptr = np.zeros(nonempty.size + 1, dtype=np.int64)
    np.cumsum(counts[nonempty], out=row_ptr[1:])
    # rows are contiguous in CSR, so dropping empty ones keeps the payload as is
    return DoublySparseMatrix(W_block.shape, nonempty, row_ptr, csr.indices, csr.data)


def from_doubly_sparse(W: DoublySparseMatrix) -> CscMatrix:
    counts = np.zeros(W.shape[0], dtype=np.int64)
    counts[W.row_ids] = np.diff(W.row_ptr)
    indptr = np.zeros(W.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    csr = sp.csr_matrix((W.row_vals, W.row_cols, indptr), shape=W.shape)
    return CscMatrix.from_scipy(csr)


def spmv_doubly_sparse(W: DoublySparseMatrix, x: SparseVec) -> np.ndarray:
    if x.dim != W.shape[0]:
        raise ShapeError(f"x has dim {x.dim}, block has {W.shape[0]} rows")
    out = np.zeros(W.shape[1])
    _ds_spmv(W._keys, W._slots, W.row_ptr, W.row_cols, W.row_vals, x.indices, x.values, out)
    return out
