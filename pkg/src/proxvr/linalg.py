"""Sparse/dense vector primitives and contiguous block partitions.

Dense vectors are plain 1-D float64 numpy arrays (aliased ``DenseVec``).
Sparse vectors are kept in canonical form: strictly increasing indices and no
stored zeros, so sparsity statistics read straight off the stored entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

DenseVec = np.ndarray


@dataclass(frozen=True)
class SparseVec:
    """Canonical sparse vector in an ambient space of dimension ``dim``."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if idx.ndim != 1 or val.ndim != 1 or idx.shape != val.shape:
            raise ContractViolation("indices and values must be 1-D and same length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ContractViolation("indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ContractViolation(f"index out of range for dim={self.dim}")
            if np.any(val == 0.0):
                raise ContractViolation("canonical form forbids stored zeros")

    @staticmethod
    def from_pairs(pairs, dim: int) -> "SparseVec":
        """Build from (index, value) pairs; zeros dropped, order normalized."""
        pairs = [(int(i), float(v)) for i, v in pairs if float(v) != 0.0]
        pairs.sort(key=lambda p: p[0])
        idx = np.array([p[0] for p in pairs], dtype=np.int64)
        val = np.array([p[1] for p in pairs], dtype=np.float64)
        return SparseVec(idx, val, dim)

    @staticmethod
    def from_dense(x: DenseVec) -> "SparseVec":
        x = np.asarray(x, dtype=np.float64)
        idx = np.flatnonzero(x)
        return SparseVec(idx.astype(np.int64), x[idx].copy(), x.size)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> DenseVec:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def norm_sq(self) -> float:
        return float(np.dot(self.values, self.values))


def sparse_dot(a: SparseVec, x: DenseVec) -> float:
    """Inner product of a sparse and a dense vector."""
    if a.dim != x.shape[0]:
        raise ContractViolation(f"dimension mismatch: {a.dim} vs {x.shape[0]}")
    return float(np.dot(a.values, x[a.indices]))


def axpy_sparse(alpha: float, a: SparseVec, x: DenseVec) -> DenseVec:
    """Return a copy of ``x`` with ``alpha * a`` added on a's support.

    Coordinates outside the support are bitwise unchanged; alpha == 0 returns
    an exact copy (no +0.0 sign-bit churn).
    """
    if a.dim != x.shape[0]:
        raise ContractViolation(f"dimension mismatch: {a.dim} vs {x.shape[0]}")
    out = x.copy()
    if alpha != 0.0:
        out[a.indices] += alpha * a.values
    return out


@dataclass(frozen=True)
class BlockPartition:
    """Partition of {0..d-1} into m contiguous, non-empty coordinate blocks."""

    bounds: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=np.int64)
        object.__setattr__(self, "bounds", b)
        if b.ndim != 1 or b.size < 2 or b[0] != 0:
            raise ContractViolation("bounds must start at 0")
        if np.any(np.diff(b) <= 0):
            raise ContractViolation("blocks must be non-empty and ordered")

    @staticmethod
    def equal(d: int, m: int) -> "BlockPartition":
        """Equal-size contiguous blocks; the last block absorbs the remainder."""
        if not (1 <= m <= d):
            raise ContractViolation(f"need 1 <= m <= d, got m={m}, d={d}")
        base = d // m
        cuts = [base * j for j in range(m)] + [d]
        return BlockPartition(np.array(cuts, dtype=np.int64))

    @property
    def m(self) -> int:
        return int(self.bounds.size - 1)

    @property
    def d(self) -> int:
        return int(self.bounds[-1])

    def block_bounds(self, j: int) -> tuple[int, int]:
        """Half-open coordinate range [lo, hi) of block ``j`` (0-based)."""
        if not (0 <= j < self.m):
            raise ContractViolation(f"block index {j} out of range [0, {self.m})")
        return int(self.bounds[j]), int(self.bounds[j + 1])


def block_view(x: DenseVec, p: BlockPartition, j: int) -> DenseVec:
    """Writable view of block ``j`` of ``x``; touches only that block."""
    if x.shape[0] != p.d:
        raise ContractViolation(f"dimension mismatch: {p.d} vs {x.shape[0]}")
    lo, hi = p.block_bounds(j)
    return x[lo:hi]
