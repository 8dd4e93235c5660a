"""User-item bipartite graph and its normalized propagation operator.

Users and items share one vertex index space: users occupy ``[0, num_users)``
and items ``[num_users, num_users + num_items)``. The interaction matrix B
becomes the off-diagonal blocks of a symmetric adjacency A = [[0, B], [B', 0]],
which is then self-looped and symmetrically normalized for message passing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class InteractionSet:
    """Deduplicated implicit-feedback pairs over contiguous user/item indices.

    ``pairs`` is an int64 array of shape (P, 2) holding (user, item) rows.
    Optional ``user_labels`` / ``item_labels`` keep the original string ids
    for report readability; they play no role in the math.
    """

    num_users: int
    num_items: int
    pairs: np.ndarray
    user_labels: tuple | None = None
    item_labels: tuple | None = None

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pairs", pairs)
        if self.num_users < 0 or self.num_items < 0:
            raise ValueError("negative user or item count")
        if pairs.size:
            bad_u = (pairs[:, 0] < 0) | (pairs[:, 0] >= self.num_users)
            bad_i = (pairs[:, 1] < 0) | (pairs[:, 1] >= self.num_items)
            bad = bad_u | bad_i
            if bad.any():
                u, i = pairs[np.argmax(bad)]
                raise ValueError(f"interaction pair ({u}, {i}) out of range for "
                                 f"{self.num_users} users x {self.num_items} items")
            keys = pairs[:, 0] * self.num_items + pairs[:, 1]
            uniq, counts = np.unique(keys, return_counts=True)
            if (counts > 1).any():
                key = uniq[np.argmax(counts > 1)]
                u, i = divmod(int(key), self.num_items)
                raise ValueError(f"duplicate interaction pair ({u}, {i})")

    @property
    def num_pairs(self) -> int:
        return self.pairs.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.num_users + self.num_items

    @cached_property
    def _user_csr(self):
        """Per-user sorted item arrays: (offsets, items)."""
        order = np.lexsort((self.pairs[:, 1], self.pairs[:, 0])) if self.num_pairs else np.empty(0, np.int64)
        items = self.pairs[order, 1] if self.num_pairs else np.empty(0, np.int64)
        counts = np.bincount(self.pairs[:, 0], minlength=self.num_users) if self.num_pairs else np.zeros(self.num_users, np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, items

    def items_of_user(self, user: int) -> np.ndarray:
        offsets, items = self._user_csr
        return items[offsets[user]:offsets[user + 1]]

    def user_item_sets(self) -> list[set]:
        offsets, items = self._user_csr
        return [set(items[offsets[u]:offsets[u + 1]].tolist())
                for u in range(self.num_users)]


@dataclass(frozen=True)
class SparseMatrix:
    """Compressed-row sparse matrix with validated layout.

    Within each row column indices are strictly increasing, so entries are
    canonical and duplicate-free.
    """

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.asarray(self.row_offsets, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", vals)
        if ro.shape != (self.rows + 1,):
            raise ValueError(f"row_offsets must have length rows+1, got {ro.shape}")
        if ro[0] != 0 or (np.diff(ro) < 0).any():
            raise ValueError("row_offsets must be monotone nondecreasing from 0")
        if ro[-1] != ci.shape[0] or ci.shape != vals.shape:
            raise ValueError("stored entry count disagrees with offsets")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.cols:
                raise ValueError("column index out of range")
            # strictly increasing within each row; diff positions that cross
            # a row boundary are exempt
            increasing = np.diff(ci) > 0
            row_starts = ro[1:-1]
            boundary = row_starts[(row_starts > 0) & (row_starts < ci.size)]
            inside = np.ones(max(ci.size - 1, 0), dtype=bool)
            inside[boundary - 1] = False
            if not increasing[inside].all():
                raise ValueError("column indices must be strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets),
                             shape=(self.rows, self.cols))

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        csr = mat.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1],
                   csr.indptr.astype(np.int64),
                   csr.indices.astype(np.int64),
                   csr.data.astype(np.float64))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Self-looped, symmetrically normalized adjacency over all vertices.

    ``degrees`` holds the self-looped degree of each vertex (original degree
    plus one), so entry (i, j) of ``matrix`` equals 1/sqrt(degrees[i] *
    degrees[j]) wherever the self-looped adjacency is nonzero.
    """

    matrix: SparseMatrix
    degrees: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "degrees", np.asarray(self.degrees, dtype=np.float64))
        m = self.matrix
        if m.rows != m.cols:
            raise ValueError("normalized adjacency must be square")
        diag = _diagonal(m)
        if (diag <= 0).any():
            raise ValueError("every vertex must carry a positive self-loop entry")

    @property
    def num_vertices(self) -> int:
        return self.matrix.rows

    @cached_property
    def _scipy(self) -> sp.csr_matrix:
        return self.matrix.to_scipy()


def _diagonal(m: SparseMatrix) -> np.ndarray:
    return m.to_scipy().diagonal()


def build_bipartite_adjacency(interactions: InteractionSet) -> SparseMatrix:
    """Assemble A = [[0, B], [B', 0]] over the shared vertex index space.

    The result has exactly two stored entries per interaction and a zero
    diagonal.
    """
    n_users = interactions.num_users
    n = interactions.num_vertices
    pairs = interactions.pairs
    if pairs.size:
        users = pairs[:, 0]
        items = pairs[:, 1] + n_users
        rows = np.concatenate([users, items])
        cols = np.concatenate([items, users])
        data = np.ones(rows.shape[0], dtype=np.float64)
        coo = sp.coo_matrix((data, (rows, cols)), shape=(n, n))
        return SparseMatrix.from_scipy(coo)
    empty = sp.csr_matrix((n, n), dtype=np.float64)
    return SparseMatrix.from_scipy(empty)


def normalize_adjacency(adjacency: SparseMatrix) -> NormalizedAdjacency:
    """Self-loop and symmetrically normalize a bipartite adjacency.

    Adds the identity, then scales entry (i, j) by 1/sqrt(d_i * d_j) where
    d is the self-looped degree. Self-loops guarantee d >= 1, so the
    normalization never divides by zero.
    """
    if adjacency.rows != adjacency.cols:
        raise ValueError("adjacency must be square")
    a = adjacency.to_scipy()
    if a.diagonal().any():
        raise ValueError("adjacency must have a zero diagonal before self-looping")
    if (a != a.T).nnz != 0:
        raise ValueError("adjacency must be symmetric")
    a_tilde = (a + sp.identity(adjacency.rows, format="csr")).tocsr()
    degrees = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(degrees)
    d_inv = sp.diags(inv_sqrt)
    a_hat = (d_inv @ a_tilde @ d_inv).tocsr()
    return NormalizedAdjacency(SparseMatrix.from_scipy(a_hat), degrees)


def spmm(matrix: SparseMatrix, dense: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``matrix @ dense``."""
    dense = np.asarray(dense, dtype=np.float64)
    if matrix.cols != dense.shape[0]:
        raise ValueError(f"spmm dimension mismatch: {matrix.rows}x{matrix.cols} "
                         f"@ {dense.shape}")
    return matrix.to_scipy() @ dense


def neighbors_of(adjacency: SparseMatrix, vertex: int) -> np.ndarray:
    """Sorted neighbor indices of ``vertex``, excluding the vertex itself."""
    if not 0 <= vertex < adjacency.rows:
        raise ValueError(f"vertex {vertex} out of range for {adjacency.rows} vertices")
    start, stop = adjacency.row_offsets[vertex], adjacency.row_offsets[vertex + 1]
    cols = adjacency.col_indices[start:stop]
    return cols[cols != vertex].copy()


def neighbor_table(adjacency: SparseMatrix) -> tuple[np.ndarray, np.ndarray]:
    """CSR (offsets, indices) of self-excluded neighbor lists for all vertices."""
    keep = np.ones(adjacency.nnz, dtype=bool)
    row_of = np.repeat(np.arange(adjacency.rows), np.diff(adjacency.row_offsets))
    keep[row_of == adjacency.col_indices] = False
    indices = adjacency.col_indices[keep]
    counts = np.bincount(row_of[keep], minlength=adjacency.rows)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return offsets, indices.astype(np.int64)
