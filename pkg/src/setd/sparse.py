"""CSR sparse-operator container.

A thin immutable-by-convention wrapper around the three CSR arrays. Matrix
assembly funnels through :meth:`SparseOperator.from_coo`, which delegates
duplicate summing, explicit-zero elimination, and index sorting to scipy so
the stored format always satisfies: column indices strictly increasing
within each row, no explicit zeros. Matvec dispatches to the selected
kernel backend (numba or numpy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import kernels
from .errors import InvalidArgumentError


@dataclass
class SparseOperator:
    n_rows: int
    n_cols: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        """Build from COO triplets; duplicates are summed, zeros dropped."""
        mat = sp.coo_matrix(
            (np.asarray(vals, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
            shape=(n_rows, n_cols),
        ).tocsr()
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return cls(n_rows, n_cols, mat.indptr, mat.indices, mat.data)

    @classmethod
    def from_scipy(cls, mat):
        m = sp.csr_matrix(mat).copy()
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(sp.identity(n, format="csr"))

    @property
    def nnz(self):
        return int(self.data.shape[0])

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise InvalidArgumentError(
                f"operand has shape {x.shape}, operator expects ({self.n_cols},)"
            )
        return kernels.csr_matvec(self.indptr, self.indices, self.data, np.ascontiguousarray(x))

    def __matmul__(self, x):
        return self.matvec(x)

    def to_scipy(self):
        return sp.csr_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n_rows, self.n_cols)
        )

    def dense(self):
        return self.to_scipy().toarray()

    def row_sums(self):
        out = np.zeros(self.n_rows)
        np.add.at(out, np.repeat(np.arange(self.n_rows), np.diff(self.indptr)), self.data)
        return out

    def scale_rows(self, factors):
        """New operator with row i multiplied by factors[i]."""
        factors = np.asarray(factors, dtype=np.float64)
        if factors.shape != (self.n_rows,):
            raise InvalidArgumentError("row factor vector has wrong length")
        data = self.data * np.repeat(factors, np.diff(self.indptr))
        return SparseOperator.from_scipy(
            sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)
        )

    def zero_rows(self, mask):
        """New operator with rows where mask is True emptied."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (self.n_rows,):
            raise InvalidArgumentError("row mask has wrong length")
        keep = ~mask[np.repeat(np.arange(self.n_rows), np.diff(self.indptr))]
        data = np.where(keep, self.data, 0.0)
        return SparseOperator.from_scipy(
            sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)
        )

    def infinity_norm(self):
        if self.nnz == 0:
            return 0.0
        out = np.zeros(self.n_rows)
        np.add.at(
            out, np.repeat(np.arange(self.n_rows), np.diff(self.indptr)), np.abs(self.data)
        )
        return float(out.max())


def save_matrix_market(op, path, comment=""):
    """Write the operator to Matrix Market coordinate text format."""
    scipy.io.mmwrite(str(path), op.to_scipy(), comment=comment)


def load_matrix_market(path):
    return SparseOperator.from_scipy(scipy.io.mmread(str(path)))
