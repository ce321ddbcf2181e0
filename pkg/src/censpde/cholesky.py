"""Repeated sparse Cholesky factorizations with a fixed sparsity pattern.

MCMC rebuilds the same-pattern SPD matrices thousands of times, so the
symbolic work (fill-reducing ordering, banded storage layout, pattern
alignment for weighted sums) is done once and reused; each iteration then
costs one LAPACK banded factorization plus O(nnz) scatters.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import NumericalError


class PatternUnion:
    """Aligns same-shape sparse matrices on their union pattern.

    ``combine(coeffs)`` then returns the weighted sum as a CSC matrix whose
    index structure is shared across calls, so downstream symbolic analyses
    stay valid.
    """

    def __init__(self, mats):
        mats = [sp.csc_matrix(m) for m in mats]
        shape = mats[0].shape
        if any(m.shape != shape for m in mats):
            raise ValueError("all matrices must share one shape")
        n = shape[1]
        keys = []
        for m in mats:
            coo = m.tocoo()
            keys.append(coo.col.astype(np.int64) * shape[0] + coo.row)
        union = np.unique(np.concatenate(keys))
        self.shape = shape
        self.nnz = len(union)
        self.indices = (union % shape[0]).astype(np.int32)
        cols = union // shape[0]
        self.indptr = np.zeros(n + 1, dtype=np.int32)
        np.add.at(self.indptr, cols + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.data = np.zeros((len(mats), self.nnz))
        for k, m in enumerate(mats):
            coo = m.tocoo()
            pos = np.searchsorted(union, coo.col.astype(np.int64) * shape[0] + coo.row)
            np.add.at(self.data[k], pos, coo.data)

    def combine(self, coeffs) -> sp.csc_matrix:
        values = np.asarray(coeffs) @ self.data
        out = sp.csc_matrix(self.shape)
        out.data = values
        out.indices = self.indices
        out.indptr = self.indptr
        out.has_sorted_indices = True
        out.has_canonical_format = True
        return out


class SymbolicCholesky:
    """Symbolic phase for SPD matrices sharing one sparsity pattern.

    Computes a reverse Cuthill-McKee ordering once and precomputes the
    scatter map from CSC data slots into LAPACK banded storage.
    """

    def __init__(self, pattern):
        # COO round trip: scipy flags like has_canonical_format can be stale
        # (e.g. after setdiag), so canonicalize unconditionally
        pattern = sp.coo_matrix(pattern).tocsc()
        if pattern.shape[0] != pattern.shape[1]:
            raise ValueError("pattern must be square")
        n = pattern.shape[0]
        self.n = n
        perm = reverse_cuthill_mckee(pattern, symmetric_mode=True)
        self.perm = np.asarray(perm, dtype=np.int64)
        self.inv_perm = np.empty(n, dtype=np.int64)
        self.inv_perm[self.perm] = np.arange(n)

        self._indices = pattern.indices.copy()
        self._indptr = pattern.indptr.copy()
        rows = pattern.indices
        cols = np.repeat(np.arange(n), np.diff(pattern.indptr))
        r = self.inv_perm[rows]
        c = self.inv_perm[cols]
        self.bandwidth = int(np.max(np.abs(r - c))) if pattern.nnz else 0
        upper = r <= c
        self._nnz_mask = upper
        # ab[bandwidth + i - j, j] = A[i, j] in the permuted upper-banded layout
        self._ab_rows = (self.bandwidth + r[upper] - c[upper]).astype(np.int64)
        self._ab_cols = c[upper].astype(np.int64)

    def _pattern_matches(self, m) -> bool:
        return (
            m.nnz == len(self._indices)
            and np.array_equal(m.indptr, self._indptr)
            and np.array_equal(m.indices, self._indices)
        )

    def factor(self, matrix) -> "CholeskyFactor":
        """Numeric factorization of a CSC matrix with this exact pattern."""
        m = matrix if sp.issparse(matrix) else sp.csc_matrix(matrix)
        m = m.tocsc()
        if not self._pattern_matches(m):
            m = sp.coo_matrix(m).tocsc()  # canonicalize; scipy flags can be stale
            if not self._pattern_matches(m):
                raise ValueError("matrix pattern does not match the symbolic pattern")
        ab = np.zeros((self.bandwidth + 1, self.n))
        ab[self._ab_rows, self._ab_cols] = m.data[self._nnz_mask]
        try:
            cb = sla.cholesky_banded(ab, lower=False, check_finite=False)
        except sla.LinAlgError as exc:
            raise NumericalError(f"sparse Cholesky failed (matrix not SPD?): {exc}") from exc
        if not np.all(np.isfinite(cb[-1])) or np.any(cb[-1] <= 0):
            raise NumericalError("sparse Cholesky produced non-positive pivots")
        return CholeskyFactor(self, cb)


class CholeskyFactor:
    """Banded Cholesky factor of a permuted SPD matrix A.

    Provides the log-determinant of A, solves with A, and zero-mean Gaussian
    draws with covariance A^-1.
    """

    def __init__(self, symbolic: SymbolicCholesky, cb):
        self._sym = symbolic
        self._cb = cb
        self.logdet = float(2.0 * np.sum(np.log(cb[-1])))

    @property
    def factor_nnz(self) -> int:
        return int(self._cb.size)

    def solve(self, b) -> np.ndarray:
        """Solve A x = b; b may be a vector or a matrix of columns."""
        sym = self._sym
        bp = np.asarray(b)[sym.perm]
        xp = sla.cho_solve_banded((self._cb, False), bp, check_finite=False)
        x = np.empty_like(xp)
        x[sym.perm] = xp
        return x

    def sample(self, rng, size=None) -> np.ndarray:
        """Draw x ~ N(0, A^-1): solve C x = z for the upper factor C."""
        sym = self._sym
        shape = (sym.n,) if size is None else (sym.n, size)
        z = rng.standard_normal(shape)
        xp = sla.solve_banded((0, sym.bandwidth), self._cb, z, check_finite=False)
        x = np.empty_like(xp)
        x[sym.perm] = xp
        return x

    def sample_with_mean(self, b, rng) -> np.ndarray:
        """Draw x ~ N(A^-1 b, A^-1)."""
        return self.solve(b) + self.sample(rng)
