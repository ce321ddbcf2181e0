"""SPDE precision matrix, target correlation and approximation check.

The latent field has sparse precision
``Q(phi) = (phi^2 / 4pi) [phi^-4 D + 2 phi^-2 G1 + G2]``
whose scaling makes the stationary marginal variance approximately one, so
that ``gamma A Q^-1 A^T + (1 - gamma) I`` approximates the smoothness-one
Matern-plus-nugget correlation of the observation process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import k1

from .cholesky import CholeskyFactor, PatternUnion, SymbolicCholesky
from .errors import NumericalError
from .fem import FemMatrices

_FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class MaternParams:
    """Matern-plus-nugget parameters; the smoothness is fixed at one."""

    phi: float
    gamma: float
    tau: float = 1.0
    nu: int = 1

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.nu != 1:
            raise ValueError("smoothness is fixed at nu = 1")


@dataclass(frozen=True)
class SpdePrecision:
    """Precision matrix Q(phi) with its cached Cholesky factor."""

    Q: sp.csc_matrix
    phi: float
    chol: CholeskyFactor = field(repr=False)

    @property
    def logdet(self) -> float:
        return self.chol.logdet

    def quad_form(self, v) -> float:
        return float(v @ (self.Q @ v))


class PrecisionBuilder:
    """Builds Q(phi) repeatedly over one mesh.

    The union sparsity pattern of D, G1, G2 and the fill-reducing ordering
    are computed once; each build is then an O(nnz) weighted sum plus a
    banded numeric factorization.
    """

    def __init__(self, fem: FemMatrices):
        self._union = PatternUnion([fem.D, fem.G1, fem.G2])
        self._symbolic = SymbolicCholesky(self._union.combine([1.0, 1.0, 1.0]))
        self.n = fem.n_nodes

    @property
    def symbolic(self) -> SymbolicCholesky:
        return self._symbolic

    def coefficients(self, phi: float) -> np.ndarray:
        s = phi * phi / _FOUR_PI
        return np.array([s / phi**4, 2.0 * s / phi**2, s])

    def matrix(self, phi: float) -> sp.csc_matrix:
        return self._union.combine(self.coefficients(phi))

    def build(self, phi: float) -> SpdePrecision:
        if not (phi > 0 and math.isfinite(phi)):
            raise NumericalError(f"phi must be positive and finite; got {phi}")
        Q = self.matrix(phi)
        chol = self._symbolic.factor(Q)
        return SpdePrecision(Q=Q, phi=phi, chol=chol)


def build_precision(phi: float, fem: FemMatrices, builder: PrecisionBuilder | None = None) -> SpdePrecision:
    """Assemble Q(phi) with a cached sparse Cholesky factor and log-determinant.

    Pass a :class:`PrecisionBuilder` to amortize the symbolic work across
    repeated calls with different ``phi``.
    """
    if builder is None:
        builder = PrecisionBuilder(fem)
    return builder.build(phi)


def matern_nu1(x):
    """Smoothness-one Matern correlation kernel x * K1(x), with value 1 at 0."""
    scalar = np.isscalar(x) or np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.ones_like(x)
    pos = x > 1e-12
    out[pos] = x[pos] * k1(x[pos])
    return float(out[0]) if scalar else out


def matern_correlation(d, params: MaternParams, same_site: bool = False):
    """Matern-plus-nugget correlation at distance ``d``.

    gamma * (d/phi) K1(d/phi), plus the nugget share (1 - gamma) when the two
    sites coincide.
    """
    scalar = np.isscalar(d) or np.ndim(d) == 0
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if np.any(d < 0):
        raise ValueError("distances must be >= 0")
    rho = params.gamma * matern_nu1(d / params.phi)
    if same_site:
        rho = rho + (1.0 - params.gamma)
    return float(rho[0]) if scalar else rho


def approx_covariance(A, Qp: SpdePrecision, gamma: float, max_locations: int = 5000) -> np.ndarray:
    """Dense gamma A Q^-1 A^T + (1 - gamma) I for verification.

    Refuses more than ``max_locations`` locations: this densifies an n x n
    matrix and is meant for tests and diagnostics, never for sampling.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if n > max_locations:
        raise ValueError(
            f"approx_covariance is a verification tool; refusing n={n} > {max_locations}"
        )
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    QinvAt = Qp.chol.solve(A.T.toarray())
    return gamma * (A @ QinvAt) + (1.0 - gamma) * np.eye(n)
