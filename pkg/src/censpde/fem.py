"""Finite-element matrices for piecewise-linear hat functions on a mesh.

Assembles the lumped mass matrix D (D_jj is the integral of hat function j),
the stiffness matrix G1 (gradient inner products) and G2 = G1 D^-1 G1, plus
the sparse projection matrix that interpolates mesh-node values to arbitrary
locations through barycentric weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, OutsideMeshError
from .mesh import Mesh, locate_many


@dataclass(frozen=True)
class FemMatrices:
    """Sparse finite-element matrices over a mesh.

    D is diagonal (lumped mass), G1 is the stiffness matrix with zero row
    sums, G2 = G1 D^-1 G1 is positive semi-definite with second-order
    neighbor sparsity.
    """

    D: sp.csc_matrix
    G1: sp.csc_matrix
    G2: sp.csc_matrix

    @property
    def n_nodes(self) -> int:
        return self.D.shape[0]

    @property
    def lumped_mass(self) -> np.ndarray:
        return self.D.diagonal()


def assemble_fem(mesh: Mesh) -> FemMatrices:
    """Assemble D, G1 and G2 by exact per-triangle integration.

    Each triangle contributes area/3 to the lumped mass of its vertices;
    hat-function gradients are constant per triangle, so stiffness entries
    are area-weighted gradient dot products.

    Raises
    ------
    AssemblyError
        If any triangle has non-positive area.
    """
    nodes = mesh.nodes
    tris = mesh.triangles
    n = mesh.n_nodes

    p = nodes[tris]  # (M, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(area2 <= 0):
        bad = int(np.argmin(area2))
        raise AssemblyError(f"triangle {bad} has non-positive area {area2[bad] / 2:g}")
    area = 0.5 * area2

    d = np.zeros(n)
    np.add.at(d, tris.ravel(), np.repeat(area / 3.0, 3))

    # gradient of hat i is the opposite edge rotated by 90 degrees over 2*area
    grads = np.empty((len(tris), 3, 2))
    for i in range(3):
        opp = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -opp[:, 1]
        grads[:, i, 1] = opp[:, 0]
    grads /= area2[:, None, None]

    rows = np.repeat(tris, 3, axis=1).ravel()          # i index, 9 per triangle
    cols = np.tile(tris, (1, 3)).ravel()               # j index
    vals = (np.einsum("tik,tjk->tij", grads, grads) * area[:, None, None]).ravel()

    G1 = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    G1 = ((G1 + G1.T) * 0.5).tocsc()  # exact symmetry despite summation order
    D = sp.diags(d, format="csc")
    Dinv = sp.diags(1.0 / d, format="csc")
    G2 = (G1 @ Dinv @ G1).tocsc()
    G2 = ((G2 + G2.T) * 0.5).tocsc()
    return FemMatrices(D=D, G1=G1, G2=G2)


def projection_matrix(mesh: Mesh, locations) -> sp.csr_matrix:
    """Sparse matrix mapping mesh-node values to ``locations``.

    Row i holds the barycentric weights of location i within its containing
    triangle (at most 3 non-zeros, non-negative, summing to 1). A location
    coinciding with a node yields a single unit entry.

    Raises
    ------
    OutsideMeshError
        Listing the indices of locations outside the mesh.
    """
    pts = np.atleast_2d(np.asarray(locations, dtype=float))
    tri_idx, bary = locate_many(mesh, pts)
    outside = np.where(tri_idx < 0)[0]
    if len(outside):
        raise OutsideMeshError(outside.tolist())
    n = len(pts)
    rows = np.repeat(np.arange(n), 3)
    cols = mesh.triangles[tri_idx].ravel()
    vals = bary.ravel()
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, mesh.n_nodes)).tocsr()
    A.eliminate_zeros()
    return A


def dump_coo(matrix, path) -> None:
    """Write a sparse matrix as '(row, col, value)' text for cross-validation."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
