from types import SimpleNamespace

import numpy as np
import pytest

from censpde.errors import AssemblyError, OutsideMeshError
from censpde.fem import assemble_fem, projection_matrix
from censpde.mesh import Mesh, build_mesh, default_options


@pytest.fixture(scope="module")
def right_triangle():
    return Mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])


def test_lumped_mass_hand_value(right_triangle):
    fem = assemble_fem(right_triangle)
    np.testing.assert_allclose(fem.D.diagonal(), [1 / 6] * 3, rtol=0, atol=1e-15)


def test_stiffness_hand_value(right_triangle):
    # gradients: (-1,-1), (1,0), (0,1) over area 1/2
    fem = assemble_fem(right_triangle)
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    np.testing.assert_allclose(fem.G1.toarray(), expected, rtol=0, atol=1e-12)


def test_g1_row_sums_zero():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 2, (40, 2))
    fem = assemble_fem(build_mesh(pts, default_options(pts)))
    rows = np.asarray(fem.G1.sum(axis=1)).ravel()
    assert np.max(np.abs(rows)) < 1e-10


def test_g2_psd_on_random_mesh():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 1, (30, 2))
    fem = assemble_fem(build_mesh(pts, default_options(pts)))
    for _ in range(100):
        v = rng.standard_normal(fem.n_nodes)
        assert v @ (fem.G2 @ v) >= -1e-10


def test_g2_equals_triple_product():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, (20, 2))
    fem = assemble_fem(build_mesh(pts, default_options(pts)))
    dense = fem.G1.toarray() @ np.diag(1.0 / fem.D.diagonal()) @ fem.G1.toarray()
    np.testing.assert_allclose(fem.G2.toarray(), dense, atol=1e-12)


def test_symmetry():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, (25, 2))
    fem = assemble_fem(build_mesh(pts, default_options(pts)))
    assert (fem.G1 != fem.G1.T).nnz == 0
    assert (fem.G2 != fem.G2.T).nnz == 0


def test_assembly_order_independent():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 1, (25, 2))
    mesh = build_mesh(pts, default_options(pts))
    fem1 = assemble_fem(mesh)
    perm = rng.permutation(mesh.n_triangles)
    mesh2 = Mesh(mesh.nodes, mesh.triangles[perm])
    fem2 = assemble_fem(mesh2)
    np.testing.assert_allclose(fem1.D.diagonal(), fem2.D.diagonal(), rtol=1e-12)
    np.testing.assert_allclose(fem1.G1.toarray(), fem2.G1.toarray(), rtol=0, atol=1e-12)
    # G2 entries can be large; summation order shifts them at relative 1e-15
    np.testing.assert_allclose(fem1.G2.toarray(), fem2.G2.toarray(), rtol=1e-10, atol=1e-9)


def test_zero_area_triangle_rejected():
    fake = SimpleNamespace(
        nodes=np.array([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]),
        triangles=np.array([(0, 1, 2)]),
        n_nodes=3,
    )
    with pytest.raises(AssemblyError):
        assemble_fem(fake)


def test_projection_at_node_and_centroid(tiny_mesh):
    A = projection_matrix(tiny_mesh, [tiny_mesh.nodes[2], tiny_mesh.nodes[tiny_mesh.triangles[0]].mean(axis=0)])
    row0 = A[0].toarray().ravel()
    expected = np.zeros(tiny_mesh.n_nodes)
    expected[2] = 1.0
    np.testing.assert_allclose(row0, expected, atol=1e-14)
    assert A[0].nnz == 1  # exact zeros dropped

    row1 = A[1].toarray().ravel()
    expected1 = np.zeros(tiny_mesh.n_nodes)
    expected1[list(tiny_mesh.triangles[0])] = 1 / 3
    np.testing.assert_allclose(row1, expected1, atol=1e-12)


def test_projection_partition_of_unity():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, (30, 2))
    mesh = build_mesh(pts, default_options(pts))
    q = rng.uniform(0.25, 0.75, (100, 2))
    A = projection_matrix(mesh, q)
    np.testing.assert_allclose(A @ np.ones(mesh.n_nodes), np.ones(100), atol=1e-12)


def test_projection_interpolates_linear_functions():
    rng = np.random.default_rng(6)
    pts = rng.uniform(0, 1, (30, 2))
    mesh = build_mesh(pts, default_options(pts))
    q = rng.uniform(0.1, 0.9, (80, 2))
    A = projection_matrix(mesh, q)
    alpha, bx, cy = 0.7, -1.3, 2.4
    f_nodes = alpha + bx * mesh.nodes[:, 0] + cy * mesh.nodes[:, 1]
    f_q = alpha + bx * q[:, 0] + cy * q[:, 1]
    np.testing.assert_allclose(A @ f_nodes, f_q, atol=1e-10)


def test_projection_outside_raises_with_indices(tiny_mesh):
    with pytest.raises(OutsideMeshError) as err:
        projection_matrix(tiny_mesh, [(0.5, 0.5), (3.0, 3.0), (-1.0, 0.2)])
    assert err.value.indices == [1, 2]


def test_dump_coo_roundtrip(tmp_path, right_triangle):
    from censpde.fem import dump_coo

    fem = assemble_fem(right_triangle)
    path = tmp_path / "g1.txt"
    dump_coo(fem.G1, path)
    with open(path) as fh:
        n_rows, n_cols, nnz = map(int, fh.readline().split())
        entries = [line.split() for line in fh]
    assert (n_rows, n_cols, nnz) == (3, 3, fem.G1.nnz)
    rebuilt = np.zeros((3, 3))
    for r, c, v in entries:
        rebuilt[int(r), int(c)] = float(v)
    np.testing.assert_array_equal(rebuilt, fem.G1.toarray())
