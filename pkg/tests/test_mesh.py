import numpy as np
import pytest

from censpde.errors import DegenerateInputError, MeshError
from censpde.mesh import (Mesh, MeshOptions, build_mesh, default_options,
                          locate, merge_close_points, read_mesh, write_mesh)


def _edge_set(mesh):
    t = mesh.triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    return e


def test_minimal_triangle():
    m = build_mesh([(0, 0), (1, 0), (0, 1)], MeshOptions(10.0, 10.0, 0.0))
    assert m.n_nodes == 3
    assert m.n_triangles == 1


def test_unit_square_interior_edges_bounded():
    opts = MeshOptions(max_edge_interior=0.2, max_edge_exterior=0.6, boundary_extension=0.1)
    corners = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
    m = build_mesh(corners, opts)
    assert m.n_nodes > 50  # refinement filled the square

    # exhaustive scan: every edge of a triangle whose centroid falls in the
    # data hull must respect the interior limit
    from censpde.mesh import convex_hull_vertices, points_in_convex_polygon

    hull = convex_hull_vertices(corners)
    cents = m.nodes[m.triangles].mean(axis=1)
    interior = points_in_convex_polygon(cents, hull, tol=1e-9)
    for t, is_int in zip(m.triangles, interior):
        p = m.nodes[t]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            length = np.hypot(*(p[a] - p[b]))
            limit = 0.2 if is_int else 0.6
            assert length <= limit * (1 + 1e-9)
    # every input point is a mesh node
    for c in corners:
        assert np.min(np.sum((m.nodes - c) ** 2, axis=1)) < 1e-18


def test_cutoff_merges_then_degenerate():
    pts = [(0, 0), (1e-4, 0), (1, 1)]
    merged = merge_close_points(pts, cutoff=1e-3)
    assert len(merged) == 2
    with pytest.raises(DegenerateInputError):
        build_mesh(pts, MeshOptions(1.0, 1.0, 0.1, cutoff=1e-3))


def test_collinear_input_rejected():
    with pytest.raises(DegenerateInputError):
        build_mesh([(0, 0), (1, 1), (2, 2), (3, 3)], MeshOptions(1.0, 1.0, 0.0))


def test_locate_vertex_centroid_outside():
    m = build_mesh([(0, 0), (1, 0), (0, 1)], MeshOptions(10.0, 10.0, 0.0))
    at_vertex = locate(m, m.nodes[0])
    assert at_vertex.inside
    w = np.zeros(3)
    w[np.where((m.triangles[at_vertex.triangle_index] == 0))[0][0]] = 1.0
    np.testing.assert_allclose(at_vertex.barycentric, w, atol=1e-14)

    centroid = m.nodes[m.triangles[0]].mean(axis=0)
    loc = locate(m, centroid)
    np.testing.assert_allclose(loc.barycentric, [1 / 3] * 3, atol=1e-12)

    assert not locate(m, (5.0, 5.0)).inside
    assert locate(m, (5.0, 5.0)).triangle_index is None


def test_barycentric_weights_valid_everywhere():
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 1, (40, 2))
    m = build_mesh(pts, default_options(pts))
    queries = rng.uniform(0.1, 0.9, (200, 2))
    for q in queries:
        res = locate(m, q)
        assert res.inside
        w = res.barycentric
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) < 1e-12
        rebuilt = w @ m.nodes[m.triangles[res.triangle_index]]
        np.testing.assert_allclose(rebuilt, q, atol=1e-9)


def test_shared_edge_resolves_to_lowest_triangle(tiny_mesh):
    # midpoint of the diagonal shared by triangles 0 and 1
    p = (0.5, 0.5)
    res = locate(tiny_mesh, p)
    assert res.triangle_index == 0


def test_delaunay_empty_circumcircle():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 1, (60, 2))
    m = build_mesh(pts, default_options(pts))
    nodes = m.nodes
    for t in m.triangles[:: max(1, m.n_triangles // 120)]:
        a, b, c = nodes[t]
        d = 2 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])) / d
        center = np.array([ux, uy])
        r2 = np.sum((a - center) ** 2)
        dists = np.sum((nodes - center) ** 2, axis=1)
        assert np.all(dists >= r2 * (1 - 1e-7))


def test_conforming_edge_counts():
    rng = np.random.default_rng(11)
    pts = rng.uniform(0, 1, (50, 2))
    m = build_mesh(pts, default_options(pts))
    e = _edge_set(m)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert np.all((counts == 1) | (counts == 2))
    # boundary flags match edges with a single incident triangle
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    boundary_nodes = np.unique(uniq[counts == 1].ravel())
    assert np.array_equal(np.where(m.boundary_flags)[0], boundary_nodes)


def test_positive_areas_and_ccw():
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 1, (30, 2))
    m = build_mesh(pts, default_options(pts))
    p = m.nodes[m.triangles]
    areas = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    assert np.all(areas > 0)


def test_determinism():
    rng = np.random.default_rng(21)
    pts = rng.uniform(0, 1, (80, 2))
    m1 = build_mesh(pts, default_options(pts))
    m2 = build_mesh(pts, default_options(pts))
    assert np.array_equal(m1.nodes, m2.nodes)
    assert np.array_equal(m1.triangles, m2.triangles)


def test_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, (25, 2))
    m = build_mesh(pts, default_options(pts))
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.nodes, m2.nodes)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(m.boundary_flags, m2.boundary_flags)


def test_default_options_node_budget():
    corners = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
    m = build_mesh(corners, default_options(corners))
    assert 400 <= m.n_nodes <= 900


def test_options_validation():
    with pytest.raises(ValueError):
        MeshOptions(-1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        MeshOptions(1.0, 0.5, 0.0)  # exterior < interior
    with pytest.raises(ValueError):
        MeshOptions(1.0, 1.0, -0.1)


def test_mesh_validation_rejects_cw_triangle():
    with pytest.raises(MeshError):
        Mesh([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])
