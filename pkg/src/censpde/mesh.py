"""Refined Delaunay triangulation over an extended convex domain.

The mesh carries the Gaussian Markov random field: input points are merged
within a cutoff distance, their convex hull is dilated outward so that
boundary effects of the SPDE stay away from the data, and the triangulation
is refined Ruppert-style (circumcenter insertion with boundary-segment
splitting) until interior and exterior edge-length targets and a minimum
angle floor are met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .errors import DegenerateInputError, MeshError

# Fractions of the data bounding-box diagonal used by default_options().
# Calibrated so that a unit-square point cloud yields roughly 550-700 nodes
# regardless of how many raw observations it contains (the cutoff merges
# dense data; refinement sets the final density).
_DEFAULT_INTERIOR_FRAC = 0.052
_DEFAULT_EXTERIOR_FRAC = 0.145
_DEFAULT_EXTENSION_FRAC = 0.130
_DEFAULT_CUTOFF_FRAC = 0.060

_MIN_ANGLE_DEG = 21.0


@dataclass(frozen=True)
class MeshOptions:
    """Controls for mesh construction.

    Parameters
    ----------
    max_edge_interior : float
        Edge-length target inside the original data hull.
    max_edge_exterior : float
        Edge-length target in the extension band; must be >= max_edge_interior.
    boundary_extension : float
        Distance by which the data hull is dilated before triangulating.
    cutoff : float
        Input points closer than this are merged into one node.
    min_angle_deg : float
        Floor for the Ruppert-style quality refinement.
    max_refine_rounds : int
        Safety cap on batch refinement rounds.
    """

    max_edge_interior: float
    max_edge_exterior: float
    boundary_extension: float = 0.0
    cutoff: float = 0.0
    min_angle_deg: float = _MIN_ANGLE_DEG
    max_refine_rounds: int = 60

    def __post_init__(self):
        if not (self.max_edge_interior > 0 and math.isfinite(self.max_edge_interior)):
            raise ValueError("max_edge_interior must be positive and finite")
        if self.max_edge_exterior < self.max_edge_interior:
            raise ValueError("max_edge_exterior must be >= max_edge_interior")
        if self.boundary_extension < 0:
            raise ValueError("boundary_extension must be >= 0")
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        if not (0 < self.min_angle_deg < 34):
            raise ValueError("min_angle_deg must be in (0, 34)")


def default_options(points) -> MeshOptions:
    """Mesh options scaled to the data bounding box.

    The fractions are calibrated so that points spanning the unit square
    produce a mesh in the 550-700 node range.
    """
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    diag = float(np.hypot(*(hi - lo)))
    if diag <= 0:
        raise DegenerateInputError("all points coincide; cannot scale mesh options")
    return MeshOptions(
        max_edge_interior=_DEFAULT_INTERIOR_FRAC * diag,
        max_edge_exterior=_DEFAULT_EXTERIOR_FRAC * diag,
        boundary_extension=_DEFAULT_EXTENSION_FRAC * diag,
        cutoff=_DEFAULT_CUTOFF_FRAC * diag,
    )


@dataclass(frozen=True)
class PointLocation:
    """Result of locating a point: containing triangle and barycentric weights.

    ``triangle_index`` is None when the point lies outside the mesh.
    """

    triangle_index: Optional[int]
    barycentric: Optional[np.ndarray]

    @property
    def inside(self) -> bool:
        return self.triangle_index is not None


class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    nodes : (N, 2) float array
        Mesh node coordinates.
    triangles : (M, 3) int array
        Node-index triples, counter-clockwise.
    boundary_flags : (N,) bool array
        True for nodes on the outer boundary (edges with a single incident
        triangle).
    """

    def __init__(self, nodes, triangles, boundary_flags=None):
        nodes = np.ascontiguousarray(np.asarray(nodes, dtype=float))
        triangles = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError(f"nodes must have shape (N, 2); got {nodes.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError(f"triangles must have shape (M, 3); got {triangles.shape}")
        if nodes.shape[0] < 3 or triangles.shape[0] < 1:
            raise MeshError("mesh needs at least 3 nodes and 1 triangle")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("node coordinates must be finite")
        if triangles.min() < 0 or triangles.max() >= nodes.shape[0]:
            raise MeshError("triangle indices out of range")

        p = nodes[triangles]
        areas = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise MeshError(
                f"triangle {bad} has non-positive signed area {areas[bad] / 2.0:g}; "
                "triangles must be counter-clockwise and non-degenerate"
            )

        if boundary_flags is None:
            boundary_flags = _boundary_flags_from_triangles(nodes.shape[0], triangles)
        else:
            boundary_flags = np.asarray(boundary_flags, dtype=bool)
            if boundary_flags.shape != (nodes.shape[0],):
                raise MeshError("boundary_flags length must match node count")

        for arr in (nodes, triangles, boundary_flags):
            arr.setflags(write=False)
        self.nodes = nodes
        self.triangles = triangles
        self.boundary_flags = boundary_flags
        self._locator = _TriangleLocator(nodes, triangles)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (E, 2) index array."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        d = self.nodes[e[:, 0]] - self.nodes[e[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    def __repr__(self):
        return f"Mesh(n_nodes={self.n_nodes}, n_triangles={self.n_triangles})"


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _boundary_flags_from_triangles(n_nodes, triangles):
    t = triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    flags = np.zeros(n_nodes, dtype=bool)
    flags[uniq[counts == 1].ravel()] = True
    return flags


def merge_close_points(points, cutoff) -> np.ndarray:
    """Greedy first-keep merge of points closer than ``cutoff``.

    Exact duplicates are always merged. Deterministic: a point is kept iff it
    is at distance >= cutoff from every previously kept point.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInputError(f"points must have shape (n, 2); got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInputError("points must be finite")
    scale = float(np.max(np.ptp(pts, axis=0))) if len(pts) > 1 else 1.0
    eps = max(float(cutoff), 1e-12 * max(scale, 1.0))
    cell = eps
    grid: dict[tuple[int, int], list[int]] = {}
    kept: list[np.ndarray] = []
    for p in pts:
        cx, cy = int(math.floor(p[0] / cell)), int(math.floor(p[1] / cell))
        merged = False
        for kx in (cx - 1, cx, cx + 1):
            for ky in (cy - 1, cy, cy + 1):
                for j in grid.get((kx, ky), ()):
                    q = kept[j]
                    if (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < eps * eps:
                        merged = True
                        break
                if merged:
                    break
            if merged:
                break
        if not merged:
            grid.setdefault((cx, cy), []).append(len(kept))
            kept.append(p.copy())
    return np.asarray(kept)


def convex_hull_vertices(points) -> np.ndarray:
    """Counter-clockwise convex hull vertices of a point set."""
    pts = np.asarray(points, dtype=float)
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateInputError(f"points are degenerate (collinear?): {exc}") from exc
    return pts[hull.vertices]


def points_in_convex_polygon(points, polygon, tol=0.0) -> np.ndarray:
    """Boolean mask of points inside (or within ``tol`` of) a CCW convex polygon."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(polygon, dtype=float)
    a = poly
    b = np.roll(poly, -1, axis=0)
    edge = b - a
    lens = np.hypot(edge[:, 0], edge[:, 1])
    inside = np.ones(len(pts), dtype=bool)
    for k in range(len(poly)):
        s = _cross(edge[k], pts - a[k]) / max(lens[k], 1e-300)
        inside &= s >= -tol
    return inside


def max_pairwise_distance(points) -> float:
    """Diameter of a point set (computed on hull vertices)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    try:
        hp = convex_hull_vertices(pts)
    except DegenerateInputError:
        hp = pts  # collinear: brute force below is still exact
    if len(hp) > 2000:  # pathological; hulls are tiny in practice
        hp = hp[:: len(hp) // 2000 + 1]
    d2 = np.sum((hp[:, None, :] - hp[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def _dilate_polygon(poly, dist):
    """Offset a CCW convex polygon outward by ``dist`` (miter joins)."""
    if dist == 0:
        return poly.copy()
    n = len(poly)
    prev = np.roll(poly, 1, axis=0)
    edge_in = poly - prev              # edge arriving at vertex i
    edge_out = np.roll(poly, -1, axis=0) - poly  # edge leaving vertex i
    out = np.empty_like(poly)
    for i in range(n):
        e1, e2 = edge_in[i], edge_out[i]
        n1 = np.array([e1[1], -e1[0]]) / np.hypot(*e1)
        n2 = np.array([e2[1], -e2[0]]) / np.hypot(*e2)
        p1 = prev[i] + dist * n1       # point on offset line of incoming edge
        p2 = poly[i] + dist * n2       # point on offset line of outgoing edge
        denom = _cross(e1, e2)
        if abs(denom) < 1e-14 * (np.hypot(*e1) * np.hypot(*e2)):
            out[i] = poly[i] + dist * n1   # collinear edges share the offset line
        else:
            # intersection of p1 + t e1 and p2 + s e2
            t = _cross(p2 - p1, e2) / denom
            out[i] = p1 + t * e1
    return out


def _simplify_polygon(poly, max_dev):
    """Drop convex-polygon vertices that deviate < max_dev from their chord.

    Near-collinear corners (miter joins of a dilated hull) otherwise seed
    unfixable sliver triangles along the boundary. Removal only shaves
    slivers of depth < max_dev off the domain.
    """
    pts = [p for p in poly]
    changed = True
    while changed and len(pts) > 3:
        changed = False
        k = 0
        while k < len(pts) and len(pts) > 3:
            a = pts[(k - 1) % len(pts)]
            v = pts[k]
            b = pts[(k + 1) % len(pts)]
            chord = b - a
            clen = float(np.hypot(*chord))
            if clen > 0 and abs(_cross2(chord, v - a)) / clen < max_dev:
                pts.pop(k)
                changed = True
            else:
                k += 1
    return np.asarray(pts)


def _polygon_ring_points(poly, spacing):
    """Points along a polygon boundary with segment length <= spacing."""
    ring = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        length = float(np.hypot(*(b - a)))
        k = max(1, int(math.ceil(length / spacing - 1e-12)))
        for j in range(k):
            ring.append(a + (j / k) * (b - a))
    return np.asarray(ring)


def _canonical_triangles(points, simplices):
    """CCW-orient simplices, put the smallest index first, sort rows."""
    t = np.array(simplices, dtype=np.int64, copy=True)
    p = points[t]
    flip = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]) < 0
    t[flip] = t[flip][:, [0, 2, 1]]
    shift = np.argmin(t, axis=1)
    for s in (1, 2):
        rows = shift == s
        t[rows] = np.roll(t[rows], -s, axis=1)
    order = np.lexsort((t[:, 2], t[:, 1], t[:, 0]))
    return t[order]


def _triangle_metrics(points, tris):
    """Per-triangle longest edge, min angle (deg), circumcenter, centroid."""
    p = points[tris]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    eab, ebc, eca = b - a, c - b, a - c
    lab = np.hypot(eab[:, 0], eab[:, 1])
    lbc = np.hypot(ebc[:, 0], ebc[:, 1])
    lca = np.hypot(eca[:, 0], eca[:, 1])
    lengths = np.stack([lab, lbc, lca], axis=1)
    longest = lengths.max(axis=1)
    area2 = _cross(eab, -eca)
    # law of sines: sin(angle at A) = area2 / (lab * lca) etc.
    with np.errstate(divide="ignore", invalid="ignore"):
        sins = np.stack(
            [
                area2 / (lab * lca),
                area2 / (lab * lbc),
                area2 / (lbc * lca),
            ],
            axis=1,
        )
    sins = np.clip(sins, -1.0, 1.0)
    # the smallest angle is opposite the shortest edge and is < 90 degrees,
    # so arcsin of the smallest sine identifies it
    min_angle = np.degrees(np.arcsin(sins.min(axis=1)))
    # circumcenter
    d = 2.0 * area2
    asq = np.sum(a * a, axis=1)
    bsq = np.sum(b * b, axis=1)
    csq = np.sum(c * c, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = (asq * (b[:, 1] - c[:, 1]) + bsq * (c[:, 1] - a[:, 1]) + csq * (a[:, 1] - b[:, 1])) / d
        uy = (asq * (c[:, 0] - b[:, 0]) + bsq * (a[:, 0] - c[:, 0]) + csq * (b[:, 0] - a[:, 0])) / d
    centers = np.stack([ux, uy], axis=1)
    centroid = p.mean(axis=1)
    return longest, min_angle, centers, centroid, lengths


def _boundary_chain(nodes, polygon, tol):
    """Ordered indices of nodes lying on the polygon boundary (CCW)."""
    n = len(polygon)
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    chain = []
    for k in range(n):
        e = b[k] - a[k]
        length = float(np.hypot(*e))
        rel = nodes - a[k]
        t = (rel @ e) / (length * length)
        dist = np.abs(_cross(e, rel)) / length
        on = np.where((dist <= tol) & (t >= -1e-12) & (t < 1.0 - 1e-12))[0]
        for idx in on[np.argsort(t[on], kind="stable")]:
            chain.append(int(idx))
    return chain


def build_mesh(points, opts: MeshOptions) -> Mesh:
    """Build a refined Delaunay mesh over the dilated convex hull of ``points``.

    Input points closer than ``opts.cutoff`` are merged; the surviving points
    all become mesh nodes. Triangles whose centroid falls inside the original
    data hull must have edges <= ``max_edge_interior``; triangles in the
    extension band must have edges <= ``max_edge_exterior``.

    Raises
    ------
    DegenerateInputError
        Fewer than 3 distinct points after merging, or collinear input.
    MeshError
        Refinement failed to meet the edge-length targets.
    """
    pts = merge_close_points(points, opts.cutoff)
    if len(pts) < 3:
        raise DegenerateInputError(
            f"need at least 3 distinct points after cutoff merging; got {len(pts)}"
        )
    data_hull = convex_hull_vertices(pts)  # raises DegenerateInputError if collinear

    bbox_diag = float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
    scale = bbox_diag + opts.boundary_extension
    tol_node = 1e-9 * scale

    domain = _dilate_polygon(data_hull, opts.boundary_extension)
    if opts.boundary_extension > 0:
        domain = _simplify_polygon(
            domain, min(0.3 * opts.boundary_extension, 0.1 * opts.max_edge_exterior)
        )
    ring = _polygon_ring_points(domain, opts.max_edge_exterior)

    nodes = [p for p in pts]
    node_arr = np.asarray(nodes)
    for q in ring:
        if np.min(np.sum((node_arr - q) ** 2, axis=1)) > tol_node * tol_node:
            nodes.append(q)
    nodes = np.asarray(nodes)

    # precompute data-hull edges for the interior test
    dh_a = data_hull
    dh_b = np.roll(data_hull, -1, axis=0)
    dh_e = dh_b - dh_a
    dh_len = np.hypot(dh_e[:, 0], dh_e[:, 1])

    # domain edges for the strict-inside test of circumcenters
    dm_a = domain
    dm_e = np.roll(domain, -1, axis=0) - domain
    dm_len = np.hypot(dm_e[:, 0], dm_e[:, 1])

    def interior_mask(cents):
        inside = np.ones(len(cents), dtype=bool)
        for k in range(len(dh_a)):
            s = _cross(dh_e[k], cents - dh_a[k]) / max(dh_len[k], 1e-300)
            inside &= s >= -tol_node
        return inside

    def strictly_in_domain(c):
        for k in range(len(dm_a)):
            if _cross(dm_e[k], c - dm_a[k]) / max(dm_len[k], 1e-300) < tol_node:
                return False
        return True

    sliver_tol = 1e-13 * scale * scale  # on twice-area; drops collinear boundary flaps

    def triangulate(current):
        try:
            dela = Delaunay(current)
        except QhullError as exc:
            raise MeshError(f"Delaunay triangulation failed: {exc}") from exc
        t = dela.simplices
        p = current[t]
        area2 = np.abs(_cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))
        return _canonical_triangles(current, t[area2 > sliver_tol])

    tris = triangulate(nodes)
    for _round in range(opts.max_refine_rounds):
        longest, min_angle, centers, cents, lengths = _triangle_metrics(nodes, tris)
        limits = np.where(interior_mask(cents), opts.max_edge_interior, opts.max_edge_exterior)
        bad_size = longest > limits * (1 + 1e-12)
        bad_angle = min_angle < opts.min_angle_deg - 1e-9
        if not (np.any(bad_size) or np.any(bad_angle)):
            break
        # worst first: size violations by excess ratio, then thin angles
        size_idx = np.where(bad_size)[0]
        size_idx = size_idx[np.argsort(-(longest / limits)[size_idx], kind="stable")]
        angle_idx = np.where(bad_angle & ~bad_size)[0]
        angle_idx = angle_idx[np.argsort(min_angle[angle_idx], kind="stable")]
        bad = np.concatenate([size_idx, angle_idx])

        chain = _boundary_chain(nodes, domain, tol_node)
        seg_a = nodes[chain]
        seg_b = nodes[np.roll(chain, -1)]
        seg_mid = 0.5 * (seg_a + seg_b)
        seg_rad = 0.5 * np.hypot(*(seg_b - seg_a).T)

        new_pts: list[np.ndarray] = []
        used_segments: set[int] = set()
        occupied: dict[tuple[int, int], list[int]] = {}

        def too_close(q, radius):
            ckey = (int(q[0] // max(radius, tol_node)), int(q[1] // max(radius, tol_node)))
            for kx in (ckey[0] - 1, ckey[0], ckey[0] + 1):
                for ky in (ckey[1] - 1, ckey[1], ckey[1] + 1):
                    for j in occupied.get((kx, ky), ()):
                        if np.hypot(*(new_pts[j] - q)) < radius:
                            return True
            return False

        def register(q, radius):
            ckey = (int(q[0] // max(radius, tol_node)), int(q[1] // max(radius, tol_node)))
            occupied.setdefault(ckey, []).append(len(new_pts))
            new_pts.append(q)

        def near_existing(q, radius):
            return np.min(np.sum((nodes - q) ** 2, axis=1)) < radius * radius

        for ti in bad:
            cc = centers[ti]
            local = limits[ti]
            fixing_size = bool(bad_size[ti])
            cand = None
            if np.all(np.isfinite(cc)):
                gap = seg_rad - np.hypot(*(seg_mid - cc).T)
                enc = gap > tol_node
            else:
                enc = np.zeros(len(seg_mid), dtype=bool)
            if np.any(enc):
                k = int(np.argmax(np.where(enc, gap, -np.inf)))
                # avoid oversplitting the boundary; fall through to an edge split
                if k not in used_segments and seg_rad[k] >= 0.2 * opts.max_edge_interior:
                    used_segments.add(k)
                    cand = seg_mid[k]
            elif np.all(np.isfinite(cc)) and strictly_in_domain(cc):
                cand = cc
            if cand is None:
                edge_sel = int(np.argmax(lengths[ti]))
                v1, v2 = tris[ti, edge_sel], tris[ti, (edge_sel + 1) % 3]
                cand = 0.5 * (nodes[v1] + nodes[v2])
            if fixing_size:
                # size violations must converge: only near-duplicates are rejected,
                # plus batch separation (progress is still >= 1 insertion per round)
                if near_existing(cand, tol_node) or too_close(cand, 0.6 * local):
                    continue
            else:
                # angle polish is best-effort; keep batches well separated
                if near_existing(cand, 0.05 * local) or too_close(cand, 0.6 * local):
                    continue
            register(cand, 0.6 * local)

        if not new_pts and len(size_idx) > 0:
            # force progress on the worst size violation
            ti = size_idx[0]
            edge_sel = int(np.argmax(lengths[ti]))
            v1, v2 = tris[ti, edge_sel], tris[ti, (edge_sel + 1) % 3]
            cand = 0.5 * (nodes[v1] + nodes[v2])
            if not near_existing(cand, tol_node):
                register(cand, tol_node)
        if not new_pts:
            break
        nodes = np.vstack([nodes, np.asarray(new_pts)])
        tris = triangulate(nodes)

    longest, _, _, cents, _ = _triangle_metrics(nodes, tris)
    limits = np.where(interior_mask(cents), opts.max_edge_interior, opts.max_edge_exterior)
    if np.any(longest > limits * (1 + 1e-12)):
        raise MeshError(
            "edge-length refinement did not converge within "
            f"{opts.max_refine_rounds} rounds; loosen the edge targets"
        )

    mesh = Mesh(nodes, tris)
    # contract: every (merged) input point is a mesh node
    if len(pts) > 0:
        d2 = np.array([np.min(np.sum((mesh.nodes - p) ** 2, axis=1)) for p in pts])
        if np.any(d2 > tol_node * tol_node):
            raise MeshError("internal error: an input point is not a mesh node")
    return mesh


class _TriangleLocator:
    """Uniform-grid spatial index over triangle bounding boxes."""

    def __init__(self, nodes, triangles):
        self.nodes = nodes
        self.triangles = triangles
        p = nodes[triangles]
        self.tri_lo = p.min(axis=1)
        self.tri_hi = p.max(axis=1)
        self.lo = nodes.min(axis=0)
        self.hi = nodes.max(axis=0)
        span = np.maximum(self.hi - self.lo, 1e-300)
        m = len(triangles)
        self.ncell = int(np.clip(math.sqrt(m / 2.0), 1, 512))
        self.cell = span / self.ncell
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for t in range(m):
            c0 = self._cell_of(self.tri_lo[t])
            c1 = self._cell_of(self.tri_hi[t])
            for cx in range(c0[0], c1[0] + 1):
                for cy in range(c0[1], c1[1] + 1):
                    self.buckets.setdefault((cx, cy), []).append(t)
        diag = float(np.hypot(*(self.hi - self.lo)))
        self.area_tol = 1e-10 * diag * diag

    def _cell_of(self, p):
        c = (p - self.lo) / self.cell
        return (int(np.clip(c[0], 0, self.ncell - 1)), int(np.clip(c[1], 0, self.ncell - 1)))

    def candidates(self, p):
        return self.buckets.get(self._cell_of(p), [])

    def locate(self, p):
        """Lowest-index triangle containing p, with clipped barycentric weights."""
        hit = self._try(p, self.candidates(p))
        if hit is not None:
            return hit
        # rare fallback: point on a cell boundary missed by bucketing
        return self._try(p, range(len(self.triangles)))

    def _try(self, p, cand):
        nodes, tris = self.nodes, self.triangles
        for t in sorted(cand):
            ia, ib, ic = tris[t]
            a, b, c = nodes[ia], nodes[ib], nodes[ic]
            # signed areas (x2) of the three sub-triangles
            s0 = _cross2(b - p, c - p)
            s1 = _cross2(c - p, a - p)
            s2 = _cross2(a - p, b - p)
            if s0 >= -self.area_tol and s1 >= -self.area_tol and s2 >= -self.area_tol:
                total = s0 + s1 + s2
                if total <= 0:
                    continue
                w = np.array([s0, s1, s2]) / total
                w = np.clip(w, 0.0, 1.0)
                w /= w.sum()
                return int(t), w
        return None


def _cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def locate(mesh: Mesh, p) -> PointLocation:
    """Locate a point in the mesh.

    Returns the lowest-index containing triangle with barycentric weights
    (non-negative, summing to 1), or an outside result. Points on shared
    edges resolve deterministically to the lowest triangle index.
    """
    p = np.asarray(p, dtype=float)
    hit = mesh._locator.locate(p)
    if hit is None:
        return PointLocation(None, None)
    t, w = hit
    return PointLocation(t, w)


def locate_many(mesh: Mesh, points):
    """Vectorized locate: returns (triangle indices with -1 outside, weights)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    tri_idx = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    for i in range(n):
        hit = mesh._locator.locate(pts[i])
        if hit is not None:
            tri_idx[i] = hit[0]
            bary[i] = hit[1]
    return tri_idx, bary


def write_mesh(mesh: Mesh, path) -> None:
    """Write a mesh as plain text: a node section and a triangle section."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"{i} {float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{int(a)} {int(b)} {int(c)}\n")


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`write_mesh`."""
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != word:
            raise MeshError(f"malformed mesh file: expected '{word}' at token {pos}")
        pos += 1

    expect("nodes")
    n = int(tokens[pos]); pos += 1
    nodes = np.empty((n, 2))
    for i in range(n):
        idx = int(tokens[pos]); pos += 1
        if idx != i:
            raise MeshError(f"malformed mesh file: node index {idx} != {i}")
        nodes[i, 0] = float(tokens[pos]); pos += 1
        nodes[i, 1] = float(tokens[pos]); pos += 1
    expect("triangles")
    m = int(tokens[pos]); pos += 1
    tris = np.empty((m, 3), dtype=np.int64)
    for i in range(m):
        for j in range(3):
            tris[i, j] = int(tokens[pos]); pos += 1
    return Mesh(nodes, tris)
