"""Bounding volume hierarchy with batched ray and closest-point queries.

The tree is a linear BVH: triangles are sorted along a Morton curve, grouped
into fixed-size leaves and arranged as a complete binary heap, so traversal
is a breadth-first sweep over arrays of (query, node) pairs.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Ray, TriangleMesh

LEAF_SIZE = 4
BARY_EPS = 1e-9      # inclusive slack on barycentric bounds
DEDUPE_EPS = 1e-9    # hits closer than this on a shared edge/vertex are one hit
_BOX_PAD = 1e-9
_CHUNK = 8192


def watertight_intersect(orig, dirs, a, b, c, t_max):
    """Two-sided watertight ray/triangle test, vectorized over pairs.

    Returns ``(hit, t, min_bary)``. The ray is sheared so its dominant axis
    becomes +z; an exactly axis-aligned ray therefore reduces to a 2D edge
    function test with no shear rounding.
    """
    kz = np.argmax(np.abs(dirs), axis=1)
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    rows = np.arange(len(dirs))
    dz = dirs[rows, kz]
    swap = dz < 0
    kx, ky = np.where(swap, ky, kx), np.where(swap, kx, ky)
    sx = dirs[rows, kx] / dz
    sy = dirs[rows, ky] / dz
    sz = 1.0 / dz

    def shear(p):
        q = p - orig
        qz = q[rows, kz]
        return q[rows, kx] - sx * qz, q[rows, ky] - sy * qz, qz

    ax, ay, az = shear(a)
    bx, by, bz = shear(b)
    cx, cy, cz = shear(c)
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    det = u + v + w
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        min_bary = np.minimum(np.minimum(u * inv, v * inv), w * inv)
        t = (u * az + v * bz + w * cz) * sz * inv
    hit = (det != 0) & (min_bary >= -BARY_EPS) & (t >= 0) & (t <= t_max)
    return hit, t, min_bary


def point_triangle_closest(p, a, b, c):
    """Closest point on triangles ``(a, b, c)`` to points ``p`` (vectorized, exact regions)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]
        # edge and vertex regions, lowest priority first so that earlier Voronoi tests win
        s = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(m[:, None], b + (c - b) * s[:, None], out)
        s = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[:, None], a + ac * s[:, None], out)
        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[:, None], c, out)
        s = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[:, None], a + ab * s[:, None], out)
        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[:, None], b, out)
        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[:, None], a, out)
    return out


def dedupe_hits(ray_ids, t, tri, min_bary):
    """Collapse hits on shared edges/vertices; input sorted by (ray, t, tri).

    Consecutive hits of the same ray within ``DEDUPE_EPS`` in t that both lie
    on a triangle boundary are one crossing; the first of each run is kept.
    """
    if len(t) < 2:
        return np.ones(len(t), bool)
    on_edge = min_bary <= BARY_EPS
    dup = (ray_ids[1:] == ray_ids[:-1]) & (t[1:] - t[:-1] <= DEDUPE_EPS) & on_edge[1:] & on_edge[:-1]
    return np.concatenate([[True], ~dup])


def _morton(points: np.ndarray) -> np.ndarray:
    lo = points.min(axis=0)
    ext = np.maximum(points.max(axis=0) - lo, 1e-300)
    q = np.clip(((points - lo) / ext * 1023).astype(np.int64), 0, 1023)
    code = np.zeros(len(points), np.int64)
    for bit in range(10):
        for axis in range(3):
            code |= ((q[:, axis] >> bit) & 1) << (3 * bit + axis)
    return code


class BVH:
    """Immutable acceleration structure over the triangles of a mesh."""

    def __init__(self, mesh: TriangleMesh):
        if mesh.is_empty():
            raise ValueError("cannot build a BVH over an empty mesh")
        self.mesh = mesh
        tri_pts = mesh.vertices[mesh.triangles]
        self._a, self._b, self._c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
        self._normals = mesh.face_normals
        m = mesh.n_triangles
        order = np.argsort(_morton(tri_pts.mean(axis=1)), kind="stable")
        n_leaves = 1
        while n_leaves * LEAF_SIZE < m:
            n_leaves *= 2
        self.depth = int(np.log2(n_leaves))
        slots = np.full(n_leaves * LEAF_SIZE, -1, np.int64)
        slots[:m] = order
        self.leaf_tris = slots.reshape(n_leaves, LEAF_SIZE)

        tlo, thi = tri_pts.min(axis=1), tri_pts.max(axis=1)
        pad = _BOX_PAD * (1.0 + np.maximum(np.abs(tlo), np.abs(thi)))
        tlo, thi = tlo - pad, thi + pad
        valid = self.leaf_tris >= 0
        safe = np.where(valid, self.leaf_tris, 0)
        llo = np.where(valid[..., None], tlo[safe], np.inf).min(axis=1)
        lhi = np.where(valid[..., None], thi[safe], -np.inf).max(axis=1)
        n_nodes = 2 * n_leaves - 1
        lo = np.empty((n_nodes, 3))
        hi = np.empty((n_nodes, 3))
        lo[n_leaves - 1:] = llo
        hi[n_leaves - 1:] = lhi
        for d in range(self.depth - 1, -1, -1):
            s = np.arange(2**d - 1, 2 ** (d + 1) - 1)
            lo[s] = np.minimum(lo[2 * s + 1], lo[2 * s + 2])
            hi[s] = np.maximum(hi[2 * s + 1], hi[2 * s + 2])
        self.node_lo, self.node_hi = lo, hi
        self.n_leaves = n_leaves
        self._centroids = cKDTree(tri_pts.mean(axis=1))

    # ray queries --------------------------------------------------------------

    def _ray_box(self, o, d, tmax, nodes):
        lo, hi = self.node_lo[nodes], self.node_hi[nodes]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
        par = d == 0
        inside = (o >= lo) & (o <= hi)
        tn = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        tf = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        tnear = np.maximum(tn.max(axis=1), 0.0)
        tfar = np.minimum(tf.min(axis=1), tmax)
        return tnear <= tfar

    def _candidate_pairs_rays(self, orig, dirs, tmax):
        q = np.arange(len(orig))
        nodes = np.zeros(len(orig), np.int64)
        for _ in range(self.depth + 1):
            keep = self._ray_box(orig[q], dirs[q], tmax[q], nodes)
            q, nodes = q[keep], nodes[keep]
            if _ == self.depth:
                break
            q = np.repeat(q, 2)
            nodes = (2 * np.repeat(nodes, 2) + 1) + np.tile([0, 1], len(nodes))
        leaf = nodes - (self.n_leaves - 1)
        tris = self.leaf_tris[leaf].reshape(-1)
        q = np.repeat(q, LEAF_SIZE)
        ok = tris >= 0
        return q[ok], tris[ok]

    def intersect_pairs(self, orig, dirs, tmax, ray_ids, tris):
        """Run the watertight kernel on explicit (ray, triangle) candidates.

        Returns deduplicated hits sorted by (ray, t, triangle) as a tuple of
        arrays ``(ray_ids, t, tri_ids, normals)``.
        """
        hit, t, mb = watertight_intersect(orig[ray_ids], dirs[ray_ids],
                                          self._a[tris], self._b[tris], self._c[tris], tmax[ray_ids])
        r, t, tr, mb = ray_ids[hit], t[hit], tris[hit], mb[hit]
        order = np.lexsort((tr, t, r))
        r, t, tr, mb = r[order], t[order], tr[order], mb[order]
        keep = dedupe_hits(r, t, tr, mb)
        r, t, tr = r[keep], t[keep], tr[keep]
        return r, t, tr, self._normals[tr]

    def intersect_rays(self, origins, directions, t_max=None):
        """All hits for a batch of rays; directions are normalized here."""
        orig = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        tmax = np.full(len(orig), np.inf) if t_max is None else np.broadcast_to(
            np.asarray(t_max, dtype=np.float64), (len(orig),)).copy()
        parts = []
        for s in range(0, len(orig), _CHUNK):
            sl = slice(s, s + _CHUNK)
            q, tris = self._candidate_pairs_rays(orig[sl], dirs[sl], tmax[sl])
            r, t, tr, n = self.intersect_pairs(orig[sl], dirs[sl], tmax[sl], q, tris)
            parts.append((r + s, t, tr, n))
        if not parts:
            return np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64), np.zeros((0, 3))
        return tuple(np.concatenate(x) for x in zip(*parts))

    # closest point queries ----------------------------------------------------

    def _box_dists(self, p, nodes):
        lo, hi = self.node_lo[nodes], self.node_hi[nodes]
        dmin = np.maximum(np.maximum(lo - p, p - hi), 0.0)
        dmax = np.maximum(np.abs(p - lo), np.abs(p - hi))
        empty = ~(lo[:, 0] <= hi[:, 0])
        mn = np.where(empty, np.inf, np.einsum("ij,ij->i", dmin, dmin))
        mx = np.where(empty, np.inf, np.einsum("ij,ij->i", dmax, dmax))
        return mn, mx

    @staticmethod
    def _group_min(q, vals, n):
        # q is sorted; per-group minimum broadcast back to pairs
        starts = np.flatnonzero(np.concatenate([[True], q[1:] != q[:-1]]))
        mins = np.minimum.reduceat(vals, starts)
        counts = np.diff(np.append(starts, len(q)))
        return np.repeat(mins, counts)

    def _closest_chunk(self, pts):
        n = len(pts)
        # seed each query's bound with the triangle whose centroid is nearest
        _, guess = self._centroids.query(pts)
        foot = point_triangle_closest(pts, self._a[guess], self._b[guess], self._c[guess])
        seed = np.einsum("ij,ij->i", foot - pts, foot - pts)
        q = np.arange(n)
        nodes = np.zeros(n, np.int64)
        for level in range(self.depth + 1):
            mn, mx = self._box_dists(pts[q], nodes)
            ub = np.minimum(self._group_min(q, mx, n), seed[q])
            keep = mn <= ub * (1 + 1e-12)
            q, nodes = q[keep], nodes[keep]
            if level == self.depth:
                break
            q = np.repeat(q, 2)
            nodes = (2 * np.repeat(nodes, 2) + 1) + np.tile([0, 1], len(nodes))
        tris = self.leaf_tris[nodes - (self.n_leaves - 1)].reshape(-1)
        q = np.repeat(q, LEAF_SIZE)
        ok = tris >= 0
        q, tris = q[ok], tris[ok]
        foot = point_triangle_closest(pts[q], self._a[tris], self._b[tris], self._c[tris])
        diff = foot - pts[q]
        d2 = np.einsum("ij,ij->i", diff, diff)
        # q is sorted: per query, minimal d2 then lowest triangle id
        starts = np.flatnonzero(np.concatenate([[True], q[1:] != q[:-1]]))
        counts = np.diff(np.append(starts, len(q)))
        best = np.repeat(np.minimum.reduceat(d2, starts), counts)
        cand = np.where(d2 == best, tris, np.iinfo(np.int64).max)
        pick = np.repeat(np.minimum.reduceat(cand, starts), counts)
        sel = np.flatnonzero((tris == pick) & (d2 == best))
        sel = sel[np.concatenate([[True], q[sel][1:] != q[sel][:-1]])]
        return np.sqrt(d2[sel]), tris[sel], foot[sel]

    def closest_points(self, points):
        """Exact nearest surface point for each query; ties go to the lowest triangle id.

        Returns ``(distances, triangle_ids, feet)``.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return np.zeros(0), np.zeros(0, np.int64), np.zeros((0, 3))
        parts = [self._closest_chunk(pts[s:s + _CHUNK]) for s in range(0, len(pts), _CHUNK)]
        return tuple(np.concatenate(x) for x in zip(*parts))


def build_bvh(mesh: TriangleMesh) -> BVH:
    return BVH(mesh)


def ray_all_hits(bvh: BVH, ray: Ray) -> list[tuple[float, int, np.ndarray]]:
    """Every crossing of ``ray`` with the mesh as ``(t, triangle_id, face_normal)``, ascending in t."""
    _, t, tri, n = bvh.intersect_rays(ray.origin[None], ray.direction[None], ray.t_max)
    return [(float(ti), int(k), nk) for ti, k, nk in zip(t, tri, n)]


def closest_point(bvh: BVH, p) -> tuple[float, int, np.ndarray]:
    d, tri, foot = bvh.closest_points(np.asarray(p, dtype=np.float64)[None])
    return float(d[0]), int(tri[0]), foot[0]
