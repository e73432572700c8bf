"""Mesh to directed-edge dual grid conversion."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .bvh import BVH, build_bvh
from .grid import FdgdGrid, linear_index, pack_flags_array, sharing_offsets
from .mesh import MeshError, TriangleMesh
from .qef import QefParams, minimize_box

CORNER_SNAP = 1e-7   # grid units; hits this close to a grid corner sit on it
_LINE_SLACK = 1e-6   # grid units added to triangle bounds when picking candidate lines


class DirectionMode(str, Enum):
    EXACT_RAY = "exact-ray"
    VOXEL_NORMAL = "voxel-normal"


class BoundaryEdgeError(MeshError):
    """The mesh crosses a grid edge whose quad would leave the grid."""


@dataclass
class HermiteSample:
    point: np.ndarray
    normal: np.ndarray


@dataclass
class IntersectedEdges:
    """Grid edges crossed by the mesh, sorted by (owner linear index, axis).

    ``point``/``normal``/``t`` describe the first crossing of each edge, with
    ``t`` measured from the edge's start corner in world units. All crossings
    are kept in ``hit_t``/``hit_normal``/``hit_tri`` with ``hit_offsets``
    delimiting each edge's run.
    """

    resolution: int
    owner: np.ndarray
    axis: np.ndarray
    point: np.ndarray
    normal: np.ndarray
    t: np.ndarray
    hit_t: np.ndarray
    hit_normal: np.ndarray
    hit_tri: np.ndarray
    hit_offsets: np.ndarray

    def __len__(self):
        return len(self.axis)

    @property
    def owner_linear(self) -> np.ndarray:
        return linear_index(self.owner, self.resolution)

    @property
    def n_hits(self) -> np.ndarray:
        return np.diff(self.hit_offsets)

    def hits(self, e: int) -> list[tuple[float, int, np.ndarray]]:
        s, t = self.hit_offsets[e], self.hit_offsets[e + 1]
        return [(float(self.hit_t[i]), int(self.hit_tri[i]), self.hit_normal[i]) for i in range(s, t)]


def grid_line_rays(axis: int, n: int):
    """Rays along ``axis`` through every grid line, origin on the domain face at 0.

    Line ``(ib, ic)`` has id ``ib * (n + 1) + ic`` where ``ib``/``ic`` index the
    two other axes in cyclic order.
    """
    b, c = (axis + 1) % 3, (axis + 2) % 3
    ib, ic = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    orig = np.zeros(((n + 1) ** 2, 3))
    orig[:, b] = ib.reshape(-1) / n
    orig[:, c] = ic.reshape(-1) / n
    dirs = np.zeros_like(orig)
    dirs[:, axis] = 1.0
    return orig, dirs


def _line_candidates(mesh: TriangleMesh, axis: int, n: int):
    b, c = (axis + 1) % 3, (axis + 2) % 3
    tri = mesh.vertices[mesh.triangles]
    lo = tri.min(axis=1) * n
    hi = tri.max(axis=1) * n
    b0 = np.clip(np.ceil(lo[:, b] - _LINE_SLACK), 0, n).astype(np.int64)
    b1 = np.clip(np.floor(hi[:, b] + _LINE_SLACK), -1, n).astype(np.int64)
    c0 = np.clip(np.ceil(lo[:, c] - _LINE_SLACK), 0, n).astype(np.int64)
    c1 = np.clip(np.floor(hi[:, c] + _LINE_SLACK), -1, n).astype(np.int64)
    nb = np.maximum(b1 - b0 + 1, 0)
    nc = np.maximum(c1 - c0 + 1, 0)
    cnt = nb * nc
    tris = np.repeat(np.arange(len(tri)), cnt)
    if not len(tris):
        return np.zeros(0, np.int64), tris
    local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    ncr = nc[tris]
    lb = b0[tris] + local // ncr
    lc = c0[tris] + local % ncr
    return lb * (n + 1) + lc, tris


def enumerate_intersected_edges(bvh: BVH, resolution: int) -> IntersectedEdges:
    """Cast every grid line against the mesh and bucket crossings into edges.

    A crossing exactly on a grid corner belongs to the edge ending there. Raises
    :class:`BoundaryEdgeError` if a crossed edge lies on the grid boundary.
    """
    n = int(resolution)
    mesh = bvh.mesh
    parts = []
    for axis in range(3):
        b, c = (axis + 1) % 3, (axis + 2) % 3
        orig, dirs = grid_line_rays(axis, n)
        ray_ids, tris = _line_candidates(mesh, axis, n)
        r, t, tri, nrm = bvh.intersect_pairs(orig, dirs, np.ones(len(orig)), ray_ids, tris)
        g = t * n
        snap = np.round(g)
        corner = np.abs(g - snap) <= CORNER_SNAP
        k = np.where(corner, snap - 1, np.floor(g)).astype(np.int64)
        k = np.maximum(k, 0)
        owner = np.zeros((len(r), 3), np.int64)
        owner[:, axis] = k
        owner[:, b] = r // (n + 1)
        owner[:, c] = r % (n + 1)
        pts = orig[r].copy()
        pts[:, axis] = np.where(corner, snap / n, t)
        parts.append((owner, np.full(len(r), axis), pts, nrm, t - k / n, tri))

    owner, axis, pts, nrm, tloc, tri = (np.concatenate(x) for x in zip(*parts))
    lin = linear_index(np.clip(owner, 0, n - 1), n)
    bad = np.zeros(len(axis), bool)
    for a in range(3):
        m = axis == a
        for other in ((a + 1) % 3, (a + 2) % 3):
            bad[m] |= (owner[m, other] <= 0) | (owner[m, other] >= n)
        bad[m] |= owner[m, a] >= n
    if bad.any():
        raise BoundaryEdgeError(
            f"{int(bad.sum())} crossings on boundary grid edges; normalize with margin >= 1/{n}")
    # per-line hits are already in ascending t, and t order matches edge order
    order = np.lexsort((tloc, axis, lin))
    owner, axis, pts, nrm, tloc, tri, lin = (x[order] for x in (owner, axis, pts, nrm, tloc, tri, lin))
    key = lin * 3 + axis
    first = np.concatenate([[True], key[1:] != key[:-1]]) if len(key) else np.zeros(0, bool)
    starts = np.flatnonzero(first)
    offsets = np.append(starts, len(key))
    return IntersectedEdges(n, owner[starts], axis[starts], pts[starts], nrm[starts], tloc[starts],
                            tloc, nrm, tri, offsets)


def _edge_voxel_pairs(edges: IntersectedEdges):
    """(voxel ijk, edge index) pairs for the four voxels sharing each edge."""
    off = np.stack([sharing_offsets(a) for a in range(3)])  # (3, 4, 3)
    vox = edges.owner[:, None, :] + off[edges.axis]
    eid = np.repeat(np.arange(len(edges)), 4)
    return vox.reshape(-1, 3), eid


def collect_hermite(voxel, edges: IntersectedEdges) -> list[HermiteSample]:
    """Hermite samples on the 12 edges of one voxel (first crossing per edge)."""
    vox, eid = _edge_voxel_pairs(edges)
    sel = eid[np.all(vox == np.asarray(voxel), axis=1)]
    return [HermiteSample(edges.point[e].copy(), edges.normal[e].copy()) for e in sel]


def direction_bit_exact(normal, axis: int) -> bool:
    """Direction of the first crossing: true when its face normal has a nonnegative +axis component."""
    return bool(np.asarray(normal)[..., axis] >= 0)


def direction_bit_voxel_normal(normal_sum, axis: int) -> bool:
    """Sign of the voxel's averaged normal along +axis; a zero sum falls back to true."""
    return bool(np.asarray(normal_sum)[..., axis] >= 0)


def derive_direction_exact(hits, axis: int) -> bool:
    """Direction bit from an edge's hit list ``[(t, tri, normal), ...]`` sorted by t."""
    if not len(hits):
        raise ValueError("edge has no crossings")
    return direction_bit_exact(hits[0][2], axis)


def derive_direction_voxel_normal(avg_normal, axis: int) -> bool:
    """Direction bit from a voxel's averaged (or summed) Hermite normal."""
    return direction_bit_voxel_normal(avg_normal, axis)


def _clip_segments_to_boxes(p0, p1, lo, hi):
    """Liang-Barsky: does each segment touch its closed box."""
    d = p1 - p0
    t0 = np.zeros(len(p0))
    t1 = np.ones(len(p0))
    ok = np.ones(len(p0), bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for a in range(3):
            par = d[:, a] == 0
            ok &= ~par | ((p0[:, a] >= lo[:, a]) & (p0[:, a] <= hi[:, a]))
            ta = (lo[:, a] - p0[:, a]) / d[:, a]
            tb = (hi[:, a] - p0[:, a]) / d[:, a]
            t0 = np.where(par, t0, np.maximum(t0, np.minimum(ta, tb)))
            t1 = np.where(par, t1, np.minimum(t1, np.maximum(ta, tb)))
    return ok & (t0 <= t1)


def boundary_voxel_pairs(mesh: TriangleMesh, n: int):
    """(voxel ijk, segment endpoints) for open-boundary edges crossing each voxel."""
    seg = mesh.boundary_edges
    if not len(seg):
        return np.zeros((0, 3), np.int64), np.zeros((0, 3)), np.zeros((0, 3))
    p0, p1 = mesh.vertices[seg[:, 0]], mesh.vertices[seg[:, 1]]
    # widened so segments lying on a grid plane reach the voxels on both sides
    lo = np.floor(np.minimum(p0, p1) * n - _LINE_SLACK).astype(np.int64)
    hi = np.floor(np.maximum(p0, p1) * n + _LINE_SLACK).astype(np.int64)
    ext = hi - lo + 1
    cnt = ext.prod(axis=1)
    sid = np.repeat(np.arange(len(seg)), cnt)
    local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    e = ext[sid]
    ijk = lo[sid] + np.stack([local % e[:, 0], (local // e[:, 0]) % e[:, 1], local // (e[:, 0] * e[:, 1])], 1)
    keep = _clip_segments_to_boxes(p0[sid], p1[sid], ijk / n, (ijk + 1) / n)
    keep &= np.all((ijk >= 0) & (ijk < n), axis=1)
    return ijk[keep], p0[sid[keep]], p1[sid[keep]]


@dataclass
class EncodeStats:
    active_voxels: int = 0
    intersected_edges: int = 0
    multi_crossing_edges: int = 0
    box_constrained_voxels: int = 0
    boundary_segment_voxels: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k != "extra"} | self.extra


def _bincount3(ids, vals, size):
    return np.stack([np.bincount(ids, vals[:, i], minlength=size) for i in range(vals.shape[1])], 1)


def encode_mesh(mesh: TriangleMesh, resolution: int, mode: DirectionMode | str = DirectionMode.EXACT_RAY,
                params: QefParams = QefParams(), bvh: BVH | None = None,
                stats: EncodeStats | None = None) -> FdgdGrid:
    """Encode a normalized mesh as a directed-edge dual grid.

    The mesh must already lie in ``[1/N, 1 - 1/N]^3`` (see
    :func:`~fdgd.mesh.normalize_to_unit_cube`). Dual vertices depend only on
    geometry; ``mode`` selects how the crossing direction bits are derived.
    When ``stats`` is given it is filled with encode counters.
    """
    mode = DirectionMode(mode)
    n = int(resolution)
    if mesh.is_empty():
        raise MeshError("cannot encode an empty mesh")
    lo, hi = mesh.bounds()
    if lo.min() < 1.0 / n - 1e-12 or hi.max() > 1.0 - 1.0 / n + 1e-12:
        raise BoundaryEdgeError(f"mesh leaves [1/{n}, 1 - 1/{n}]^3; normalize with margin >= 1/{n}")
    bvh = bvh if bvh is not None else build_bvh(mesh)
    edges = enumerate_intersected_edges(bvh, n)
    if stats is not None:
        stats.active_voxels = stats.intersected_edges = stats.multi_crossing_edges = 0
        stats.box_constrained_voxels = stats.boundary_segment_voxels = 0
    if not len(edges):
        return FdgdGrid(n)

    vox, eid = _edge_voxel_pairs(edges)
    vlin = linear_index(vox, n)
    active, vid = np.unique(vlin, return_inverse=True)
    nv = len(active)

    q = edges.point[eid] * n - vox
    nrm = edges.normal[eid]
    nq = np.einsum("ij,ij->i", nrm, q)
    outer = (nrm[:, :, None] * nrm[:, None, :]).reshape(-1, 9)
    A = _bincount3(vid, outer, nv).reshape(nv, 3, 3)
    bvec = _bincount3(vid, nrm * nq[:, None], nv)
    c = np.bincount(vid, nq * nq, minlength=nv)
    count = np.bincount(vid, minlength=nv)
    qbar = _bincount3(vid, q, nv) / count[:, None]
    normal_sum = _bincount3(vid, nrm, nv)

    bvox, bp0, bp1 = boundary_voxel_pairs(mesh, n)
    n_bsv = 0
    if len(bvox) and params.lambda_bound > 0:
        pos = np.searchsorted(active, linear_index(bvox, n))
        pos_c = np.minimum(pos, nv - 1)
        hit = active[pos_c] == linear_index(bvox, n)
        pos, bvox, bp0, bp1 = pos_c[hit], bvox[hit], bp0[hit], bp1[hit]
        d = bp1 - bp0
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        P = np.eye(3)[None] - d[:, :, None] * d[:, None, :]
        p = bp0 * n - bvox
        Pp = np.einsum("kij,kj->ki", P, p)
        lam = params.lambda_bound
        A += lam * _bincount3(pos, P.reshape(-1, 9), nv).reshape(nv, 3, 3)
        bvec += lam * _bincount3(pos, Pp, nv)
        c += lam * np.bincount(pos, np.einsum("ki,ki->k", p, Pp), minlength=nv)
        n_bsv = len(np.unique(pos))

    lr = params.lambda_reg
    A += lr * np.eye(3)[None]
    bvec += lr * qbar
    c += lr * np.einsum("ij,ij->i", qbar, qbar)
    dual, outside = minimize_box(A, bvec, c)

    delta = np.zeros((nv, 3), bool)
    dirs = np.zeros((nv, 3), bool)
    opos = np.searchsorted(active, edges.owner_linear)
    delta[opos, edges.axis] = True
    if mode is DirectionMode.EXACT_RAY:
        bits = edges.normal[np.arange(len(edges)), edges.axis] >= 0
    else:
        bits = normal_sum[opos, edges.axis] >= 0
    dirs[opos, edges.axis] = bits

    if stats is not None:
        stats.active_voxels = nv
        stats.intersected_edges = len(edges)
        stats.multi_crossing_edges = int((edges.n_hits > 1).sum())
        stats.box_constrained_voxels = int(outside.sum())
        stats.boundary_segment_voxels = n_bsv
    return FdgdGrid(n, active.astype(np.uint64), dual.astype(np.float32), pack_flags_array(delta, dirs),
                    np.full(nv, 0.5, np.float32))
