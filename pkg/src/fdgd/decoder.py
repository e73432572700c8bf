"""Directed-edge dual grid to triangle mesh reconstruction."""

from __future__ import annotations

import logging
from enum import Enum

import numpy as np

from .grid import FdgdGrid, MissingRecordError, linear_index, sharing_offsets, unpack_flags_array
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)


class WindingMode(str, Enum):
    DIRECTED = "directed"
    AXIS_HARDCODED = "axis"


def _quad_positions(grid: FdgdGrid, owner_ijk: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Record positions of the four voxels around each edge, ``(E, 4)``."""
    off = np.stack([sharing_offsets(a) for a in range(3)])
    nb = owner_ijk[:, None, :] + off[axis]
    n = grid.resolution
    inside = np.all((nb >= 0) & (nb < n), axis=2)
    pos = grid.lookup(linear_index(np.clip(nb, 0, n - 1), n))
    pos = np.where(inside, pos, -1)
    if np.any(pos < 0):
        e = int(np.flatnonzero(np.any(pos < 0, axis=1))[0])
        raise MissingRecordError(
            f"edge {owner_ijk[e].tolist()} axis {'xyz'[axis[e]]}: sharing voxel has no record")
    return pos


def quad_for_edge(grid: FdgdGrid, owner, axis: int) -> np.ndarray:
    """World-space dual vertices ``[v0, v1, v2, v3]`` around one owned edge.

    The order is counter-clockwise seen from +axis, so a planar quad's
    right-hand normal points along +axis.
    """
    pos = _quad_positions(grid, np.asarray(owner, np.int64)[None], np.array([axis]))[0]
    return grid.world_vertices()[pos]


def apply_winding(quad, c_axis: bool, mode: WindingMode | str = WindingMode.DIRECTED):
    """Reorder ``[v0, v1, v2, v3]`` to ``[v0, v3, v2, v1]`` when a directed quad faces -axis."""
    if WindingMode(mode) is WindingMode.DIRECTED and not c_axis:
        return [quad[0], quad[3], quad[2], quad[1]]
    return list(quad)


def split_quad(quad, splits=(0.5, 0.5, 0.5, 0.5)):
    """Two triangles; diagonal (v0, v2) unless ``s1 + s3`` outweighs ``s0 + s2``."""
    v0, v1, v2, v3 = quad
    s0, s1, s2, s3 = splits
    if s0 + s2 >= s1 + s3:
        return [(v0, v1, v2), (v0, v2, v3)]
    return [(v0, v1, v3), (v1, v2, v3)]


def decode_grid(grid: FdgdGrid, mode: WindingMode | str = WindingMode.DIRECTED) -> TriangleMesh:
    """Mesh with one vertex per record and two triangles per intersected edge.

    Vertex positions and the unordered triangle sets do not depend on
    ``mode``; only the index order inside triangles does. Zero-area triangles
    are dropped.
    """
    mode = WindingMode(mode)
    verts = grid.world_vertices()
    if len(grid) == 0:
        return TriangleMesh(verts.reshape(0, 3), np.zeros((0, 3), np.int64))
    delta, c = unpack_flags_array(grid.flags)
    rec, axis = np.nonzero(delta)  # ascending (linear index, axis)
    owner = grid.voxel_indices[rec]
    quad = _quad_positions(grid, owner, axis)

    s = grid.split[quad].astype(np.float64)
    main = s[:, 0] + s[:, 2] >= s[:, 1] + s[:, 3]
    t1 = np.where(main[:, None], quad[:, [0, 1, 2]], quad[:, [0, 1, 3]])
    t2 = np.where(main[:, None], quad[:, [0, 2, 3]], quad[:, [1, 2, 3]])
    if mode is WindingMode.DIRECTED:
        # reversing [v0..v3] to [v0, v3, v2, v1] keeps the diagonal and reverses both triangles
        flip = ~c[rec, axis]
        t1 = np.where(flip[:, None], t1[:, ::-1], t1)
        t2 = np.where(flip[:, None], t2[:, ::-1], t2)
    tris = np.stack([t1, t2], 1).reshape(-1, 3)
    mesh = TriangleMesh(verts, tris)
    keep = mesh.face_areas > 0
    if not keep.all():
        logger.info("dropped %d zero-area triangles", int((~keep).sum()))
        out = TriangleMesh(verts, tris[keep])
        out.dropped_degenerate = int((~keep).sum())
        return out
    return mesh
