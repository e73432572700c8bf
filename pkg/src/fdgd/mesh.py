"""Triangle mesh data model, Wavefront OBJ I/O, normalization and surface sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Invalid mesh content or an operation undefined for the given mesh."""


class ObjParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _canonical_order(triangles: np.ndarray):
    """Sorted vertex triples and the sign of the permutation that sorts each row."""
    order = np.argsort(triangles, axis=1, kind="stable")
    srt = np.take_along_axis(triangles, order, axis=1)
    # a 3-permutation is even iff it is a rotation of (0, 1, 2)
    even = (order[:, 0] + 1) % 3 == order[:, 1]
    return srt, np.where(even, 1.0, -1.0)


class TriangleMesh:
    """Indexed triangle mesh; the winding of each triangle defines its orientation.

    Arrays are stored read-only so a mesh can be shared between threads.
    """

    def __init__(self, vertices: ArrayLike | None = None, triangles: ArrayLike | None = None):
        v = np.zeros((0, 3)) if vertices is None else np.asarray(vertices, dtype=np.float64)
        t = np.zeros((0, 3), np.int64) if triangles is None else np.asarray(triangles, dtype=np.int64)
        v = v.reshape(-1, 3).copy()
        t = t.reshape(-1, 3).copy()
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        self.vertices = v
        self.triangles = t
        self.dropped_degenerate = 0

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def is_empty(self) -> bool:
        return self.n_triangles == 0

    @cached_property
    def _canonical(self):
        return _canonical_order(self.triangles)

    @cached_property
    def _canonical_cross(self) -> np.ndarray:
        srt, _ = self._canonical
        a, b, c = (self.vertices[srt[:, i]] for i in range(3))
        return np.cross(b - a, c - b)

    @cached_property
    def face_areas(self) -> np.ndarray:
        # computed on the sorted vertex order so reversing a triangle leaves it bit-identical
        return 0.5 * np.linalg.norm(self._canonical_cross, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals normalize((b - a) x (c - b)); zero for degenerate faces."""
        cross = self._canonical_cross
        norm = np.linalg.norm(cross, axis=1)
        n = np.divide(cross, norm[:, None], out=np.zeros_like(cross), where=norm[:, None] > 0)
        n *= self._canonical[1][:, None]
        n.setflags(write=False)
        return n

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (sorted pairs)."""
        return self._edge_data[0]

    @cached_property
    def edge_face_counts(self) -> np.ndarray:
        return self._edge_data[1]

    @cached_property
    def _edge_data(self):
        if self.is_empty():
            return np.zeros((0, 2), np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
        t = self.triangles
        half = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        half.sort(axis=1)
        edges, inverse, counts = np.unique(half, axis=0, return_inverse=True, return_counts=True)
        return edges, counts, inverse.reshape(-1)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.edge_face_counts == 1]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)] if not self.is_empty() else self.vertices
        if len(used) == 0:
            raise MeshError("empty mesh has no bounds")
        return used.min(axis=0), used.max(axis=0)

    def with_triangles(self, triangles: ArrayLike) -> TriangleMesh:
        return TriangleMesh(self.vertices, triangles)

    def flipped(self, mask: ArrayLike | None = None) -> TriangleMesh:
        """Copy with the winding of masked (default all) faces reversed."""
        t = self.triangles.copy()
        m = slice(None) if mask is None else np.asarray(mask, bool)
        t[m] = t[m][:, ::-1]
        return TriangleMesh(self.vertices, t)

    def cleaned(self) -> TriangleMesh:
        """Drop triangles with repeated indices or zero area."""
        t = self.triangles
        keep = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
        keep &= self.face_areas > 0
        dropped = int((~keep).sum())
        if not dropped:
            return self
        logger.warning("dropped %d degenerate triangles", dropped)
        out = TriangleMesh(self.vertices, t[keep])
        out.dropped_degenerate = self.dropped_degenerate + dropped
        return out

    @classmethod
    def concatenate(cls, meshes) -> TriangleMesh:
        verts, tris, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            offset += m.n_vertices
        return cls(np.concatenate(verts), np.concatenate(tris))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_max: float = np.inf

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("ray direction must be nonzero")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class SurfaceSample:
    position: np.ndarray
    normal: np.ndarray
    triangle_id: int


@dataclass(frozen=True)
class SurfaceSamples:
    """Structure-of-arrays batch of surface samples."""

    positions: np.ndarray
    normals: np.ndarray
    triangle_ids: np.ndarray

    def __len__(self):
        return len(self.triangle_ids)

    def __getitem__(self, i) -> SurfaceSample:
        return SurfaceSample(self.positions[i], self.normals[i], int(self.triangle_ids[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def load_obj(path: str | Path) -> TriangleMesh:
    """Read an ASCII Wavefront OBJ file.

    Only ``v`` and ``f`` records are used; polygons are fan-triangulated as
    ``(v0, vi, vi+1)``. Normals and texture coordinates in the file are ignored.
    Triangles with repeated indices or zero area are dropped.
    """
    vertices, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise ObjParseError("vertex record needs 3 coordinates", lineno)
                try:
                    vertices.append([float(x) for x in rest[:3]])
                except ValueError:
                    raise ObjParseError(f"bad vertex coordinate in {raw.strip()!r}", lineno) from None
            elif tag == "f":
                if len(rest) < 3:
                    raise ObjParseError("face record needs at least 3 vertices", lineno)
                idx = []
                for tok in rest:
                    try:
                        i = int(tok.split("/", 1)[0])
                    except ValueError:
                        raise ObjParseError(f"bad face index {tok!r}", lineno) from None
                    if i <= 0:
                        raise ObjParseError(f"non-positive face index {i} not supported", lineno)
                    if i > len(vertices):
                        raise ObjParseError(f"face index {i} out of range ({len(vertices)} vertices)", lineno)
                    idx.append(i - 1)
                faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    mesh = TriangleMesh(np.array(vertices).reshape(-1, 3), np.array(faces, np.int64).reshape(-1, 3))
    return mesh.cleaned()


def save_obj(mesh: TriangleMesh, path: str | Path) -> None:
    """Write ``v``/``f`` records; shortest round-tripping float text, so reload is exact."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in (mesh.triangles + 1).tolist():
            fh.write(f"f {a} {b} {c}\n")


def normalize_to_unit_cube(mesh: TriangleMesh, margin: float = 0.0) -> TriangleMesh:
    """Uniformly scale and center ``mesh`` so its bounding box fits ``[margin, 1 - margin]^3``."""
    if not 0 <= margin < 0.5:
        raise ValueError("margin must lie in [0, 0.5)")
    if mesh.is_empty():
        raise MeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent == 0:
        raise MeshError("mesh bounding box has zero extent")
    center = 0.5 * (lo + hi)
    scale = (1.0 - 2.0 * margin) / extent
    return TriangleMesh((mesh.vertices - center) * scale + 0.5, mesh.triangles)


def sample_surface(mesh: TriangleMesh, count: int, seed: int) -> SurfaceSamples:
    """Area-uniform random points on the surface.

    Triangle choice and barycentric coordinates come from a PCG64 stream
    seeded with ``seed`` taken modulo 2^64. Barycentrics are taken over the sorted vertex order
    of each face, so reversing windings changes only the returned normals.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    areas = mesh.face_areas
    total = float(areas.sum()) if len(areas) else 0.0
    if total <= 0:
        raise MeshError("mesh has zero surface area")
    rng = np.random.Generator(np.random.PCG64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))
    cdf = np.cumsum(areas)
    tri = np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right")
    tri = np.minimum(tri, len(areas) - 1)
    # zero-area faces occupy empty cdf intervals and are never selected
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    srt, _ = mesh._canonical
    a, b, c = (mesh.vertices[srt[tri, i]] for i in range(3))
    pos = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return SurfaceSamples(pos, mesh.face_normals[tri], tri)
