"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numbers
from pathlib import Path

import numpy as np

from .grid import FdgdGrid, deserialize
from .mesh import MeshError, TriangleMesh, load_obj

MIN_RESOLUTION = 3


def check_resolution(n) -> int:
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        raise TypeError(f"resolution must be an integer, got {type(n).__name__}")
    if n < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}, got {n}")
    return int(n)


def default_margin(n: int) -> float:
    """Smallest safe normalization margin: one voxel, and never below 0.05."""
    return max(0.05, 1.0 / n)


def check_margin(margin, n: int) -> float:
    m = default_margin(n) if margin is None else float(margin)
    if not 1.0 / n <= m < 0.5:
        raise ValueError(f"margin must lie in [1/{n}, 0.5), got {m}")
    return m


def check_mesh(X, allow_empty: bool = False) -> TriangleMesh:
    """Coerce ``X`` to a :class:`TriangleMesh`.

    Accepts a mesh, an OBJ path, or a ``(vertices, triangles)`` pair.
    """
    if isinstance(X, TriangleMesh):
        mesh = X
    elif isinstance(X, (str, Path)):
        mesh = load_obj(X)
    elif isinstance(X, tuple) and len(X) == 2:
        v = np.asarray(X[0], np.float64)
        t = np.asarray(X[1])
        if not np.issubdtype(t.dtype, np.integer):
            raise TypeError("triangle indices must be integers")
        mesh = TriangleMesh(v, t)
    else:
        raise TypeError(f"expected a TriangleMesh, OBJ path or (vertices, triangles), got {type(X).__name__}")
    if not np.all(np.isfinite(mesh.vertices)):
        raise MeshError("mesh has non-finite vertex coordinates")
    if mesh.is_empty() and not allow_empty:
        raise MeshError("mesh has no triangles")
    return mesh


def check_grid(G) -> FdgdGrid:
    if isinstance(G, FdgdGrid):
        return G
    if isinstance(G, (str, Path)):
        return deserialize(G)
    raise TypeError(f"expected an FdgdGrid or .fdgd path, got {type(G).__name__}")


def as_batch(X):
    """``(items, was_single)``; a lone mesh or grid becomes a one-element list."""
    single = isinstance(X, (TriangleMesh, FdgdGrid, str, Path)) or (
        isinstance(X, tuple) and len(X) == 2 and not isinstance(X[0], (TriangleMesh, FdgdGrid)))
    return ([X] if single else list(X)), single
