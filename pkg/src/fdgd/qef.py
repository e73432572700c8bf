"""Quadratic error function for dual vertex placement.

The energy of a point ``v`` inside a voxel is

    sum_i (n_i . (v - q_i))^2 + lambda_bound * sum_j dist(v, L_j)^2 + lambda_reg * |v - q_mean|^2

with ``L_j`` the supporting lines of open-boundary segments crossing the voxel.
It is accumulated as ``v^T A v - 2 b^T v + c`` and minimized over the unit box.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class QefParams:
    lambda_bound: float = 1.0
    lambda_reg: float = 0.05
    grid_oracle_tolerance: float = 1e-6

    def __post_init__(self):
        if self.lambda_bound < 0:
            raise ValueError("lambda_bound must be nonnegative")
        if not self.lambda_reg > 0:
            raise ValueError("lambda_reg must be positive")


# each coordinate free (-1), pinned to 0 or pinned to 1
_PATTERNS = np.array(list(product((-1, 0, 1), repeat=3)), np.int64)


def qef_energy(A, b, c, v):
    """Energy ``v^T A v - 2 b.v + c`` for batches of quadratic forms."""
    Av = np.einsum("...ij,...j->...i", A, v)
    return np.einsum("...i,...i->...", v, Av) - 2 * np.einsum("...i,...i->...", b, v) + c


def minimize_box(A, b, c):
    """Minimizer of each quadratic form over ``[0, 1]^3``.

    Unconstrained optima inside the box are returned directly. Otherwise every
    face of the box (interior, 6 faces, 12 edges, 8 corners) is solved with its
    pinned coordinates fixed, and the feasible candidate of lowest energy wins;
    for a strictly convex form that is the exact constrained optimum.

    Returns ``(v, outside)`` where ``outside`` marks forms whose unconstrained
    optimum left the box.
    """
    A = np.asarray(A, np.float64).reshape(-1, 3, 3)
    b = np.asarray(b, np.float64).reshape(-1, 3)
    c = np.asarray(c, np.float64).reshape(-1)
    v = np.linalg.solve(A, b[..., None])[..., 0]
    outside = ~np.all((v >= 0) & (v <= 1), axis=1)
    idx = np.flatnonzero(outside)
    if len(idx):
        Ao, bo, co = A[idx], b[idx], c[idx]
        k, p = len(idx), len(_PATTERNS)
        M = np.broadcast_to(Ao[:, None], (k, p, 3, 3)).copy()
        r = np.broadcast_to(bo[:, None], (k, p, 3)).copy()
        pinned = _PATTERNS >= 0
        eye = np.eye(3)
        for axis in range(3):
            sel = pinned[:, axis]
            M[:, sel, axis, :] = eye[axis]
            r[:, sel, axis] = _PATTERNS[sel, axis]
        cand = np.linalg.solve(M, r[..., None])[..., 0]
        feasible = np.all((cand >= -1e-12) & (cand <= 1 + 1e-12), axis=2)
        cand = np.clip(cand, 0.0, 1.0)
        e = qef_energy(Ao[:, None], bo[:, None], co[:, None], cand)
        e = np.where(feasible, e, np.inf)
        best = np.argmin(e, axis=1)
        v[idx] = cand[np.arange(k), best]
    return v, outside


def accumulate(points, normals, boundary_lines=(), params: QefParams = QefParams(), centroid=None):
    """Quadratic form of one voxel from local Hermite samples and boundary lines.

    ``boundary_lines`` holds ``(p0, p1)`` segment endpoints; only their
    supporting lines matter.
    """
    q = np.asarray(points, np.float64).reshape(-1, 3)
    n = np.asarray(normals, np.float64).reshape(-1, 3)
    A = np.einsum("ij,ik->jk", n, n)
    nq = np.einsum("ij,ij->i", n, q)
    b = n.T @ nq
    c = float(nq @ nq)
    for p0, p1 in boundary_lines:
        p0 = np.asarray(p0, np.float64)
        d = np.asarray(p1, np.float64) - p0
        d /= np.linalg.norm(d)
        P = np.eye(3) - np.outer(d, d)
        A += params.lambda_bound * P
        b += params.lambda_bound * P @ p0
        c += params.lambda_bound * float(p0 @ P @ p0)
    qbar = q.mean(axis=0) if centroid is None else np.asarray(centroid, np.float64)
    A += params.lambda_reg * np.eye(3)
    b += params.lambda_reg * qbar
    c += params.lambda_reg * float(qbar @ qbar)
    return A, b, c


def solve_qef(points, normals, boundary_lines=(), centroid=None, params: QefParams = QefParams()) -> np.ndarray:
    """Dual vertex in voxel-local coordinates; the voxel center when there are no samples."""
    if len(points) == 0:
        return np.full(3, 0.5)
    A, b, c = accumulate(points, normals, boundary_lines, params, centroid)
    v, _ = minimize_box(A, b, c)
    return v[0]
