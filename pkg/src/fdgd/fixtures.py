"""Deterministic synthetic meshes with analytic normals and known topology."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .mesh import TriangleMesh, save_obj


class Shape(str, Enum):
    SPHERE = "sphere"
    TORUS = "torus"
    PLANE_PATCH = "plane_patch"
    OPEN_CYLINDER = "open_cylinder"
    WAVY_SHEET = "wavy_sheet"
    HYBRID_SCENE = "hybrid_scene"


@dataclass
class FixtureSpec:
    shape: Shape
    segments: tuple[int, int] | None = None
    params: dict = field(default_factory=dict)


DEFAULT_SEGMENTS = {
    Shape.SPHERE: (64, 128),
    Shape.TORUS: (128, 64),
    Shape.PLANE_PATCH: (64, 64),
    Shape.OPEN_CYLINDER: (128, 32),
    Shape.WAVY_SHEET: (128, 128),
    Shape.HYBRID_SCENE: (128, 128),
}

DEFAULT_PARAMS = {
    Shape.SPHERE: {"radius": 0.5},
    Shape.TORUS: {"major_radius": 0.35, "minor_radius": 0.15},
    Shape.PLANE_PATCH: {"half_width": 0.4},
    Shape.OPEN_CYLINDER: {"radius": 0.3, "height": 0.8},
    Shape.WAVY_SHEET: {"half_width": 0.4, "amplitude": 0.25, "frequency": 3 * np.pi, "phase": 0.7},
    Shape.HYBRID_SCENE: {"half_width": 0.4, "amplitude": 0.25, "frequency": 3 * np.pi, "phase": 0.7,
                         "sphere_radius": 0.2, "sphere_height": 0.5},
}

# (n_c, n_g, components)
EXPECTED_TOPOLOGY = {
    Shape.SPHERE: (0, 0, 1),
    Shape.TORUS: (0, 1, 1),
    Shape.PLANE_PATCH: (1, 0, 1),
    Shape.OPEN_CYLINDER: (2, 0, 1),
    Shape.WAVY_SHEET: (1, 0, 1),
    Shape.HYBRID_SCENE: (1, 0, 2),
}


@dataclass
class Fixture:
    name: str
    mesh: TriangleMesh
    normal_fn: Callable[[np.ndarray], np.ndarray]
    expected_topology: tuple[int, int, int]
    params: dict


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _param_surface(fn, u, v, wrap_u=False, wrap_v=False) -> TriangleMesh:
    """Triangulate ``fn(U, V)`` over a grid; faces wind along dP/du x dP/dv.

    Periodic directions drop the duplicated last column and coincident
    vertices (poles) are welded, so closed surfaces come out watertight.
    """
    if wrap_u:
        u = u[:-1]
    if wrap_v:
        v = v[:-1]
    nu, nv = len(u), len(v)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = fn(U, V).reshape(-1, 3)
    idx = np.arange(nu * nv).reshape(nu, nv)
    iu = np.arange(nu if wrap_u else nu - 1)
    iv = np.arange(nv if wrap_v else nv - 1)
    I, J = np.meshgrid(iu, iv, indexing="ij")
    I1, J1 = (I + 1) % nu, (J + 1) % nv
    p00, p10, p11, p01 = idx[I, J], idx[I1, J], idx[I1, J1], idx[I, J1]
    tris = np.concatenate([
        np.stack([p00, p10, p11], -1).reshape(-1, 3),
        np.stack([p00, p11, p01], -1).reshape(-1, 3),
    ])
    key = np.round(pts, 12)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # keep vertices in first-occurrence order so output is independent of sort details
    rank = np.argsort(np.argsort(first))
    verts = np.empty((len(first), 3))
    verts[rank] = pts[first]
    tris = rank[inverse.reshape(-1)][tris]
    # triangles touching a welded pole collapse by construction
    keep = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    return TriangleMesh(verts, tris[keep])


def _sphere(radius, n_theta, n_phi, center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=np.float64)

    def fn(th, ph):
        return c + radius * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)

    mesh = _param_surface(fn, np.linspace(0, np.pi, n_theta + 1), np.linspace(0, 2 * np.pi, n_phi + 1),
                          wrap_v=True)
    return mesh, lambda p: _unit(np.asarray(p) - c)


def _height_sheet(half, n_x, n_y, height, gradient):
    def fn(x, y):
        return np.stack([x, y, height(x, y)], -1)

    g = np.linspace(-half, half, n_x + 1)
    h = np.linspace(-half, half, n_y + 1)
    mesh = _param_surface(fn, g, h)

    def normal(p):
        p = np.asarray(p)
        gx, gy = gradient(p[..., 0], p[..., 1])
        return _unit(np.stack([-gx, -gy, np.ones_like(gx)], -1))

    return mesh, normal


def _wavy(half, amplitude, frequency, phase, n_x, n_y):
    # the phase keeps the zero set of the wave off grid lines after normalization
    def height(x, y):
        return amplitude * np.sin(frequency * x + phase) * np.sin(frequency * y + phase)

    def gradient(x, y):
        sx, cx = np.sin(frequency * x + phase), np.cos(frequency * x + phase)
        sy, cy = np.sin(frequency * y + phase), np.cos(frequency * y + phase)
        return amplitude * frequency * cx * sy, amplitude * frequency * sx * cy

    return _height_sheet(half, n_x, n_y, height, gradient)


def _check(spec: FixtureSpec) -> tuple[tuple[int, int], dict]:
    shape = Shape(spec.shape)
    segs = tuple(spec.segments or DEFAULT_SEGMENTS[shape])
    params = {**DEFAULT_PARAMS[shape], **spec.params}
    unknown = set(params) - set(DEFAULT_PARAMS[shape])
    if unknown:
        raise ValueError(f"unknown parameters for {shape.value}: {sorted(unknown)}")
    if len(segs) != 2 or min(segs) < 3:
        raise ValueError("tessellation needs at least 3 segments per direction")
    if any(not np.isfinite(x) or x <= 0 for x in params.values()):
        raise ValueError("fixture parameters must be positive and finite")
    if shape is Shape.TORUS and params["minor_radius"] >= params["major_radius"]:
        raise ValueError("torus minor radius must be smaller than its major radius")
    if shape is Shape.HYBRID_SCENE:
        if params["sphere_height"] - params["sphere_radius"] <= params["amplitude"]:
            raise ValueError("hybrid sphere must not touch the sheet")
        if params["sphere_radius"] > params["half_width"]:
            raise ValueError("hybrid sphere wider than the sheet")
    return segs, params


def generate(spec: FixtureSpec) -> Fixture:
    """Build a fixture mesh with consistent outward/upward winding."""
    shape = Shape(spec.shape)
    (s0, s1), p = _check(spec)
    if shape is Shape.SPHERE:
        mesh, normal = _sphere(p["radius"], s0, s1)
    elif shape is Shape.TORUS:
        R, r = p["major_radius"], p["minor_radius"]

        def fn(ph, th):
            ring = R + r * np.cos(th)
            return np.stack([ring * np.cos(ph), ring * np.sin(ph), r * np.sin(th)], -1)

        mesh = _param_surface(fn, np.linspace(0, 2 * np.pi, s0 + 1), np.linspace(0, 2 * np.pi, s1 + 1),
                              wrap_u=True, wrap_v=True)

        def normal(q):
            q = np.asarray(q)
            ring = _unit(np.stack([q[..., 0], q[..., 1], np.zeros_like(q[..., 0])], -1))
            return _unit(q - R * ring)
    elif shape is Shape.PLANE_PATCH:
        mesh, normal = _height_sheet(p["half_width"], s0, s1, lambda x, y: np.zeros_like(x),
                                     lambda x, y: (np.zeros_like(x), np.zeros_like(x)))
    elif shape is Shape.OPEN_CYLINDER:
        rad, hgt = p["radius"], p["height"]

        def fn(ph, z):
            return np.stack([rad * np.cos(ph), rad * np.sin(ph), z], -1)

        # dP/dphi x dP/dz points outward
        mesh = _param_surface(fn, np.linspace(0, 2 * np.pi, s0 + 1), np.linspace(-hgt / 2, hgt / 2, s1 + 1),
                              wrap_u=True)

        def normal(q):
            q = np.asarray(q)
            return _unit(np.stack([q[..., 0], q[..., 1], np.zeros_like(q[..., 0])], -1))
    elif shape is Shape.WAVY_SHEET:
        mesh, normal = _wavy(p["half_width"], p["amplitude"], p["frequency"], p["phase"], s0, s1)
    else:
        sheet, sheet_normal = _wavy(p["half_width"], p["amplitude"], p["frequency"], p["phase"], s0, s1)
        center = (0.0, 0.0, p["sphere_height"])
        ball, ball_normal = _sphere(p["sphere_radius"], max(3, s0 // 2), s1, center)
        mesh = TriangleMesh.concatenate([sheet, ball])
        split = 0.5 * (p["amplitude"] + p["sphere_height"] - p["sphere_radius"])

        def normal(q):
            q = np.asarray(q)
            on_ball = (q[..., 2] > split)[..., None]
            return np.where(on_ball, ball_normal(q), sheet_normal(q))

    return Fixture(shape.value, mesh, normal, EXPECTED_TOPOLOGY[shape], {"segments": [s0, s1], **p})


def generate_corpus(out_dir: str | Path, seed: int = 0) -> list[Path]:
    """Write all default fixtures as OBJ plus ``manifest.json``; returns the OBJ paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"seed": seed, "fixtures": {}}
    paths = []
    for shape in Shape:
        fx = generate(FixtureSpec(shape))
        path = out / f"{fx.name}.obj"
        save_obj(fx.mesh, path)
        paths.append(path)
        n_c, n_g, comps = fx.expected_topology
        manifest["fixtures"][fx.name] = {
            "file": path.name, "n_c": n_c, "n_g": n_g, "components": comps, "params": fx.params,
        }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths
