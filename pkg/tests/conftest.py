import json

import numpy as np
import pytest

from fdgd.fixtures import FixtureSpec, Shape, generate, generate_corpus
from fdgd.mesh import TriangleMesh, normalize_to_unit_cube


def square(z=0.5, lo=0.0, hi=1.0, flip=False):
    """Axis-aligned square in the plane ``z`` made of two triangles, normal +z unless flipped."""
    v = np.array([[lo, lo, z], [hi, lo, z], [hi, hi, z], [lo, hi, z]], float)
    t = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(v, t[:, ::-1] if flip else t)


def grid_square(z, lo, hi, n):
    """Square tessellated into ``2 n^2`` triangles."""
    xs = np.linspace(lo, hi, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], 1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    t = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return TriangleMesh(v, t)


def uv_sphere(radius=0.4, center=(0.5, 0.5, 0.5), segments=(24, 48)):
    m = generate(FixtureSpec(Shape.SPHERE, segments, {"radius": radius})).mesh
    return TriangleMesh(m.vertices + np.asarray(center), m.triangles)


def moller_trumbore(orig, d, a, b, c, eps=1e-12):
    """Plain double-precision ray/triangle test over all (ray, triangle) pairs; returns (hit, t)."""
    e1, e2 = b - a, c - a
    p = np.cross(d[:, None, :], e2[None])
    det = np.einsum("tk,rtk->rt", e1, p)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = orig[:, None, :] - a[None]
    u = np.einsum("rtk,rtk->rt", s, p) * inv
    q = np.cross(s, e1[None])
    v = np.einsum("rk,rtk->rt", d, q) * inv
    t = np.einsum("tk,rtk->rt", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0)
    return hit, t


def point_triangle_distance_brute(p, a, b, c):
    """Distance from points ``(P, 3)`` to triangles ``(T, 3)``: plane projection or nearest edge."""
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    rel = p[:, None, :] - a[None]
    h = np.einsum("ptk,tk->pt", rel, n)
    proj = p[:, None, :] - h[..., None] * n[None]

    def inside_edge(x, y):
        return np.einsum("ptk,tk->pt", np.cross(y - x, proj - x[None]), n) >= 0

    inside = inside_edge(a, b) & inside_edge(b, c) & inside_edge(c, a)

    def seg(x, y):
        d = y - x
        s = np.clip(np.einsum("ptk,tk->pt", p[:, None, :] - x[None], d) / np.einsum("tk,tk->t", d, d), 0, 1)
        return np.linalg.norm(p[:, None, :] - (x[None] + s[..., None] * d[None]), axis=2)

    edge = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))
    return np.where(inside, np.abs(h), edge)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    generate_corpus(out, seed=0)
    return out


@pytest.fixture(scope="session")
def manifest(corpus_dir):
    return json.loads((corpus_dir / "manifest.json").read_text())


@pytest.fixture(scope="session")
def normalized_fixtures():
    return {s.value: normalize_to_unit_cube(generate(FixtureSpec(s)).mesh, 0.05) for s in Shape}


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(acceptance_log.RESULTS):
            terminalreporter.write_line(acceptance_log.line(k))
