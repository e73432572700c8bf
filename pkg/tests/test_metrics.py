import csv
import io
import json

import numpy as np
import pytest

from conftest import grid_square, square, uv_sphere
from fdgd.fixtures import FixtureSpec, Shape, generate
from fdgd.mesh import MeshError, TriangleMesh
from fdgd.metrics import (CSV_HEADER, EvalConfig, MetricsReport, boundary_stats, chamfer_distance, f_score,
                          full_report, genus, nonmanifold_vertex_pct, normal_errors, occupancy, voxel_iou)

CFG = EvalConfig(cd_samples=20_000, normal_samples=5000)


def cube(lo=(0, 0, 0), size=1.0):
    v = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], float) * size + np.asarray(lo)
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    t = [(a, b, c) for a, b, c, d in quads] + [(a, c, d) for a, b, c, d in quads]
    return TriangleMesh(v, t)


def shifted(m, d):
    return TriangleMesh(m.vertices + np.asarray(d, float), m.triangles)


class TestChamferAndF:
    def test_same_seed_self_distance_is_zero(self):
        m = grid_square(0.5, 0.2, 0.8, 4)
        assert chamfer_distance(m, m, EvalConfig(cd_samples=2000, gt_seed=0)) == 0.0

    def test_default_streams_give_small_positive_self_distance(self):
        m = uv_sphere(0.4)
        cd = chamfer_distance(m, m, CFG)
        assert 0 < cd < 0.01

    @pytest.mark.parametrize("d", [0.01, 0.05])
    def test_offset_planes(self, d):
        a = grid_square(0.5, 0.0, 1.0, 4)
        b = shifted(a, (0, 0, d))
        # at 1e5 samples the in-plane sample spacing adds under 5% even for d = 0.01
        assert chamfer_distance(a, b, EvalConfig()) == pytest.approx(d, rel=0.05)

    def test_f_score_offsets(self):
        a = grid_square(0.5, 0.0, 1.0, 4)
        assert f_score(a, shifted(a, (0, 0, 0.06)), CFG) == 0.0
        assert f_score(a, shifted(a, (0, 0, 0.015)), CFG) == 1.0

    def test_f_score_precision_only(self):
        # prediction has an extra far patch: precision ~ 1/2, recall 1
        a = square(0.5, 0.2, 0.8)
        extra = TriangleMesh.concatenate([a, square(0.9, 0.2, 0.8)])
        assert f_score(extra, a, CFG) == pytest.approx(2 * 0.5 / 1.5, abs=0.02)

    def test_symmetric_under_swapped_streams(self):
        a, b = uv_sphere(0.4, segments=(12, 24)), uv_sphere(0.38)
        ab = EvalConfig(cd_samples=5000, seed=3, gt_seed=7)
        ba = EvalConfig(cd_samples=5000, seed=7, gt_seed=3)
        assert chamfer_distance(a, b, ab) == pytest.approx(chamfer_distance(b, a, ba), abs=1e-15)
        assert f_score(a, b, ab) == f_score(b, a, ba)


class TestIoU:
    def test_planes_one_voxel_apart(self):
        a = square(0.5, 0.1, 0.9)
        assert voxel_iou(a, square(0.5 + 1 / 64, 0.1, 0.9)) == 0.0
        assert voxel_iou(a, square(0.5 + 0.3 / 64, 0.1, 0.9)) == 1.0  # same half-open layer

    def test_partial_shift_overlaps(self):
        a = square(0.5 + 0.5 / 64, 0.1, 0.9)
        assert voxel_iou(a, shifted(a, (0.3 / 64, 0, 0))) > 0.5

    def test_disjoint_spheres(self):
        a = uv_sphere(0.2, center=(0.25, 0.25, 0.25), segments=(12, 24))
        b = uv_sphere(0.2, center=(0.75, 0.75, 0.75), segments=(12, 24))
        assert voxel_iou(a, b) == 0.0
        assert voxel_iou(a, a) == 1.0

    def test_occupancy_of_plane_layer(self):
        occ = occupancy(square(0.5, 0.0, 1.0), 8)
        assert len(occ) == 64 and set((occ // 64).tolist()) == {4}

    def test_single_triangle_brute_force(self):
        # compare SAT against dense point sampling of the triangle
        rng = np.random.default_rng(4)
        for _ in range(20):
            v = rng.uniform(0.05, 0.95, (3, 3))
            occ = set(occupancy(TriangleMesh(v, [[0, 1, 2]]), 8).tolist())
            w = rng.dirichlet([1, 1, 1], 20000)
            p = np.floor(w @ v * 8).astype(int)
            sampled = set(((p[:, 2] * 8 + p[:, 1]) * 8 + p[:, 0]).tolist())
            assert sampled <= occ
            assert len(occ - sampled) <= max(2, len(occ) // 5)


class TestNormals:
    def test_identity(self):
        m = uv_sphere(0.4, segments=(12, 24))
        u, o, c = normal_errors(m, m, CFG)
        assert u < 1e-5 and o < 1e-5 and c == 100  # arccos of a rounded 1.0

    def test_all_flipped(self):
        m = uv_sphere(0.4, segments=(12, 24))
        u, o, c, flipped = normal_errors(m.flipped(), m, CFG, return_flip=True)
        assert flipped and c == 100 and o < 1e-5 and u < 1e-5
        u, o, c = normal_errors(m.flipped(), m, EvalConfig(normal_samples=5000, global_flip=False))
        assert c == 0 and o == pytest.approx(180, abs=1e-5) and u < 1e-5

    def test_checkerboard(self):
        m = grid_square(0.5, 0.1, 0.9, 16)
        mask = np.arange(m.n_triangles) % 2 == 0
        u, o, c = normal_errors(m.flipped(mask), m, EvalConfig(normal_samples=20_000))
        assert u < 1e-5
        assert c == pytest.approx(50, abs=1.5)
        assert o == pytest.approx(180 / np.sqrt(2), abs=1.5)  # 127.3

    def test_empty_inputs(self):
        with pytest.raises(MeshError):
            normal_errors(TriangleMesh(), square())
        with pytest.raises(MeshError):
            chamfer_distance(square(), TriangleMesh())


class TestTopology:
    def test_boundary_stats(self):
        assert boundary_stats(square()) == (4, 1)
        assert boundary_stats(uv_sphere()) == (0, 0)
        cyl = generate(FixtureSpec(Shape.OPEN_CYLINDER)).mesh
        assert boundary_stats(cyl) == (256, 2)
        two = TriangleMesh.concatenate([square(0.2), square(0.8)])
        assert boundary_stats(two) == (8, 2)

    def test_genus(self):
        assert genus(uv_sphere()) == 0
        torus = generate(FixtureSpec(Shape.TORUS, (32, 16))).mesh
        assert genus(torus) == 1
        assert genus(TriangleMesh.concatenate([torus, shifted(torus, (2, 0, 0))])) == 2
        assert genus(generate(FixtureSpec(Shape.OPEN_CYLINDER)).mesh) == 0
        assert genus(square()) == 0
        assert genus(cube()) == 0
        assert genus(TriangleMesh()) == 0

    def test_genus_clamp_flag(self):
        assert genus(cube(), return_clamped=True) == (0, False)
        # two closed cubes pinched at one vertex: one component with chi = 3, raw genus -1/2
        a, b = cube(), shifted(cube(), (1, 1, 1))
        verts = np.vstack([a.vertices, b.vertices[1:]])
        remap = np.concatenate([[7], np.arange(8, 15)])
        m = TriangleMesh(verts, np.vstack([a.triangles, remap[b.triangles]]))
        assert m.n_vertices == 15
        assert genus(m, return_clamped=True) == (0, True)

    def test_nonmanifold_fan(self):
        v = [[0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0], [0.5, 0, 1]]
        fan = TriangleMesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
        assert nonmanifold_vertex_pct(fan) == pytest.approx(40.0)

    def test_two_cubes_sharing_an_edge(self):
        a = cube()
        b = shifted(cube(), (1, 1, 0))
        # merge the two coincident vertices of the shared edge x = y = 1
        verts = np.vstack([a.vertices, b.vertices])
        _, inv = np.unique(verts, axis=0, return_inverse=True)
        tris = inv.ravel()[np.vstack([a.triangles, b.triangles + 8])]
        m = TriangleMesh(np.unique(verts, axis=0), tris)
        assert m.n_vertices == 14
        assert nonmanifold_vertex_pct(m) == pytest.approx(100 * 2 / 14)

    def test_manifold_sphere(self):
        assert nonmanifold_vertex_pct(uv_sphere()) == 0.0


class TestReport:
    def test_field_order(self):
        assert CSV_HEADER == ("cd", "f_score", "iou", "rmse_u", "rmse_o", "orient_correct_pct", "n_b", "n_c",
                              "n_g", "tau_v_pct", "seed", "cd_samples", "normal_samples", "f_tau", "iou_res")
        assert MetricsReport.field_names()[:15] == list(CSV_HEADER)

    def test_self_report(self):
        m = uv_sphere(0.4)
        r = full_report(m, m, CFG)
        assert r.f_score == 1.0 and r.iou == 1.0 and r.orient_correct_pct == 100
        assert (r.n_b, r.n_c, r.n_g, r.tau_v_pct) == (0, 0, 0, 0.0)
        rows = list(csv.reader(io.StringIO(r.to_csv())))
        assert tuple(rows[0]) == CSV_HEADER and len(rows[1]) == len(CSV_HEADER)
        d = json.loads(r.to_json())
        assert d["cd_samples"] == 20_000 and d["global_flip_applied"] is False

    def test_report_is_deterministic(self):
        a, b = uv_sphere(0.4, segments=(12, 24)), uv_sphere(0.38)
        assert full_report(a, b, CFG).as_dict() == full_report(a, b, CFG).as_dict()

    def test_bad_config(self):
        with pytest.raises(ValueError):
            EvalConfig(cd_samples=0)
        with pytest.raises(ValueError):
            EvalConfig(f_tau=0)
