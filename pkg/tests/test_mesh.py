import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import square
from fdgd.fixtures import FixtureSpec, Shape, generate
from fdgd.mesh import (MeshError, ObjParseError, Ray, TriangleMesh, load_obj, normalize_to_unit_cube,
                       sample_surface, save_obj)


def write(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestObj:
    def test_single_triangle(self, tmp_path):
        m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
        assert m.n_vertices == 3 and m.triangles.tolist() == [[0, 1, 2]]

    def test_quad_is_fanned(self, tmp_path):
        m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"))
        assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_index_out_of_range(self, tmp_path):
        with pytest.raises(ObjParseError, match="out of range") as err:
            load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"))
        assert err.value.line == 4

    def test_negative_index_rejected(self, tmp_path):
        with pytest.raises(ObjParseError):
            load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 -2 -3\n"))

    def test_malformed_vertex_has_line_number(self, tmp_path):
        with pytest.raises(ObjParseError) as err:
            load_obj(write(tmp_path, "# header\nv 0 0 0\nv 1 zero 0\n"))
        assert err.value.line == 3

    def test_comments_slashes_and_other_records(self, tmp_path):
        text = "# c\nv 0 0 0 # trailing\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/2/1 3//1\n"
        assert load_obj(write(tmp_path, text)).n_triangles == 1

    def test_degenerate_faces_dropped_with_counter(self, tmp_path):
        m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 4\nf 1 2 4\n"))
        assert m.n_triangles == 1 and m.dropped_degenerate == 2

    def test_empty_roundtrip(self, tmp_path):
        p = tmp_path / "e.obj"
        save_obj(TriangleMesh(), p)
        assert p.read_text() == ""
        assert load_obj(p).is_empty()

    def test_fixture_roundtrip_is_exact(self, tmp_path):
        m = generate(FixtureSpec(Shape.TORUS)).mesh
        p = tmp_path / "t.obj"
        save_obj(m, p)
        back = load_obj(p)
        assert back.vertices.tobytes() == m.vertices.tobytes()
        assert np.array_equal(back.triangles, m.triangles)

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            save_obj(square(), tmp_path / "missing" / "x.obj")


class TestTriangleMesh:
    def test_face_normal_matches_cross_product(self):
        rng = np.random.default_rng(3)
        v = rng.random((30, 3))
        t = np.array([rng.choice(30, 3, replace=False) for _ in range(50)])
        m = TriangleMesh(v, t)
        a, b, c = (v[t[:, i]] for i in range(3))
        ref = np.cross(b - a, c - b)
        ref /= np.linalg.norm(ref, axis=1, keepdims=True)
        np.testing.assert_allclose(m.face_normals, ref, atol=1e-6)

    def test_reversed_faces_have_exactly_negated_normals(self):
        m = generate(FixtureSpec(Shape.SPHERE, (8, 16))).mesh
        f = m.flipped()
        assert np.array_equal(f.face_normals, -m.face_normals)
        assert np.array_equal(f.face_areas, m.face_areas)

    def test_index_range_checked(self):
        with pytest.raises(MeshError):
            TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])

    def test_arrays_are_read_only(self):
        m = square()
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 1.0

    def test_edges_of_square(self):
        m = square()
        assert len(m.edges) == 5
        assert sorted(m.edge_face_counts.tolist()) == [1, 1, 1, 1, 2]


class TestNormalize:
    def test_centered_sphere_fills_cube(self):
        m = normalize_to_unit_cube(generate(FixtureSpec(Shape.SPHERE)).mesh)
        lo, hi = m.bounds()
        np.testing.assert_allclose(lo, 0, atol=1e-12)
        np.testing.assert_allclose(hi, 1, atol=1e-12)

    def test_idempotent(self):
        m = normalize_to_unit_cube(generate(FixtureSpec(Shape.TORUS)).mesh, 0.1)
        again = normalize_to_unit_cube(m, 0.1)
        np.testing.assert_allclose(again.vertices, m.vertices, atol=1e-7)

    def test_flat_plane_is_centered(self):
        m = normalize_to_unit_cube(square(z=3.0, lo=-2, hi=2), 0.1)
        lo, hi = m.bounds()
        # scale 0.8 / 4, center (0, 0, 3) -> 0.5
        np.testing.assert_allclose(lo, [0.1, 0.1, 0.5])
        np.testing.assert_allclose(hi, [0.9, 0.9, 0.5])

    def test_aspect_preserved(self):
        v = np.array([[0, 0, 0], [4, 0, 0], [0, 2, 1]], float)
        m = normalize_to_unit_cube(TriangleMesh(v, [[0, 1, 2]]))
        d = m.vertices[1:] - m.vertices[0]
        np.testing.assert_allclose(d, (v[1:] - v[0]) / 4)

    def test_errors(self):
        with pytest.raises(MeshError):
            normalize_to_unit_cube(TriangleMesh())
        with pytest.raises(ValueError):
            normalize_to_unit_cube(square(), 0.5)


class TestSampling:
    def test_area_proportional_counts(self):
        v = np.array([[0, 0, 0], [1, 0, 0], [0, 2, 0], [0, 0, 1], [3, 0, 1], [0, 2, 1]], float)
        m = TriangleMesh(v, [[0, 1, 2], [3, 4, 5]])
        assert m.face_areas.tolist() == [1.0, 3.0]
        for seed in (0, 1, 2**63 + 5, -4):
            n2 = int((sample_surface(m, 40000, seed).triangle_ids == 1).sum())
            assert abs(n2 - 30000) <= 600

    def test_chi_square_uniformity(self):
        m = generate(FixtureSpec(Shape.TORUS, (12, 8))).mesh
        counts = np.bincount(sample_surface(m, 200_000, 11).triangle_ids, minlength=m.n_triangles)
        expected = m.face_areas / m.face_areas.sum() * counts.sum()
        assert chisquare(counts, expected).pvalue > 0.001

    def test_zero_count_and_determinism(self):
        m = square()
        assert len(sample_surface(m, 0, 1)) == 0
        a, b = sample_surface(m, 1000, 9), sample_surface(m, 1000, 9)
        assert a.positions.tobytes() == b.positions.tobytes()
        assert np.array_equal(a.triangle_ids, b.triangle_ids)

    def test_samples_lie_on_their_triangle(self):
        m = generate(FixtureSpec(Shape.SPHERE, (10, 20))).mesh
        s = sample_surface(m, 2000, 5)
        a, b, c = (m.vertices[m.triangles[s.triangle_ids, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        assert np.abs(np.einsum("ij,ij->i", s.positions - a, n)).max() < 1e-6
        np.testing.assert_allclose(np.linalg.norm(s.normals, axis=1), 1, atol=1e-12)
        assert s[0].triangle_id == int(s.triangle_ids[0])

    def test_winding_changes_only_normals(self):
        m = generate(FixtureSpec(Shape.SPHERE, (10, 20))).mesh
        a, b = sample_surface(m, 500, 2), sample_surface(m.flipped(), 500, 2)
        assert a.positions.tobytes() == b.positions.tobytes()
        assert np.array_equal(a.normals, -b.normals)

    def test_zero_area_error(self):
        with pytest.raises(MeshError):
            sample_surface(TriangleMesh(np.zeros((3, 3)), [[0, 1, 2]]), 10, 0)


def test_ray_invariants():
    r = Ray([0, 0, 0], [0, 0, 2], 1.0)
    assert np.isclose(np.linalg.norm(r.direction), 1, atol=1e-9)
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 1], 0.0)
    with pytest.raises(ValueError):
        Ray([0, 0, 0], [0, 0, 0])
