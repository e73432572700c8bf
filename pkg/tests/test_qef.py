import numpy as np
import pytest

from fdgd.qef import QefParams, accumulate, minimize_box, qef_energy, solve_qef
from qef_oracle import energy, oracle, random_config


def test_coplanar_samples_fix_height_only():
    q = np.array([[0.1, 0.2, 0.3], [0.7, 0.2, 0.3], [0.4, 0.9, 0.3], [0.6, 0.6, 0.3]])
    n = np.tile([0.0, 0.0, 1.0], (4, 1))
    v = solve_qef(q, n)
    assert v[2] == pytest.approx(0.3, abs=1e-6)
    np.testing.assert_allclose(v[:2], q[:, :2].mean(axis=0), atol=1e-9)


def test_three_orthogonal_planes_meet_at_corner():
    target = np.array([0.2, 0.7, 0.4])
    # each plane crosses the four voxel edges parallel to its normal
    corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
    q, n = [], []
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        for cb, cc in corners:
            p = np.zeros(3)
            p[a], p[b], p[c] = target[a], cb, cc
            q.append(p)
            n.append(np.eye(3)[a])
    q, n = np.array(q), np.array(n)
    lam = QefParams().lambda_reg
    v = solve_qef(q, n)
    # closed form per axis: 4 plane samples against the centroid pull
    np.testing.assert_allclose(v, (4 * target + lam * q.mean(0)) / (4 + lam), atol=1e-12)
    assert np.linalg.norm(v - target) < 5e-3
    # the regularizer bias vanishes as its weight does
    v_small = solve_qef(q, n, params=QefParams(lambda_reg=1e-4))
    assert np.linalg.norm(v_small - target) < 1e-4


def test_no_samples_gives_center():
    assert solve_qef(np.zeros((0, 3)), np.zeros((0, 3))).tolist() == [0.5, 0.5, 0.5]


def test_accumulated_form_equals_direct_energy():
    rng = np.random.default_rng(4)
    p = QefParams()
    for _ in range(50):
        q, n, lines = random_config(rng)
        A, b, c = accumulate(q, n, lines, p)
        v = rng.random((10, 3))
        direct = energy(v, q, n, lines, q.mean(0), p.lambda_bound, p.lambda_reg)
        np.testing.assert_allclose(qef_energy(A[None], b[None], np.array([c]), v), direct, rtol=1e-10, atol=1e-12)


def test_boundary_line_pulls_vertex():
    q = np.array([[0.5, 0.5, 0.5]])
    n = np.array([[0.0, 0.0, 1.0]])
    line = (np.array([0.9, 0.0, 0.5]), np.array([0.9, 1.0, 0.5]))
    free = solve_qef(q, n)
    pulled = solve_qef(q, n, [line])
    assert abs(pulled[0] - 0.9) < abs(free[0] - 0.9)
    assert solve_qef(q, n, [line], params=QefParams(lambda_bound=0.0))[0] == pytest.approx(free[0])


def test_params_validation():
    with pytest.raises(ValueError):
        QefParams(lambda_reg=0.0)
    with pytest.raises(ValueError):
        QefParams(lambda_bound=-1.0)


def test_box_solution_is_exact_on_a_face():
    # unconstrained optimum far outside along x; anisotropic form where clamping is wrong
    A = np.array([[2.0, 1.5, 0.0], [1.5, 2.0, 0.0], [0.0, 0.0, 1.0]])
    vstar = np.array([3.0, -1.0, 0.5])
    b = A @ vstar
    v, outside = minimize_box(A, b, 0.0)
    assert outside[0]
    P = np.stack(np.meshgrid(*[np.linspace(0, 1, 201)] * 3, indexing="ij"), -1).reshape(-1, 3)
    e_grid = qef_energy(A[None], b[None], np.zeros(1), P).min()
    e_sol = qef_energy(A[None], b[None], np.zeros(1), v)[0]
    e_clamp = qef_energy(A[None], b[None], np.zeros(1), np.clip(vstar, 0, 1)[None])[0]
    assert e_sol <= e_grid + 1e-12 < e_clamp


def test_matches_grid_search_oracle():
    rng = np.random.default_rng(12)
    p = QefParams()
    for _ in range(200):
        q, n, lines = random_config(rng)
        v = solve_qef(q, n, lines, params=p)
        assert np.all((v >= 0) & (v <= 1))
        e = energy(v, q, n, lines, q.mean(0), p.lambda_bound, p.lambda_reg)[0]
        assert e <= oracle(q, n, lines, q.mean(0), p.lambda_bound, p.lambda_reg)[1] + p.grid_oracle_tolerance
