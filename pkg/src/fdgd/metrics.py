"""Geometry, normal and topology metrics for a predicted mesh against ground truth.

Angles are in degrees. Normals are face normals of the sampled triangles:
vertex normals are undefined once windings disagree, which is exactly the
situation being measured.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .bvh import build_bvh
from .mesh import MeshError, SurfaceSamples, TriangleMesh, sample_surface

CSV_HEADER = ("cd", "f_score", "iou", "rmse_u", "rmse_o", "orient_correct_pct", "n_b", "n_c", "n_g",
              "tau_v_pct", "seed", "cd_samples", "normal_samples", "f_tau", "iou_res")


@dataclass(frozen=True)
class EvalConfig:
    cd_samples: int = 100_000
    normal_samples: int = 10_000
    f_tau: float = 0.03
    iou_res: int = 64
    seed: int = 0
    global_flip: bool = True
    gt_seed: int | None = None  # defaults to seed + 1

    def __post_init__(self):
        if self.cd_samples <= 0 or self.normal_samples <= 0 or self.iou_res <= 0:
            raise ValueError("sample counts and grid resolution must be positive")
        if not self.f_tau > 0:
            raise ValueError("f_tau must be positive")

    @property
    def gt_stream(self) -> int:
        return self.seed + 1 if self.gt_seed is None else self.gt_seed

    @property
    def normal_stream(self) -> int:
        return self.seed + 2


@dataclass
class MetricsReport:
    cd: float
    f_score: float
    iou: float
    rmse_u: float
    rmse_o: float
    orient_correct_pct: float
    n_b: int
    n_c: int
    n_g: int
    tau_v_pct: float
    seed: int
    cd_samples: int
    normal_samples: int
    f_tau: float
    iou_res: int
    global_flip_applied: bool = False
    genus_clamped: bool = False
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        return d | extra

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=False)

    def csv_row(self) -> list:
        d = self.as_dict()
        return [d[k] for k in CSV_HEADER]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerow(self.csv_row())
        return buf.getvalue()

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "extra"]


def _require(*meshes):
    for m in meshes:
        if m.is_empty():
            raise MeshError("metric undefined for an empty mesh")


# geometry ----------------------------------------------------------------------


def _nn(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return cKDTree(dst).query(src, workers=1)[0]


def chamfer_distance(pred: TriangleMesh, gt: TriangleMesh, cfg: EvalConfig = EvalConfig(),
                     samples: tuple[SurfaceSamples, SurfaceSamples] | None = None) -> float:
    """Symmetric mean of unsquared nearest-sample distances between two sampled surfaces."""
    _require(pred, gt)
    sp, sg = samples or (sample_surface(pred, cfg.cd_samples, cfg.seed),
                         sample_surface(gt, cfg.cd_samples, cfg.gt_stream))
    return 0.5 * (float(_nn(sp.positions, sg.positions).mean()) + float(_nn(sg.positions, sp.positions).mean()))


def _within(points, surface: TriangleMesh, tau, nn_bound=None, bvh=None):
    """Exact test ``dist(point, surface) <= tau``.

    A nearest-sample distance already bounds the surface distance from above,
    so only points failing that bound need an exact closest-point query.
    """
    ok = np.zeros(len(points), bool) if nn_bound is None else nn_bound <= tau
    rest = np.flatnonzero(~ok)
    if len(rest):
        bvh = bvh or build_bvh(surface)
        ok[rest] = bvh.closest_points(points[rest])[0] <= tau
    return ok


def _fscore(precision, recall):
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def f_score(pred: TriangleMesh, gt: TriangleMesh, cfg: EvalConfig = EvalConfig(),
            samples=None, nn=None, bvhs=None) -> float:
    """F-score at ``cfg.f_tau`` from exact point-to-surface distances of surface samples."""
    _require(pred, gt)
    sp, sg = samples or (sample_surface(pred, cfg.cd_samples, cfg.seed),
                         sample_surface(gt, cfg.cd_samples, cfg.gt_stream))
    nn_p, nn_g = nn or (None, None)
    bp, bg = bvhs or (None, None)
    precision = float(_within(sp.positions, gt, cfg.f_tau, nn_p, bg).mean())
    recall = float(_within(sg.positions, pred, cfg.f_tau, nn_g, bp).mean())
    return _fscore(precision, recall)


def _tri_box_overlap(tri: np.ndarray, center: np.ndarray, half: np.ndarray) -> np.ndarray:
    """Separating-axis triangle/AABB overlap test over pairs."""
    v = tri - center[:, None, :]
    e = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], 1)
    ok = np.all((v.min(axis=1) <= half) & (v.max(axis=1) >= -half), axis=1)
    nrm = np.cross(e[:, 0], e[:, 1])
    d = np.einsum("ij,ij->i", nrm, v[:, 0])
    ok &= np.abs(d) <= np.einsum("ij,ij->i", np.abs(nrm), half)
    eye = np.eye(3)
    for i in range(3):
        for j in range(3):
            ax = np.cross(eye[i][None], e[:, j])
            p = np.einsum("ikj,ij->ik", v, ax)
            r = np.einsum("ij,ij->i", np.abs(ax), half)
            ok &= (p.min(axis=1) <= r) & (p.max(axis=1) >= -r)
    return ok


# grid-unit slack: faces are widened by _TOUCH against rounding, and the upper
# face of a non-final voxel pulled in by _HALF_OPEN so it stays open
_TOUCH = 1e-9
_HALF_OPEN = 1e-7


def occupancy(mesh: TriangleMesh, res: int) -> np.ndarray:
    """Sorted linear indices of voxels of a ``res^3`` grid over ``[0, 1]^3`` touched by the surface.

    Voxels are half-open ``[i, i + 1)`` in grid units (the last layer is closed),
    so a surface lying on a grid plane occupies a single layer.
    """
    tri = mesh.vertices[mesh.triangles] * res
    lo = np.clip(np.floor(tri.min(axis=1)), 0, res - 1).astype(np.int64)
    hi = np.clip(np.floor(tri.max(axis=1)), 0, res - 1).astype(np.int64)
    ext = hi - lo + 1
    cnt = ext.prod(axis=1)
    tid = np.repeat(np.arange(len(tri)), cnt)
    local = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    e = ext[tid]
    ijk = lo[tid] + np.stack([local % e[:, 0], (local // e[:, 0]) % e[:, 1], local // (e[:, 0] * e[:, 1])], 1)
    lower = ijk - _TOUCH
    upper = np.where(ijk == res - 1, ijk + 1.0 + _TOUCH, ijk + 1.0 - _HALF_OPEN)
    center = 0.5 * (lower + upper)
    half = 0.5 * (upper - lower)
    hit = _tri_box_overlap(tri[tid], center, half)
    lin = (ijk[hit, 2] * res + ijk[hit, 1]) * res + ijk[hit, 0]
    return np.unique(lin)


def voxel_iou(pred: TriangleMesh, gt: TriangleMesh, cfg: EvalConfig = EvalConfig()) -> float:
    _require(pred, gt)
    a, b = occupancy(pred, cfg.iou_res), occupancy(gt, cfg.iou_res)
    union = len(np.union1d(a, b))
    return len(np.intersect1d(a, b, assume_unique=True)) / union if union else 1.0


# normals -----------------------------------------------------------------------


def _normal_stats(dots: np.ndarray, global_flip: bool):
    dots = np.clip(dots, -1.0, 1.0)
    rmse_u = float(np.sqrt(np.mean(np.degrees(np.arccos(np.abs(dots))) ** 2)))
    correct = 100.0 * float(np.mean(dots > 0))
    flipped = global_flip and correct < 50.0
    if flipped:
        dots = -dots
        correct = 100.0 - correct
    rmse_o = float(np.sqrt(np.mean(np.degrees(np.arccos(dots)) ** 2)))
    return rmse_u, rmse_o, correct, flipped


def normal_errors(pred: TriangleMesh, gt: TriangleMesh, cfg: EvalConfig = EvalConfig(),
                  gt_bvh=None, return_flip: bool = False):
    """``(rmse_u, rmse_o, orient_correct_pct)`` over normal samples on ``pred``.

    Each sample's face normal is compared with the normal of the closest ground
    truth triangle. With ``cfg.global_flip`` all predicted normals are negated
    when that raises the fraction of correctly oriented samples.
    """
    _require(pred, gt)
    s = sample_surface(pred, cfg.normal_samples, cfg.normal_stream)
    bvh = gt_bvh or build_bvh(gt)
    _, tri, _ = bvh.closest_points(s.positions)
    dots = np.einsum("ij,ij->i", s.normals, gt.face_normals[tri])
    rmse_u, rmse_o, correct, flipped = _normal_stats(dots, cfg.global_flip)
    return (rmse_u, rmse_o, correct, flipped) if return_flip else (rmse_u, rmse_o, correct)


# topology ----------------------------------------------------------------------


def _components(n_nodes: int, edges: np.ndarray) -> np.ndarray:
    g = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_nodes, n_nodes))
    return connected_components(g, directed=False)[1]


def boundary_stats(mesh: TriangleMesh) -> tuple[int, int]:
    """``(n_b, n_c)``: boundary edge count and connected groups of boundary edges."""
    be = mesh.boundary_edges
    if not len(be):
        return 0, 0
    labels = _components(mesh.n_vertices, be)
    return len(be), len(np.unique(labels[np.unique(be)]))


def genus(mesh: TriangleMesh, return_clamped: bool = False):
    """Sum over connected components of ``max(0, round((2 - chi - b) / 2))``."""
    if mesh.is_empty():
        return (0, False) if return_clamped else 0
    t = mesh.triangles
    labels = _components(mesh.n_vertices, np.concatenate([t[:, [0, 1]], t[:, [1, 2]]]))
    used = np.unique(t)
    comp_ids = np.unique(labels[used])
    V = np.bincount(labels[used], minlength=labels.max() + 1)
    E = np.bincount(labels[mesh.edges[:, 0]], minlength=labels.max() + 1)
    F = np.bincount(labels[t[:, 0]], minlength=labels.max() + 1)
    B = np.zeros(labels.max() + 1, np.int64)
    be = mesh.boundary_edges
    if len(be):
        bl = _components(mesh.n_vertices, be)
        loops = np.unique(bl[np.unique(be)])
        # each boundary group lies in a single surface component
        first_vertex = {lab: v for v, lab in zip(np.unique(be), bl[np.unique(be)])}
        for lab in loops:
            B[labels[first_vertex[lab]]] += 1
    total, clamped = 0, False
    for c in comp_ids:
        chi = V[c] - E[c] + F[c]
        raw = (2 - chi - B[c]) / 2
        if raw < 0:
            clamped = True
        total += max(0, int(np.floor(raw + 0.5)))
    return (total, clamped) if return_clamped else total


def nonmanifold_vertex_pct(mesh: TriangleMesh) -> float:
    """Percent of vertices touching an edge shared by more than two triangles."""
    if mesh.n_vertices == 0:
        return 0.0
    bad = mesh.edges[mesh.edge_face_counts > 2]
    return 100.0 * len(np.unique(bad)) / mesh.n_vertices


# aggregate ----------------------------------------------------------------------


def full_report(pred: TriangleMesh, gt: TriangleMesh, cfg: EvalConfig = EvalConfig()) -> MetricsReport:
    """All metrics for one (prediction, ground truth) pair; topology is measured on ``pred``."""
    _require(pred, gt)
    sp = sample_surface(pred, cfg.cd_samples, cfg.seed)
    sg = sample_surface(gt, cfg.cd_samples, cfg.gt_stream)
    nn_p = _nn(sp.positions, sg.positions)
    nn_g = _nn(sg.positions, sp.positions)
    cd = 0.5 * (float(nn_p.mean()) + float(nn_g.mean()))
    gt_bvh = build_bvh(gt)
    fs = f_score(pred, gt, cfg, samples=(sp, sg), nn=(nn_p, nn_g), bvhs=(None, gt_bvh))
    iou = voxel_iou(pred, gt, cfg)
    rmse_u, rmse_o, correct, flipped = normal_errors(pred, gt, cfg, gt_bvh=gt_bvh, return_flip=True)
    n_b, n_c = boundary_stats(pred)
    n_g, clamped = genus(pred, return_clamped=True)
    return MetricsReport(
        cd=cd, f_score=fs, iou=iou, rmse_u=rmse_u, rmse_o=rmse_o, orient_correct_pct=correct,
        n_b=n_b, n_c=n_c, n_g=n_g, tau_v_pct=nonmanifold_vertex_pct(pred),
        seed=cfg.seed, cd_samples=cfg.cd_samples, normal_samples=cfg.normal_samples,
        f_tau=cfg.f_tau, iou_res=cfg.iou_res, global_flip_applied=flipped, genus_clamped=clamped,
    )
