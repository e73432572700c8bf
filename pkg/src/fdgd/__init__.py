"""Directed-edge dual grids: orientation-preserving sparse voxel encoding of triangle meshes."""

from .bvh import BVH, build_bvh, closest_point, ray_all_hits
from .decoder import WindingMode, apply_winding, decode_grid, quad_for_edge, split_quad
from .encoder import (
    BoundaryEdgeError, DirectionMode, EncodeStats, HermiteSample, collect_hermite, derive_direction_exact,
    derive_direction_voxel_normal, direction_bit_exact, direction_bit_voxel_normal, encode_mesh, enumerate_intersected_edges,
)
from .estimator import FdgdTransformer
from .fixtures import FixtureSpec, Shape, generate, generate_corpus
from .grid import (
    BadMagicError, FdgdGrid, FormatError, MissingRecordError, ReservedBitError, TruncatedFileError,
    VersionError, Violation, VoxelRecord, deserialize, pack_flags, serialize, unpack_flags, validate,
)
from .mesh import (
    MeshError, ObjParseError, Ray, SurfaceSample, TriangleMesh, load_obj, normalize_to_unit_cube,
    sample_surface, save_obj,
)
from .metrics import (
    EvalConfig, MetricsReport, boundary_stats, chamfer_distance, f_score, full_report, genus,
    nonmanifold_vertex_pct, normal_errors, voxel_iou,
)
from .qef import QefParams, solve_qef

__version__ = "0.1.0"

__all__ = [
    "BVH", "BadMagicError", "BoundaryEdgeError", "DirectionMode", "EncodeStats", "EvalConfig", "FdgdGrid",
    "FdgdTransformer", "FixtureSpec", "FormatError", "HermiteSample", "MeshError", "MetricsReport",
    "MissingRecordError", "ObjParseError", "QefParams", "Ray", "ReservedBitError", "Shape", "SurfaceSample",
    "TriangleMesh", "TruncatedFileError", "VersionError", "Violation", "VoxelRecord", "WindingMode",
    "apply_winding", "boundary_stats", "build_bvh", "chamfer_distance", "closest_point", "collect_hermite",
    "decode_grid", "derive_direction_exact", "derive_direction_voxel_normal", "deserialize",
    "direction_bit_exact", "direction_bit_voxel_normal", "encode_mesh", "enumerate_intersected_edges",
    "f_score", "full_report", "generate", "generate_corpus", "genus", "load_obj", "nonmanifold_vertex_pct",
    "normal_errors", "normalize_to_unit_cube", "pack_flags", "quad_for_edge", "ray_all_hits",
    "sample_surface", "save_obj", "serialize", "solve_qef", "split_quad", "unpack_flags", "validate",
    "voxel_iou",
]
