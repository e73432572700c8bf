"""Sparse dual-grid representation with directed edges and its binary format.

Voxel ``(i, j, k)`` of an ``N^3`` grid over ``[0, 1]^3`` owns the three grid
edges leaving corner ``(i, j, k)`` towards +X, +Y and +Z. Each record stores a
dual vertex in voxel-local coordinates, one intersect flag and one crossing
direction bit per owned edge, and a split scalar.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

MAGIC = b"FDGD"
VERSION = 1
HEADER = struct.Struct("<4sHHIQ")
RECORD_DTYPE = np.dtype([
    ("index", "<u8"), ("dual", "<f4", (3,)), ("flags", "u1"), ("pad", "u1"), ("split", "<f4"),
])
assert RECORD_DTYPE.itemsize == 26

AXES = ("x", "y", "z")


class FormatError(ValueError):
    """Base class for malformed ``.fdgd`` content."""


class BadMagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ReservedBitError(FormatError):
    pass


class MissingRecordError(KeyError):
    """A quad needs a voxel that has no record."""


def pack_flags(delta, c) -> int:
    """Pack intersect flags into bits 0-2 and direction bits into bits 3-5."""
    b = 0
    for a in range(3):
        if delta[a]:
            b |= 1 << a
            if c[a]:
                b |= 1 << (3 + a)
    return b


def unpack_flags(b: int) -> tuple[tuple[bool, bool, bool], tuple[bool, bool, bool]]:
    if b & 0xC0:
        raise ReservedBitError(f"reserved bits set in flag byte 0x{b:02X}")
    delta = tuple(bool(b >> a & 1) for a in range(3))
    c = tuple(bool(b >> (3 + a) & 1) for a in range(3))
    return delta, c


def pack_flags_array(delta: np.ndarray, c: np.ndarray) -> np.ndarray:
    delta = np.asarray(delta, bool)
    c = np.asarray(c, bool) & delta
    w = np.array([1, 2, 4], np.uint8)
    return ((delta * w).sum(-1) + (c * (w << 3)).sum(-1)).astype(np.uint8)


def unpack_flags_array(b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(b, np.uint8)
    bits = (b[..., None] >> np.arange(6, dtype=np.uint8)) & 1
    return bits[..., :3].astype(bool), bits[..., 3:].astype(bool)


@dataclass(frozen=True)
class VoxelRecord:
    index: tuple[int, int, int]
    dual_vertex: tuple[float, float, float]
    flags: tuple[bool, bool, bool]
    directions: tuple[bool, bool, bool]
    split: float = 0.5


def linear_index(ijk, n: int):
    ijk = np.asarray(ijk, dtype=np.int64)
    return (ijk[..., 2] * n + ijk[..., 1]) * n + ijk[..., 0]


def unravel(lin, n: int) -> np.ndarray:
    lin = np.asarray(lin, dtype=np.int64)
    return np.stack([lin % n, (lin // n) % n, lin // (n * n)], axis=-1)


# Voxel offsets sharing the edge owned by (i, j, k) along each axis, in the
# order that winds counter-clockwise seen from +axis.
_SHARING = {}
for _a in range(3):
    _b, _c = (_a + 1) % 3, (_a + 2) % 3
    offs = []
    for db, dc in ((-1, -1), (0, -1), (0, 0), (-1, 0)):
        o = [0, 0, 0]
        o[_b], o[_c] = db, dc
        offs.append(o)
    _SHARING[_a] = np.array(offs, np.int64)


def sharing_offsets(axis: int) -> np.ndarray:
    """``(4, 3)`` offsets of the voxels around an owned edge, counter-clockwise about +axis."""
    return _SHARING[axis]


class Violation(NamedTuple):
    index: tuple[int, int, int]
    rule: str
    detail: str = ""


class FdgdGrid:
    """Frozen sparse grid; records are kept sorted by linear voxel index."""

    def __init__(self, resolution: int, indices=None, dual_vertices=None, flags=None, split=None):
        if int(resolution) <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = int(resolution)
        n = 0 if indices is None else len(indices)
        idx = np.zeros(0, np.uint64) if indices is None else np.asarray(indices, dtype=np.uint64)
        dual = np.zeros((n, 3), np.float32) if dual_vertices is None else np.asarray(dual_vertices, np.float32)
        fl = np.zeros(n, np.uint8) if flags is None else np.asarray(flags, np.uint8)
        sp = np.full(n, 0.5, np.float32) if split is None else np.asarray(split, np.float32)
        if not (len(dual) == len(fl) == len(sp) == n):
            raise ValueError("record arrays differ in length")
        order = np.argsort(idx, kind="stable")
        if n and np.any(np.diff(idx[order].astype(np.int64)) == 0):
            raise ValueError("duplicate voxel index")
        self.indices = idx[order]
        self.dual_vertices = dual.reshape(n, 3)[order]
        self.flags = fl[order]
        self.split = sp[order]
        for arr in (self.indices, self.dual_vertices, self.flags, self.split):
            arr.setflags(write=False)

    @classmethod
    def from_records(cls, resolution: int, records) -> FdgdGrid:
        records = list(records)
        idx = [int(linear_index(r.index, resolution)) for r in records]
        return cls(
            resolution, idx,
            [r.dual_vertex for r in records],
            [pack_flags(r.flags, r.directions) for r in records],
            [r.split for r in records],
        )

    def __len__(self):
        return len(self.indices)

    def __repr__(self):
        return f"FdgdGrid(resolution={self.resolution}, records={len(self)})"

    def __eq__(self, other):
        if not isinstance(other, FdgdGrid):
            return NotImplemented
        return (self.resolution == other.resolution
                and np.array_equal(self.indices, other.indices)
                and self.dual_vertices.tobytes() == other.dual_vertices.tobytes()
                and np.array_equal(self.flags, other.flags)
                and self.split.tobytes() == other.split.tobytes())

    @property
    def voxel_indices(self) -> np.ndarray:
        return unravel(self.indices.astype(np.int64), self.resolution)

    def record(self, i: int) -> VoxelRecord:
        ijk = tuple(int(x) for x in unravel(int(self.indices[i]), self.resolution))
        delta, c = unpack_flags(int(self.flags[i]))
        return VoxelRecord(ijk, tuple(float(x) for x in self.dual_vertices[i]), delta, c, float(self.split[i]))

    def records(self) -> Iterator[VoxelRecord]:
        return (self.record(i) for i in range(len(self)))

    def lookup(self, lin) -> np.ndarray:
        """Record positions for linear indices; -1 where absent."""
        lin = np.asarray(lin, dtype=np.uint64)
        pos = np.searchsorted(self.indices, lin)
        pos_c = np.minimum(pos, max(len(self) - 1, 0))
        found = (pos < len(self)) & (self.indices[pos_c] == lin) if len(self) else np.zeros(lin.shape, bool)
        return np.where(found, pos_c, -1)

    def world_vertices(self) -> np.ndarray:
        return (self.voxel_indices + self.dual_vertices.astype(np.float64)) / self.resolution

    @property
    def intersected(self) -> np.ndarray:
        return unpack_flags_array(self.flags)[0]

    @property
    def directions(self) -> np.ndarray:
        return unpack_flags_array(self.flags)[1]

    def n_intersected_edges(self) -> int:
        return int(self.intersected.sum())

    def with_flags(self, flags) -> FdgdGrid:
        return FdgdGrid(self.resolution, self.indices, self.dual_vertices, flags, self.split)


def validate(grid: FdgdGrid) -> list[Violation]:
    """Every invariant violation in ``grid``; empty when it is well formed."""
    n = grid.resolution
    out: list[Violation] = []
    if len(grid) == 0:
        return out
    if int(grid.indices.max()) >= n**3:
        for lin in grid.indices[grid.indices >= n**3]:
            out.append(Violation((-1, -1, -1), "index_range", f"linear index {int(lin)} >= {n**3}"))
    ijk = grid.voxel_indices

    def name(i):
        return tuple(int(x) for x in ijk[i])

    dv = grid.dual_vertices
    bad = np.flatnonzero(~np.all((dv >= 0) & (dv <= 1), axis=1))
    out += [Violation(name(i), "dual_vertex_range", f"{dv[i].tolist()}") for i in bad]
    bad = np.flatnonzero(~((grid.split >= 0) & (grid.split <= 1)))
    out += [Violation(name(i), "split_range", f"{float(grid.split[i])}") for i in bad]
    bad = np.flatnonzero(grid.flags & 0xC0)
    out += [Violation(name(i), "reserved_bits", f"0x{int(grid.flags[i]):02X}") for i in bad]
    delta, c = unpack_flags_array(grid.flags)
    bad = np.argwhere(c & ~delta)
    out += [Violation(name(i), "noncanonical_direction", AXES[a]) for i, a in bad]
    for a in range(3):
        owners = np.flatnonzero(delta[:, a])
        if not len(owners):
            continue
        nb = ijk[owners][:, None, :] + sharing_offsets(a)[None]
        inside = np.all((nb >= 0) & (nb < n), axis=2)
        for i in owners[~np.all(inside, axis=1)]:
            out.append(Violation(name(i), "boundary_edge", f"{AXES[a]}-edge leaves the grid"))
        ok = np.all(inside, axis=1)
        lin = linear_index(np.clip(nb, 0, n - 1), n)
        present = grid.lookup(lin) >= 0
        for i in owners[ok & ~np.all(present, axis=1)]:
            out.append(Violation(name(i), "incomplete_quad", f"{AXES[a]}-edge lacks a sharing voxel"))
    return out


def serialize(grid: FdgdGrid, path: str | Path) -> None:
    rec = np.zeros(len(grid), RECORD_DTYPE)
    rec["index"] = grid.indices
    rec["dual"] = grid.dual_vertices
    rec["flags"] = grid.flags
    rec["split"] = grid.split
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, 0, grid.resolution, len(grid)))
        fh.write(rec.tobytes())


def deserialize(path: str | Path) -> FdgdGrid:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated")
    _, version, reserved, resolution, count = HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    if reserved != 0:
        raise FormatError(f"{path}: nonzero reserved header field")
    body = data[HEADER.size:]
    expected = count * RECORD_DTYPE.itemsize
    if len(body) < expected:
        raise TruncatedFileError(f"{path}: expected {count} records, file holds {len(body) // RECORD_DTYPE.itemsize}")
    if len(body) > expected:
        raise FormatError(f"{path}: trailing bytes after records")
    rec = np.frombuffer(body, RECORD_DTYPE, count)
    if np.any(rec["flags"] & 0xC0):
        raise ReservedBitError(f"{path}: reserved flag bits set")
    if np.any(rec["pad"] != 0):
        raise FormatError(f"{path}: nonzero padding byte")
    if count > 1 and np.any(np.diff(rec["index"].astype(np.int64)) <= 0):
        raise FormatError(f"{path}: records not in strictly ascending index order")
    return FdgdGrid(resolution, rec["index"].copy(), rec["dual"].copy(), rec["flags"].copy(), rec["split"].copy())
