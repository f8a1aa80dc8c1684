"""Voxel lattices, the hull repair pipeline, the entrance constraint, and
per-building structural statistics.

Lattices are indexed (x, y, z) with y vertical. Connectivity everywhere is
6-face adjacency.
"""

import base64
import hashlib
import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import LatticeFormatError, ShapeMismatchError


class Material(IntEnum):
    EXTERIOR_AIR = 0
    INTERIOR_AIR = 1
    FLOOR = 2
    WALL = 3
    ROOF = 4


MATERIAL_NAMES = ("exterior_air", "interior_air", "floor", "wall", "roof")
N_MATERIALS = 5
DEFAULT_DIMS = (20, 20, 20)


@dataclass(eq=False)
class BooleanLattice:
    """Dense boolean occupancy grid: the raw hull emitted by a CPPN."""

    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 3:
            raise ShapeMismatchError("(x, y, z)", self.cells.shape, "boolean lattice")

    @classmethod
    def empty(cls, dims=DEFAULT_DIMS):
        return cls(np.zeros(dims, dtype=bool))

    @property
    def dims(self):
        return self.cells.shape

    def filled_count(self) -> int:
        return int(self.cells.sum())

    def copy(self):
        return BooleanLattice(self.cells.copy())

    def __eq__(self, other):
        if not isinstance(other, BooleanLattice):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool(
            np.array_equal(self.cells, other.cells)
        )


@dataclass(eq=False)
class MaterialLattice:
    """Dense grid of the 5 material IDs: the repaired building phenotype."""

    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.ndim != 3:
            raise ShapeMismatchError("(x, y, z)", self.cells.shape, "material lattice")
        if self.cells.size and self.cells.max() >= N_MATERIALS:
            raise LatticeFormatError("cells", f"material id out of range (max {int(self.cells.max())})")

    @classmethod
    def empty(cls, dims=DEFAULT_DIMS):
        return cls(np.zeros(dims, dtype=np.uint8))

    @property
    def dims(self):
        return self.cells.shape

    def solid_mask(self) -> np.ndarray:
        return self.cells >= Material.FLOOR

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.cells.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.cells).tobytes())
        return h.hexdigest()

    def copy(self):
        return MaterialLattice(self.cells.copy())

    def __eq__(self, other):
        if not isinstance(other, MaterialLattice):
            return NotImplemented
        return self.cells.shape == other.cells.shape and bool(
            np.array_equal(self.cells, other.cells)
        )


@dataclass(frozen=True)
class StructuralStats:
    bounding_box: tuple
    symmetry: float
    instability: float
    surface_area: int


def _flood(mask: np.ndarray, seeds_flat: np.ndarray) -> np.ndarray:
    """Cells of boolean `mask` reachable from flat C-order indices `seeds_flat`
    through 6-connected True cells. Returns a boolean grid."""
    X, Y, Z = mask.shape
    flat = mask.ravel()
    visited = np.zeros(flat.shape, dtype=bool)
    seeds_flat = np.asarray(seeds_flat, dtype=np.int64)
    frontier = seeds_flat[flat[seeds_flat]]
    visited[frontier] = True
    sy, sz = Y * Z, Z
    while frontier.size:
        x = frontier // sy
        rem = frontier - x * sy
        y = rem // sz
        z = rem - y * sz
        cand = np.concatenate(
            (
                frontier[x < X - 1] + sy,
                frontier[x > 0] - sy,
                frontier[y < Y - 1] + sz,
                frontier[y > 0] - sz,
                frontier[z < Z - 1] + 1,
                frontier[z > 0] - 1,
            )
        )
        cand = cand[flat[cand] & ~visited[cand]]
        if cand.size == 0:
            break
        cand = np.unique(cand)
        visited[cand] = True
        frontier = cand
    return visited.reshape(mask.shape)


def flood_fill_filter(hull: BooleanLattice) -> BooleanLattice:
    """Remove every filled voxel not 6-connected to a filled voxel at y=0."""
    filled = hull.cells
    ground = np.zeros_like(filled)
    ground[:, 0, :] = filled[:, 0, :]
    seeds = np.flatnonzero(ground.ravel())
    return BooleanLattice(_flood(filled, seeds))


def largest_component(hull: BooleanLattice) -> BooleanLattice:
    """Keep only the 6-connected component with the most voxels.

    Ties go to the component whose lexicographically-lowest (x, y, z) voxel
    is smallest; C-order scanning gives that for free.
    """
    filled = hull.cells
    remaining = filled.copy()
    best = None
    best_count = -1
    flat_remaining = remaining.ravel()
    while True:
        seeds = np.flatnonzero(flat_remaining)
        if seeds.size == 0:
            break
        comp = _flood(filled, seeds[:1])
        count = int(comp.sum())
        if count > best_count:
            best, best_count = comp, count
        flat_remaining &= ~comp.ravel()
    if best is None:
        return BooleanLattice(np.zeros_like(filled))
    return BooleanLattice(best)


def _boundary_mask(dims) -> np.ndarray:
    m = np.zeros(dims, dtype=bool)
    m[0, :, :] = m[-1, :, :] = True
    m[:, 0, :] = m[:, -1, :] = True
    m[:, :, 0] = m[:, :, -1] = True
    return m


def interior_air_mask(filled: np.ndarray) -> np.ndarray:
    """Empty voxels unreachable from the lattice boundary through 6-connected
    empty paths: the enclosed interior."""
    empty = ~filled
    seeds = np.flatnonzero((empty & _boundary_mask(filled.shape)).ravel())
    reachable = _flood(empty, seeds)
    return empty & ~reachable


def assign_materials(hull: BooleanLattice) -> MaterialLattice:
    """Rule-based material assignment, applied in fixed precedence:
    floor (filled, y=0), roof (filled, empty above or top boundary),
    interior air (enclosed empty), exterior air (other empty), wall (rest).
    """
    filled = hull.cells
    mats = np.zeros(filled.shape, dtype=np.uint8)  # EXTERIOR_AIR

    floor = np.zeros_like(filled)
    floor[:, 0, :] = filled[:, 0, :]

    empty_above = np.ones_like(filled)  # top boundary counts as empty above
    empty_above[:, :-1, :] = ~filled[:, 1:, :]
    roof = filled & ~floor & empty_above

    interior = interior_air_mask(filled)
    wall = filled & ~floor & ~roof

    mats[interior] = Material.INTERIOR_AIR
    mats[floor] = Material.FLOOR
    mats[wall] = Material.WALL
    mats[roof] = Material.ROOF
    return MaterialLattice(mats)


def check_entrance(lattice: MaterialLattice) -> bool:
    """Entrance feasibility: some floor voxel f has interior air directly
    above it and, in one of the four horizontal directions, a wall column at
    heights y(f)+1..y(f)+3."""
    m = lattice.cells
    X, Y, Z = m.shape
    floor = m == Material.FLOOR
    wall = m == Material.WALL
    interior = m == Material.INTERIOR_AIR

    def shift_up(a, dy):
        out = np.zeros_like(a)
        if dy < Y:
            out[:, : Y - dy, :] = a[:, dy:, :]
        return out

    interior_above = shift_up(interior, 1)
    wall3 = shift_up(wall, 1) & shift_up(wall, 2) & shift_up(wall, 3)

    side = np.zeros_like(wall3)
    side[:-1, :, :] |= wall3[1:, :, :]  # +x
    side[1:, :, :] |= wall3[:-1, :, :]  # -x
    side[:, :, :-1] |= wall3[:, :, 1:]  # +z
    side[:, :, 1:] |= wall3[:, :, :-1]  # -z

    return bool((floor & interior_above & side).any())


def repair_pipeline(hull: BooleanLattice):
    """flood_fill_filter -> largest_component -> assign_materials ->
    check_entrance. Returns (MaterialLattice, feasible)."""
    grounded = flood_fill_filter(hull)
    main = largest_component(grounded)
    lattice = assign_materials(main)
    return lattice, check_entrance(lattice)


def structural_stats(lattice: MaterialLattice) -> StructuralStats:
    """Bounding box, mirror symmetry, instability and exposed surface area
    of the solid (floor/wall/roof) voxels."""
    solid = lattice.solid_mask()
    n = int(solid.sum())
    if n == 0:
        return StructuralStats((0, 0, 0), 0.0, 0.0, 0)

    idx = np.argwhere(solid)
    lo = idx.min(axis=0)
    hi = idx.max(axis=0)
    bbox = tuple(int(v) for v in (hi - lo + 1))

    # Matched voxels under each mirror plane; pairs x 2 == matched count.
    sym_x = int((solid & solid[::-1, :, :]).sum()) / n
    sym_z = int((solid & solid[:, :, ::-1]).sum()) / n
    symmetry = max(sym_x, sym_z)

    unsupported = int((solid[:, 1:, :] & ~solid[:, :-1, :]).sum())
    instability = unsupported / n

    surface = 0
    neighbor = np.zeros_like(solid)
    for axis in range(3):
        for sign in (1, -1):
            neighbor[:] = False
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if sign == 1:
                dst[axis], src[axis] = slice(None, -1), slice(1, None)
            else:
                dst[axis], src[axis] = slice(1, None), slice(None, -1)
            neighbor[tuple(dst)] = solid[tuple(src)]
            surface += int((solid & ~neighbor).sum())

    return StructuralStats(bbox, symmetry, instability, surface)


def to_onehot(lattice: MaterialLattice) -> np.ndarray:
    """Material lattice -> (5, x, y, z) float32 one-hot channels."""
    ids = np.arange(N_MATERIALS, dtype=np.uint8)[:, None, None, None]
    return (lattice.cells[None, :, :, :] == ids).astype(np.float32)


def from_onehot(onehot: np.ndarray) -> MaterialLattice:
    """(5, x, y, z) channels -> material lattice via per-voxel argmax; ties
    resolve to the lowest material ID."""
    onehot = np.asarray(onehot)
    if onehot.ndim != 4 or onehot.shape[0] != N_MATERIALS:
        raise ShapeMismatchError("(5, x, y, z)", onehot.shape, "one-hot lattice")
    return MaterialLattice(np.argmax(onehot, axis=0).astype(np.uint8))


def lattice_to_dict(lattice: MaterialLattice) -> dict:
    """JSON form: cells are base64 of material-ID bytes, x fastest, then z,
    then y."""
    raw = np.ascontiguousarray(lattice.cells.transpose(1, 2, 0)).tobytes()
    return {
        "dims": [int(d) for d in lattice.dims],
        "materials": list(MATERIAL_NAMES),
        "cells": base64.b64encode(raw).decode("ascii"),
    }


def lattice_from_dict(data: dict) -> MaterialLattice:
    if not isinstance(data, dict):
        raise LatticeFormatError("<root>", "expected a JSON object")
    dims = data.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or not all(isinstance(d, int) and d > 0 for d in dims)
    ):
        raise LatticeFormatError("dims", "expected a list of 3 positive integers")
    materials = data.get("materials")
    if materials != list(MATERIAL_NAMES):
        raise LatticeFormatError("materials", f"expected {list(MATERIAL_NAMES)}")
    cells = data.get("cells")
    if not isinstance(cells, str):
        raise LatticeFormatError("cells", "expected a base64 string")
    try:
        raw = base64.b64decode(cells.encode("ascii"), validate=True)
    except Exception as exc:
        raise LatticeFormatError("cells", f"base64 decode failed: {exc}") from None
    x, y, z = dims
    if len(raw) != x * y * z:
        raise LatticeFormatError("cells", f"expected {x * y * z} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(y, z, x).transpose(2, 0, 1)
    if arr.size and arr.max() >= N_MATERIALS:
        raise LatticeFormatError("cells", "material id out of range")
    return MaterialLattice(arr.copy())


def save_lattice(lattice: MaterialLattice, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(lattice_to_dict(lattice), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_lattice(path) -> MaterialLattice:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LatticeFormatError("<json>", f"line {exc.lineno}: {exc.msg}") from None
    return lattice_from_dict(data)
