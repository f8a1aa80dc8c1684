import itertools

import numpy as np
import pytest

from voxnox.errors import LatticeFormatError, ShapeMismatchError
from voxnox.voxel_core import (
    BooleanLattice,
    Material,
    MaterialLattice,
    assign_materials,
    check_entrance,
    flood_fill_filter,
    from_onehot,
    largest_component,
    lattice_from_dict,
    lattice_to_dict,
    load_lattice,
    repair_pipeline,
    save_lattice,
    structural_stats,
    to_onehot,
)

from oracles import (
    oracle_flood_fill,
    oracle_interior_air,
    oracle_largest_component,
    oracle_surface_area,
)


def hull_with(cells):
    h = np.zeros((20, 20, 20), dtype=bool)
    for c in cells:
        h[c] = True
    return BooleanLattice(h)


class TestFloodFill:
    def test_grounded_voxel_survives(self):
        out = flood_fill_filter(hull_with([(5, 0, 5)]))
        assert out.filled_count() == 1
        assert out.cells[5, 0, 5]

    def test_floating_voxel_removed(self):
        out = flood_fill_filter(hull_with([(5, 10, 5)]))
        assert out.filled_count() == 0

    def test_column_attached_through_neighbors(self):
        cells = [(3, y, 3) for y in range(6)]
        out = flood_fill_filter(hull_with(cells))
        assert out.filled_count() == 6

    def test_matches_union_find_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(100):
            hull = BooleanLattice(rng.random((8, 8, 8)) < rng.uniform(0.1, 0.8))
            got = flood_fill_filter(hull)
            assert np.array_equal(got.cells, oracle_flood_fill(hull.cells))

    def test_idempotent(self):
        rng = np.random.default_rng(33)
        for _ in range(50):
            hull = BooleanLattice(rng.random((10, 10, 10)) < 0.5)
            once = flood_fill_filter(hull)
            twice = flood_fill_filter(once)
            assert once == twice


class TestLargestComponent:
    def test_keeps_biggest(self):
        big = [(x, 0, 0) for x in range(10)]
        small = [(0, 0, 5), (0, 0, 6), (0, 0, 7)]
        out = largest_component(hull_with(big + small))
        assert out.filled_count() == 10
        assert out.cells[9, 0, 0] and not out.cells[0, 0, 5]

    def test_empty_is_identity(self):
        out = largest_component(BooleanLattice.empty((6, 6, 6)))
        assert out.filled_count() == 0

    def test_tie_breaks_lexicographically(self):
        a = [(0, 0, 0), (0, 0, 1)]
        b = [(5, 5, 5), (5, 5, 6)]
        out = largest_component(hull_with(a + b))
        assert out.cells[0, 0, 0] and not out.cells[5, 5, 5]

    def test_matches_union_find_oracle(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            hull = BooleanLattice(rng.random((8, 8, 8)) < rng.uniform(0.1, 0.7))
            got = largest_component(hull)
            assert np.array_equal(got.cells, oracle_largest_component(hull.cells))

    def test_output_is_single_component(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            hull = BooleanLattice(rng.random((8, 8, 8)) < 0.4)
            out = largest_component(hull)
            if out.filled_count() == 0:
                continue
            comps = oracle_largest_component(out.cells)
            assert np.array_equal(comps, out.cells)


class TestAssignMaterials:
    def test_solid_cube_rules(self):
        hull = np.zeros((20, 20, 20), dtype=bool)
        hull[0:3, 0:3, 0:3] = True
        mats = assign_materials(BooleanLattice(hull)).cells
        assert (mats[0:3, 0, 0:3] == Material.FLOOR).all()
        assert (mats[0:3, 2, 0:3] == Material.ROOF).all()
        assert (mats[0:3, 1, 0:3] == Material.WALL).all()
        assert mats[1, 1, 1] == Material.WALL  # enclosed but filled stays wall
        assert not (mats == Material.INTERIOR_AIR).any()

    def test_hollow_box_core_is_interior(self):
        hull = np.zeros((20, 20, 20), dtype=bool)
        hull[0:5, 0:4, 0:5] = True
        hull[1:4, 1:3, 1:4] = False
        mats = assign_materials(BooleanLattice(hull)).cells
        assert (mats[1:4, 1:3, 1:4] == Material.INTERIOR_AIR).all()
        assert (mats == Material.INTERIOR_AIR).sum() == 3 * 2 * 3

    def test_top_boundary_counts_as_roof(self):
        hull = np.zeros((4, 4, 4), dtype=bool)
        hull[:, :, :] = True
        mats = assign_materials(BooleanLattice(hull)).cells
        assert (mats[:, 3, :] == Material.ROOF).all()

    def test_interior_matches_bfs_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            hull = BooleanLattice(rng.random((8, 8, 8)) < rng.uniform(0.3, 0.9))
            mats = assign_materials(hull).cells
            interior = mats == Material.INTERIOR_AIR
            assert np.array_equal(interior, oracle_interior_air(hull.cells))

    def test_interior_never_on_boundary(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            hull = BooleanLattice(rng.random((7, 7, 7)) < 0.6)
            mats = assign_materials(hull).cells
            interior = mats == Material.INTERIOR_AIR
            assert not interior[0].any() and not interior[-1].any()
            assert not interior[:, 0].any() and not interior[:, -1].any()
            assert not interior[:, :, 0].any() and not interior[:, :, -1].any()


class TestCheckEntrance:
    def test_hollow_box_true(self, hollow_box_materials):
        assert check_entrance(hollow_box_materials)

    def test_low_slab_false(self):
        hull = np.zeros((20, 20, 20), dtype=bool)
        hull[0:6, 0:2, 0:6] = True
        assert not check_entrance(assign_materials(BooleanLattice(hull)))

    def test_empty_false(self):
        assert not check_entrance(MaterialLattice.empty())

    def test_short_interior_false(self):
        # 4-high hollow box: side walls only reach heights 1..2, never 3.
        hull = np.zeros((20, 20, 20), dtype=bool)
        hull[0:5, 0:4, 0:5] = True
        hull[1:4, 1:3, 1:4] = False
        assert not check_entrance(assign_materials(BooleanLattice(hull)))


class TestRepairPipeline:
    def test_all_filled_infeasible(self):
        hull = BooleanLattice(np.ones((20, 20, 20), dtype=bool))
        lattice, feasible = repair_pipeline(hull)
        assert not feasible
        assert not (lattice.cells == Material.INTERIOR_AIR).any()

    def test_hollow_box_feasible(self, hollow_box_5):
        lattice, feasible = repair_pipeline(hollow_box_5)
        assert feasible

    def test_all_empty_infeasible(self):
        lattice, feasible = repair_pipeline(BooleanLattice.empty())
        assert not feasible
        assert lattice == MaterialLattice.empty()

    def test_never_gains_filled_voxels(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            hull = BooleanLattice(rng.random((10, 10, 10)) < 0.5)
            grounded = flood_fill_filter(hull)
            main = largest_component(grounded)
            assert grounded.filled_count() <= hull.filled_count()
            assert main.filled_count() <= grounded.filled_count()
            lattice, _ = repair_pipeline(hull)
            assert int(lattice.solid_mask().sum()) == main.filled_count()


class TestStructuralStats:
    def test_empty(self):
        s = structural_stats(MaterialLattice.empty())
        assert s.bounding_box == (0, 0, 0)
        assert s.symmetry == 0.0 and s.instability == 0.0 and s.surface_area == 0

    def test_cube_2x2x2(self):
        hull = np.zeros((20, 20, 20), dtype=bool)
        hull[0:2, 0:2, 0:2] = True
        s = structural_stats(assign_materials(BooleanLattice(hull)))
        assert s.bounding_box == (2, 2, 2)
        assert s.surface_area == 24
        assert s.instability == 0.0

    def test_fully_mirrored_solid_has_symmetry_one(self):
        hull = np.zeros((20, 20, 20), dtype=bool)
        hull[2:18, 0:3, 4:7] = True
        s = structural_stats(assign_materials(BooleanLattice(hull)))
        assert s.symmetry == 1.0

    def test_floating_overhang_instability(self):
        cells = np.zeros((20, 20, 20), dtype=np.uint8)
        cells[0, 0, 0] = Material.FLOOR
        cells[0, 1, 0] = Material.WALL
        cells[1, 1, 0] = Material.WALL  # overhangs empty space
        s = structural_stats(MaterialLattice(cells))
        assert s.instability == pytest.approx(1.0 / 3.0)

    def test_surface_matches_bruteforce(self):
        rng = np.random.default_rng(9)
        for _ in range(40):
            cells = rng.integers(0, 5, size=(7, 7, 7)).astype(np.uint8)
            lattice = MaterialLattice(cells)
            s = structural_stats(lattice)
            assert s.surface_area == oracle_surface_area(lattice.solid_mask())


class TestOneHot:
    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            lattice = MaterialLattice(rng.integers(0, 5, size=(6, 6, 6)).astype(np.uint8))
            assert from_onehot(to_onehot(lattice)) == lattice

    def test_round_trip_exhaustive_2x2x2(self):
        # All 5^8 material assignments of a 2x2x2 lattice.
        for combo in itertools.product(range(5), repeat=8):
            cells = np.array(combo, dtype=np.uint8).reshape(2, 2, 2)
            lattice = MaterialLattice(cells)
            assert from_onehot(to_onehot(lattice)) == lattice

    def test_onehot_is_exactly_one_hot(self):
        rng = np.random.default_rng(4)
        lattice = MaterialLattice(rng.integers(0, 5, size=(5, 5, 5)).astype(np.uint8))
        oh = to_onehot(lattice)
        assert oh.shape == (5, 5, 5, 5)
        assert (oh.sum(axis=0) == 1.0).all()
        assert set(np.unique(oh)) <= {0.0, 1.0}

    def test_argmax_tie_breaks_to_lowest_id(self):
        oh = np.full((5, 1, 1, 1), 0.2, dtype=np.float32)
        assert from_onehot(oh).cells[0, 0, 0] == Material.EXTERIOR_AIR

    def test_argmax_picks_max(self):
        oh = np.array([0.1, 0.6, 0.1, 0.1, 0.1], dtype=np.float32).reshape(5, 1, 1, 1)
        assert from_onehot(oh).cells[0, 0, 0] == Material.INTERIOR_AIR

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeMismatchError):
            from_onehot(np.zeros((4, 2, 2, 2)))


class TestLatticeJson:
    def test_round_trip_bit_exact(self, hollow_box_materials):
        data = lattice_to_dict(hollow_box_materials)
        again = lattice_from_dict(data)
        assert again == hollow_box_materials
        assert lattice_to_dict(again) == data

    def test_byte_order_x_fastest(self):
        cells = np.zeros((2, 2, 2), dtype=np.uint8)
        cells[1, 0, 0] = 3  # second byte in x-fastest order
        data = lattice_to_dict(MaterialLattice(cells))
        import base64

        raw = base64.b64decode(data["cells"])
        assert raw[0] == 0 and raw[1] == 3

    def test_file_round_trip(self, tmp_path, hollow_box_materials):
        path = tmp_path / "box.json"
        save_lattice(hollow_box_materials, path)
        assert load_lattice(path) == hollow_box_materials
        save_lattice(load_lattice(path), tmp_path / "box2.json")
        assert (tmp_path / "box.json").read_bytes() == (tmp_path / "box2.json").read_bytes()

    @pytest.mark.parametrize(
        "mutation,field",
        [
            (lambda d: d.pop("dims"), "dims"),
            (lambda d: d.update(dims=[20, 20]), "dims"),
            (lambda d: d.update(materials=["a"]), "materials"),
            (lambda d: d.update(cells="!!!"), "cells"),
            (lambda d: d.update(cells="AAAA"), "cells"),
        ],
    )
    def test_malformed_fields_named(self, hollow_box_materials, mutation, field):
        data = lattice_to_dict(hollow_box_materials)
        mutation(data)
        with pytest.raises(LatticeFormatError) as exc:
            lattice_from_dict(data)
        assert exc.value.field == field
