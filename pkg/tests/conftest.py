import numpy as np
import pytest

from voxnox.voxel_core import BooleanLattice, assign_materials


@pytest.fixture
def hollow_box_5():
    """5x5x5 hollow box at the origin of a 20^3 lattice: 1-thick shell,
    3^3 empty core; the canonical entrance-feasible fixture."""
    hull = np.zeros((20, 20, 20), dtype=bool)
    hull[0:5, 0:5, 0:5] = True
    hull[1:4, 1:4, 1:4] = False
    return BooleanLattice(hull)


@pytest.fixture
def hollow_box_materials(hollow_box_5):
    return assign_materials(hollow_box_5)


def random_hull(rng, dims=(8, 8, 8), fill=0.5):
    return BooleanLattice(rng.random(dims) < fill)
