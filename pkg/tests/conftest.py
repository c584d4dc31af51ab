import math

import numpy as np
import pytest

from needlesteer.environment import Environment
from needlesteer.kinematics import Pose, quat_canonical


def make_env(dims=(24, 24, 24), spacing=1.0, occupancy=None, cost=None,
             needle_radius=0.5, c_min=0.01, c_max=1.0):
    occ = np.zeros(dims, dtype=bool) if occupancy is None else occupancy
    c = np.ones(dims) if cost is None else cost
    c = np.clip(c, c_min, c_max)
    return Environment(origin=np.zeros(3), spacing=spacing, occupancy=occ, cost=c,
                       needle_radius=needle_radius, c_min=c_min, c_max=c_max)


def random_pose(rng, scale=20.0) -> Pose:
    q = rng.normal(size=4)
    return Pose(tuple(rng.uniform(-scale, scale, 3)), quat_canonical(tuple(q / np.linalg.norm(q))))


def sphere_shell(dims, spacing, center, r_inner, r_outer):
    """Boolean grid occupied on a spherical shell (voxel centers)."""
    ax = [(np.arange(d) + 0.5) * spacing for d in dims]
    gx, gy, gz = np.meshgrid(*ax, indexing="ij")
    d2 = (gx - center[0]) ** 2 + (gy - center[1]) ** 2 + (gz - center[2]) ** 2
    return (d2 >= r_inner ** 2) & (d2 <= r_outer ** 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def empty_env():
    return make_env()
