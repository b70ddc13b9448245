"""Procedural LiDAR-like point clouds for tests and statistics.

Rays are cast through a fixed frustum against a closed scene (ground
plane, back wall, a few spheres), so every ray within the default range
returns a hit.  Equal-angle ray sampling against the ground plane makes
the per-meter hit count fall roughly as 1/d^2, mimicking how real scans
thin out with distance.
"""

import numpy as np

from .errors import DomainError
from .grids import PointSet

__all__ = ["synth_lidar"]

# frustum extents, radians: azimuth left/right, elevation up(-)/down(+)
_AZ = np.deg2rad(35.0)
_EL_LO = np.deg2rad(-3.0)
_EL_HI = np.deg2rad(12.0)

_GROUND_Y = 1.6
_WALL_Z = 60.0
_SPHERES = (
    ((-12.0, 0.3, 30.0), 3.0),
    ((10.0, -0.5, 45.0), 4.0),
    ((0.0, 0.5, 22.0), 2.0),
)


def synth_lidar(rays, max_range=80.0, seed=0):
    """Point cloud from ``rays`` pseudo-random frustum rays.

    Deterministic per seed.  Hits beyond max_range are dropped, so the
    returned count can be below ``rays``; with the default range the
    scene is closed and every ray returns.
    """
    if rays < 1:
        raise DomainError("need at least one ray")
    rng = np.random.default_rng(seed)
    az = rng.uniform(-_AZ, _AZ, rays)
    el = rng.uniform(_EL_LO, _EL_HI, rays)
    d = np.column_stack(
        [np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)]
    )

    t = np.full(rays, np.inf)
    # ground plane y = +1.6 (y points down, sensor 1.6 m above ground)
    down = d[:, 1] > 1e-12
    t_ground = np.where(down, _GROUND_Y / np.where(down, d[:, 1], 1.0), np.inf)
    t = np.minimum(t, t_ground)
    # back wall z = const
    t = np.minimum(t, _WALL_Z / d[:, 2])
    for center, radius in _SPHERES:
        c = np.asarray(center)
        b = d @ c
        disc = b**2 - (c @ c - radius**2)
        hit = disc >= 0
        root = b - np.sqrt(np.where(hit, disc, 0.0))
        t_s = np.where(hit & (root > 0), root, np.inf)
        t = np.minimum(t, t_s)

    keep = t <= max_range
    return PointSet(d[keep] * t[keep][:, None])
