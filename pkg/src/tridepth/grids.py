"""Core data types, camera model, and depth<->point conversions.

Conventions used everywhere in this package: camera frame is x right,
y down, z forward; depths are meters; pixel (u, v) means column u, row v;
validity is an explicit boolean mask, never a sentinel value.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "CameraIntrinsics",
    "SparseDepthMap",
    "PointSet",
    "DepthBinning",
    "round_half_away",
    "depth_to_points",
    "points_to_depth",
]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera intrinsics, all in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError("image size must be at least 1x1")
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError("principal point must lie inside the image")

    @property
    def shape(self):
        """(height, width) of the image grid."""
        return (self.height, self.width)


class SparseDepthMap:
    """H x W metric depth grid with a per-pixel validity mask.

    Invalid cells carry no value; every consumer must consult ``mask``.
    Valid depths are finite and strictly positive.  Instances are
    immutable after construction and safe to share.
    """

    __slots__ = ("depth", "mask")

    def __init__(self, depth, mask):
        depth = np.array(depth, dtype=np.float64)
        mask = np.array(mask, dtype=bool)
        if depth.ndim != 2:
            raise DimensionError("depth must be a 2-D array")
        if mask.shape != depth.shape:
            raise DimensionError("mask shape must match depth shape")
        valid = depth[mask]
        if valid.size and (not np.all(np.isfinite(valid)) or np.any(valid <= 0)):
            raise DomainError("valid depths must be finite and positive")
        depth.flags.writeable = False
        mask.flags.writeable = False
        self.depth = depth
        self.mask = mask

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def shape(self):
        return self.depth.shape

    @property
    def n_valid(self):
        return int(np.count_nonzero(self.mask))

    @property
    def density(self):
        """Fraction of valid pixels, in [0, 1]."""
        return self.n_valid / self.mask.size


class PointSet:
    """N points in the camera frame, with optional per-point features.

    ``positions`` is (N, 3); ``features`` is (N, C) or None; ``pixels``
    optionally records the (u, v) provenance of camera-derived points.
    """

    __slots__ = ("positions", "features", "pixels")

    def __init__(self, positions, features=None, pixels=None):
        positions = np.array(positions, dtype=np.float64)
        if positions.size == 0:
            positions = positions.reshape(0, 3)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise DimensionError("positions must have shape (N, 3)")
        if not np.all(np.isfinite(positions)):
            raise DomainError("point coordinates must be finite")
        n = positions.shape[0]
        if features is not None:
            features = np.array(features, dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != n:
                raise DimensionError("features must have shape (N, C)")
            if not np.all(np.isfinite(features)):
                raise DomainError("point features must be finite")
            features.flags.writeable = False
        if pixels is not None:
            pixels = np.array(pixels, dtype=np.int64)
            if pixels.ndim != 2 or pixels.shape != (n, 2):
                raise DimensionError("pixels must have shape (N, 2)")
            pixels.flags.writeable = False
        positions.flags.writeable = False
        self.positions = positions
        self.features = features
        self.pixels = pixels

    @property
    def count(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class DepthBinning:
    """Uniform discretization of the metric depth axis into ``bins`` bins.

    bin_of(z) = floor((z - d_min) / (d_max - d_min) * bins), clamped to
    [0, bins - 1].  The default covers outdoor ranges; see ``indoor``.
    """

    d_min: float = 0.0
    d_max: float = 80.0
    bins: int = 256

    def __post_init__(self):
        if not 0 <= self.d_min < self.d_max:
            raise DomainError("need 0 <= d_min < d_max")
        if self.bins < 1:
            raise DomainError("need at least one depth bin")

    @classmethod
    def indoor(cls, bins=256):
        return cls(0.0, 10.0, bins)

    @property
    def width(self):
        """Metric width of one bin."""
        return (self.d_max - self.d_min) / self.bins

    def bin_of(self, z):
        """Bin index of depth z, clamped to the valid index range."""
        z = np.asarray(z, dtype=np.float64)
        k = np.floor((z - self.d_min) / (self.d_max - self.d_min) * self.bins)
        return np.clip(k, 0, self.bins - 1).astype(np.int64)

    def center_of(self, k):
        """Metric depth at the midpoint of bin k."""
        return self.d_min + (np.asarray(k, dtype=np.float64) + 0.5) * self.width


def round_half_away(x):
    """Round to the nearest integer with halves away from zero.

    Unlike banker's rounding this is stable across platforms and keeps
    projection deterministic at exact half-pixel boundaries.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def project_pixels(positions, cam):
    """Pixel coordinates for a batch of points.

    Returns integer arrays (u, v) and a keep mask that is False for
    points behind the camera or landing outside the image.
    """
    x, y, z = positions[:, 0], positions[:, 1], positions[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uf = round_half_away(cam.fx * x / z + cam.cx)
        vf = round_half_away(cam.fy * y / z + cam.cy)
    keep = (
        (z > 0)
        & (uf >= 0)
        & (uf < cam.width)
        & (vf >= 0)
        & (vf < cam.height)
    )
    u = np.where(keep, uf, 0).astype(np.int64)
    v = np.where(keep, vf, 0).astype(np.int64)
    return u, v, keep


def select_min_per_cell(cell, z, idx):
    """Indices of the winning entry per cell under the min-depth rule.

    Ties on z resolve to the lower original point index, so parallel or
    re-ordered inputs always produce the same winners.
    """
    order = np.lexsort((idx, z, cell))
    cs = cell[order]
    first = np.ones(cs.size, dtype=bool)
    first[1:] = cs[1:] != cs[:-1]
    return order[first]


def depth_to_points(depth, cam):
    """Back-project every valid pixel through the pinhole model.

    One point per valid pixel, in row-major pixel order, with the source
    (u, v) retained in ``pixels``.
    """
    if depth.shape != cam.shape:
        raise DimensionError("depth map and camera sizes differ")
    v, u = np.nonzero(depth.mask)
    z = depth.depth[v, u]
    x = (u - cam.cx) * z / cam.fx
    y = (v - cam.cy) * z / cam.fy
    return PointSet(
        np.column_stack([x, y, z]),
        pixels=np.column_stack([u, v]),
    )


def points_to_depth(points, cam):
    """Project points onto the pixel grid, keeping the nearest per pixel.

    Points behind the camera or off the grid are dropped silently; the
    operation is lossy by contract.
    """
    depth = np.zeros(cam.shape)
    mask = np.zeros(cam.shape, dtype=bool)
    if points.count:
        u, v, keep = project_pixels(points.positions, cam)
        idx = np.nonzero(keep)[0]
        u, v = u[idx], v[idx]
        z = points.positions[idx, 2]
        sel = select_min_per_cell(v * cam.width + u, z, idx)
        depth[v[sel], u[sel]] = z[sel]
        mask[v[sel], u[sel]] = True
    return SparseDepthMap(depth, mask)
