"""Tri-perspective decomposition of point clouds and its inverse.

A cloud is scattered into three 2-D grids: front (row x column, stores
metric depth), top (column x depth-bin, stores the image row), and side
(depth-bin x row, stores the image column).  Storing the coordinate
orthogonal to each view's plane makes the decomposition invertible up to
depth-bin quantization.
"""

import numpy as np

from .errors import DimensionError, DomainError
from .grids import PointSet, project_pixels, select_min_per_cell

__all__ = [
    "ViewGrid",
    "TpvViews",
    "project_tpv",
    "merge_front_view",
    "unproject_tpv",
    "fill_view",
]

# one-hot feature tags attached by unproject_tpv, column order below
SOURCE_FRONT, SOURCE_TOP, SOURCE_SIDE = 0, 1, 2


class ViewGrid:
    """A 2-D value grid plus validity mask; value semantics are per-view."""

    __slots__ = ("values", "mask")

    def __init__(self, values, mask):
        values = np.array(values, dtype=np.float64)
        mask = np.array(mask, dtype=bool)
        if values.ndim != 2 or mask.shape != values.shape:
            raise DimensionError("values and mask must be equal 2-D shapes")
        if not np.all(np.isfinite(values[mask])):
            raise DomainError("valid cells must hold finite values")
        values.flags.writeable = False
        mask.flags.writeable = False
        self.values = values
        self.mask = mask

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_valid(self):
        return int(np.count_nonzero(self.mask))

    @property
    def density(self):
        return self.n_valid / self.mask.size

    @classmethod
    def empty(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape, dtype=bool))


class TpvViews:
    """Front (H x W), top (W x D) and side (D x H) grids of one scene.

    ``dropped`` counts points discarded during the projection that
    produced these views (behind the camera or off the image).
    """

    __slots__ = ("top", "side", "front", "binning", "dropped")

    def __init__(self, top, side, front, binning, dropped=0):
        h, w = front.shape
        d = binning.bins
        if top.shape != (w, d):
            raise DimensionError("top view must be (width, bins)")
        if side.shape != (d, h):
            raise DimensionError("side view must be (bins, height)")
        self.top = top
        self.side = side
        self.front = front
        self.binning = binning
        self.dropped = int(dropped)

    @property
    def height(self):
        return self.front.shape[0]

    @property
    def width(self):
        return self.front.shape[1]

    @classmethod
    def empty(cls, height, width, binning):
        return cls(
            ViewGrid.empty((width, binning.bins)),
            ViewGrid.empty((binning.bins, height)),
            ViewGrid.empty((height, width)),
            binning,
        )


def project_tpv(points, cam, binning):
    """Scatter points into front/top/side grids.

    Each cell keeps the point with the smallest depth that lands in it
    (ties to the lower point index); the three views resolve collisions
    independently.  Points behind the camera or off the image are dropped
    and counted in the result's ``dropped`` attribute.
    """
    views = TpvViews.empty(cam.height, cam.width, binning)
    if points.count == 0:
        return views
    u, v, keep = project_pixels(points.positions, cam)
    idx = np.nonzero(keep)[0]
    dropped = points.count - idx.size
    if idx.size == 0:
        views.dropped = dropped
        return views
    u, v = u[idx], v[idx]
    z = points.positions[idx, 2]
    k = binning.bin_of(z)

    front = np.zeros((cam.height, cam.width))
    front_m = np.zeros_like(front, dtype=bool)
    sel = select_min_per_cell(v * cam.width + u, z, idx)
    front[v[sel], u[sel]] = z[sel]
    front_m[v[sel], u[sel]] = True

    top = np.zeros((cam.width, binning.bins))
    top_m = np.zeros_like(top, dtype=bool)
    sel = select_min_per_cell(u * binning.bins + k, z, idx)
    top[u[sel], k[sel]] = v[sel]
    top_m[u[sel], k[sel]] = True

    side = np.zeros((binning.bins, cam.height))
    side_m = np.zeros_like(side, dtype=bool)
    sel = select_min_per_cell(k * cam.height + v, z, idx)
    side[k[sel], v[sel]] = u[sel]
    side_m[k[sel], v[sel]] = True

    return TpvViews(
        ViewGrid(top, top_m),
        ViewGrid(side, side_m),
        ViewGrid(front, front_m),
        binning,
        dropped=dropped,
    )


def merge_front_view(views, s):
    """Overwrite the front view with s wherever s is valid.

    Valid pixels of s land bit-exactly; everything else, including the
    top and side views, is left untouched.  Idempotent.
    """
    if s.shape != views.front.shape:
        raise DimensionError("sparse map and front view sizes differ")
    values = views.front.values.copy()
    mask = views.front.mask.copy()
    values[s.mask] = s.depth[s.mask]
    mask |= s.mask
    return TpvViews(
        views.top,
        views.side,
        ViewGrid(values, mask),
        views.binning,
        dropped=views.dropped,
    )


def unproject_tpv(views, cam):
    """Lift every valid cell of the three views back to 3-D points.

    Front cells unproject at their stored metric depth; top and side
    cells use their depth bin's center.  Features are a one-hot source
    tag (front, top, side) so downstream aggregation can tell where each
    point came from.  Cells in different views describing the same
    physical point stay separate here; merging is the job of the caller.
    """
    b = views.binning
    chunks = []
    tags = []

    v, u = np.nonzero(views.front.mask)
    z = views.front.values[v, u]
    chunks.append(
        np.column_stack([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z])
    )
    tags.append(np.full(u.size, SOURCE_FRONT))

    u, k = np.nonzero(views.top.mask)
    vs = views.top.values[u, k]
    z = b.center_of(k)
    chunks.append(
        np.column_stack([(u - cam.cx) * z / cam.fx, (vs - cam.cy) * z / cam.fy, z])
    )
    tags.append(np.full(u.size, SOURCE_TOP))

    k, v = np.nonzero(views.side.mask)
    us = views.side.values[k, v]
    z = b.center_of(k)
    chunks.append(
        np.column_stack([(us - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z])
    )
    tags.append(np.full(k.size, SOURCE_SIDE))

    positions = np.concatenate(chunks, axis=0)
    tag = np.concatenate(tags)
    features = np.zeros((tag.size, 3))
    features[np.arange(tag.size), tag] = 1.0
    return PointSet(positions, features=features)


def fill_view(old, values, mask):
    """Fill-only merge: invalid cells of ``old`` take new values.

    Cells already valid keep their values bit-exactly, so repeated fills
    can only grow validity.
    """
    if values.shape != old.shape or mask.shape != old.shape:
        raise DimensionError("fill arrays must match the view shape")
    fill = mask & ~old.mask
    out = old.values.copy()
    out[fill] = values[fill]
    return ViewGrid(out, old.mask | fill)
