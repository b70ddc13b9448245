"""Recurrent 2D-3D-2D fusion: lift views to points, filter, scatter back.

One fusion step unprojects the three views into a point cloud, averages
each point's features over its exact k nearest neighbors, bins the cloud
into the distance-aware spherical grid, optionally filters it there, and
scatters the cell centers back into the views.  Scattered values only
fill cells that are still empty, so validity per view grows
monotonically and already-valid cells keep their values bit-exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .grids import PointSet
from .projection import TpvViews, ViewGrid, fill_view, project_tpv, unproject_tpv
from .spherical import Filter3, SphericalBinning, bin_points, dasc_apply

__all__ = [
    "PointwiseMap",
    "FusionConfig",
    "knn_aggregate",
    "fuse_step",
    "fuse",
    "coarse_heads",
    "conv2d_masked",
]

_BRUTE_LIMIT = 4096


@dataclass(frozen=True)
class PointwiseMap:
    """Per-point feature map: identity, a linear layer, or channel mean."""

    kind: str = "identity"
    weight: np.ndarray = None
    bias: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("identity", "linear", "mean-pool"):
            raise DomainError(f"unknown pointwise map kind: {self.kind!r}")
        if self.kind != "linear":
            if self.weight is not None or self.bias is not None:
                raise DomainError(f"{self.kind} map takes no weights")
            return
        w = np.array(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError("linear map weight must be 2-D (out, in)")
        b = (
            np.zeros(w.shape[0])
            if self.bias is None
            else np.array(self.bias, dtype=np.float64)
        )
        if b.shape != (w.shape[0],):
            raise DimensionError("bias length must match the output channels")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise DomainError("map weights must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def linear(cls, weight, bias=None):
        return cls("linear", weight, bias)

    @classmethod
    def mean_pool(cls):
        return cls("mean-pool")

    def apply(self, features):
        features = np.asarray(features, dtype=np.float64)
        if self.kind == "identity":
            return features
        if self.kind == "mean-pool":
            return features.mean(axis=1, keepdims=True)
        if features.shape[1] != self.weight.shape[1]:
            raise DimensionError("feature width does not match the linear map")
        return features @ self.weight.T + self.bias


@dataclass(frozen=True)
class FusionConfig:
    """Everything one fusion run needs besides the views themselves.

    ``update_*`` are optional 3x3 kernels applied to each re-projected
    view before the fill-merge; None means pass-through.  ``filter3``
    is the optional 3x3x3 spherical-lattice kernel; None skips that
    stage.
    """

    binning: SphericalBinning
    k: int = 9
    steps: int = 4
    point_map: PointwiseMap = PointwiseMap()
    filter3: Filter3 = None
    update_front: np.ndarray = None
    update_top: np.ndarray = None
    update_side: np.ndarray = None

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("k must be at least 1")
        if self.steps < 1:
            raise DomainError("steps must be at least 1")
        for name in ("update_front", "update_top", "update_side"):
            kern = getattr(self, name)
            if kern is None:
                continue
            kern = np.array(kern, dtype=np.float64)
            if kern.shape != (3, 3):
                raise DimensionError(f"{name} must be a 3x3 kernel")
            if not np.all(np.isfinite(kern)):
                raise DomainError(f"{name} weights must be finite")
            kern.flags.writeable = False
            object.__setattr__(self, name, kern)


def _knn_brute(pos, k):
    """All-pairs exact KNN; rows come back in ascending neighbor index."""
    n = pos.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    chunk = max(1, int(2**21) // n)
    for s in range(0, n, chunk):
        d2 = ((pos[s : s + chunk, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1][:, None]
        less = d2 < kth
        short = k - less.sum(axis=1)
        eq_take = (d2 == kth) & (np.cumsum(d2 == kth, axis=1) <= short[:, None])
        sel = less | eq_take
        out[s : s + chunk] = np.nonzero(sel)[1].reshape(-1, k)
    return out


def _knn_tree(pos, k):
    """KD-tree exact KNN with the same (distance, index) tie rule."""
    from scipy.spatial import cKDTree

    tree = cKDTree(pos)
    dist, _ = tree.query(pos, k=k)
    radius = dist[:, -1] * (1 + 1e-9) + 1e-12
    candidates = tree.query_ball_point(pos, radius)
    out = np.empty((pos.shape[0], k), dtype=np.int64)
    for i, cand in enumerate(candidates):
        c = np.sort(np.asarray(cand, dtype=np.int64))
        d2 = ((pos[c] - pos[i]) ** 2).sum(axis=1)
        chosen = c[np.argsort(d2, kind="stable")[:k]]
        chosen.sort()
        out[i] = chosen
    return out


def knn_aggregate(points, k, pmap=PointwiseMap()):
    """Average each point's features over its k nearest neighbors, then map.

    The search is exact Euclidean KNN; a point is its own neighbor, and
    distance ties go to the lower point index.  Positions are unchanged.
    Falls back to point positions when the set carries no features.
    """
    n = points.count
    if n < 1:
        raise DomainError("need at least one point")
    if not 1 <= k <= n:
        raise DomainError("k must satisfy 1 <= k <= N")
    feats = points.features if points.features is not None else points.positions
    neigh = _knn_brute(points.positions, k) if n <= _BRUTE_LIMIT else _knn_tree(
        points.positions, k
    )
    agg = feats[neigh].sum(axis=1) / k
    return PointSet(points.positions, features=pmap.apply(agg), pixels=points.pixels)


def _shift2(a, di, dj):
    src, dst = [], []
    for axis, off in enumerate((di, dj)):
        n = a.shape[axis]
        src.append(slice(max(off, 0), n + min(off, 0)))
        dst.append(slice(max(-off, 0), n + min(-off, 0)))
    out = np.zeros_like(a)
    out[tuple(dst)] = a[tuple(src)]
    return out


def conv2d_masked(values, mask, kernel):
    """3x3 cross-correlation with zero padding, renormalized over valid cells.

    Output cells are valid wherever the kernel gathered nonzero net weight
    from valid inputs; the value there is the weighted average.  A None
    kernel is the identity.  Note validity can grow (cells bordering valid
    ones light up) or, for kernels with cancelling weights, shrink.
    """
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape or values.ndim != 2:
        raise DimensionError("values and mask must be equal 2-D shapes")
    if kernel is None:
        return values.copy(), mask.copy()
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape != (3, 3):
        raise DimensionError("kernel must be 3x3")
    vm = np.where(mask, values, 0.0)
    mf = mask.astype(np.float64)
    num = np.zeros_like(values)
    den = np.zeros_like(values)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            w = kernel[di + 1, dj + 1]
            if w == 0.0:
                continue
            num += w * _shift2(vm, di, dj)
            den += w * _shift2(mf, di, dj)
    new_mask = den != 0
    out = np.where(new_mask, num / np.where(new_mask, den, 1.0), 0.0)
    return out, new_mask


def fuse_step(views, cam, cfg):
    """One 2D -> 3D -> 2D fusion cycle.

    Unproject, aggregate over k nearest neighbors, bin into the spherical
    grid, filter there if configured, then re-project the cell centers
    and fill still-empty cells of each view (after the per-view update
    kernel, if any).  Valid cells are never overwritten, so validity per
    view can only grow.  k is capped at the available point count so tiny
    scenes fuse rather than fail.
    """
    pts = unproject_tpv(views, cam)
    if pts.count == 0:
        return views
    pts = knn_aggregate(pts, min(cfg.k, pts.count), cfg.point_map)
    grid = bin_points(pts, cfg.binning)
    if cfg.filter3 is not None:
        grid = dasc_apply(grid, cfg.filter3)
    if grid.n_cells == 0:
        return views
    reproj = project_tpv(PointSet(grid.cell_centers()), cam, views.binning)
    merged = []
    for new, old, kern in (
        (reproj.top, views.top, cfg.update_top),
        (reproj.side, views.side, cfg.update_side),
        (reproj.front, views.front, cfg.update_front),
    ):
        vals, m = conv2d_masked(new.values, new.mask, kern)
        merged.append(fill_view(old, vals, m))
    top, side, front = merged
    return TpvViews(top, side, front, views.binning, dropped=reproj.dropped)


def fuse(views, cam, cfg):
    """Apply fuse_step cfg.steps times."""
    out = views
    for _ in range(cfg.steps):
        out = fuse_step(out, cam, cfg)
    return out


def coarse_heads(views, front=None, top=None, side=None):
    """Per-view output heads: an optional renormalized 3x3 kernel each.

    Returns (o_top, o_side, o_front) as value/mask grids; None kernels
    pass the view through unchanged.
    """
    o_top = ViewGrid(*conv2d_masked(views.top.values, views.top.mask, top))
    o_side = ViewGrid(*conv2d_masked(views.side.values, views.side.mask, side))
    o_front = ViewGrid(*conv2d_masked(views.front.values, views.front.mask, front))
    return o_top, o_side, o_front
