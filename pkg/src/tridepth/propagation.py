"""Spatial propagation: per-pixel neighbor mixing and its tri-view form.

The basic update blends each pixel with a weighted set of neighbors:
out[a, b] = (1 - sum w) * o[a, b] + sum w * o[neighbor].  Keeping each
pixel's absolute weight sum at or below one makes the update a bounded
combination, so propagated values never escape the input envelope when
weights are nonnegative.  The tri-view variant runs this update in the
front, top and side grids and exchanges information through 3-D space
between iterations.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, FormatError
from .fusion import PointwiseMap
from .grids import DepthBinning, PointSet
from .projection import TpvViews, ViewGrid, fill_view, project_tpv, unproject_tpv

__all__ = [
    "AffinityField",
    "GspnConfig",
    "spn_step",
    "cspn_neighbors",
    "nlspn_neighbors",
    "square_offsets",
    "ring_offsets",
    "bilateral_affinity",
    "gspn_refine",
]

# per-pixel |weight| sums may exceed 1 by this much, covering float32
# round-trips through weight files
_SUM_SLACK = 1e-6


class AffinityField:
    """Per-pixel neighbor offsets and mixing weights.

    ``offsets[a, b, i] = (du, dv)`` targets position (b + du, a + dv);
    fractional offsets are read bilinearly and reads clamp at the image
    border.  ``active`` switches individual entries off (used to clip
    fixed stencils at the border).  Per-pixel absolute weight sums must
    stay at or below one.
    """

    __slots__ = ("offsets", "weights", "active")

    def __init__(self, offsets, weights, active=None):
        offsets = np.array(offsets, dtype=np.float64)
        weights = np.array(weights, dtype=np.float64)
        if offsets.ndim != 4 or offsets.shape[3] != 2:
            raise DimensionError("offsets must have shape (H, W, n, 2)")
        if weights.shape != offsets.shape[:3]:
            raise DimensionError("weights must have shape (H, W, n)")
        if active is None:
            active = np.ones(weights.shape, dtype=bool)
        else:
            active = np.array(active, dtype=bool)
            if active.shape != weights.shape:
                raise DimensionError("active must have shape (H, W, n)")
        if not (np.all(np.isfinite(offsets)) and np.all(np.isfinite(weights))):
            raise DomainError("offsets and weights must be finite")
        sums = np.abs(np.where(active, weights, 0.0)).sum(axis=2)
        if np.any(sums > 1 + _SUM_SLACK):
            raise DomainError("per-pixel |weight| sums must not exceed 1")
        for a in (offsets, weights, active):
            a.flags.writeable = False
        self.offsets = offsets
        self.weights = weights
        self.active = active

    @property
    def shape(self):
        return self.weights.shape[:2]

    @property
    def n_neighbors(self):
        return self.weights.shape[2]

    def counts(self):
        """Active neighbors per pixel."""
        return self.active.sum(axis=2)

    def with_weights(self, weights):
        """Same offsets and activity, new weights."""
        return AffinityField(self.offsets, weights, self.active)


def _stencil_field(height, width, offs):
    """Broadcast a shared offset stencil, deactivating off-grid entries."""
    offs = np.asarray(offs, dtype=np.float64)
    offsets = np.broadcast_to(offs, (height, width, offs.shape[0], 2)).copy()
    ys = np.arange(height)[:, None, None] + offsets[..., 1]
    xs = np.arange(width)[None, :, None] + offsets[..., 0]
    active = (ys >= 0) & (ys <= height - 1) & (xs >= 0) & (xs <= width - 1)
    return AffinityField(offsets, np.zeros((height, width, offs.shape[0])), active)


def square_offsets(include_center=True):
    """Offsets of the 3x3 square neighborhood, (du, dv) pairs."""
    offs = [
        (du, dv)
        for dv in (-1, 0, 1)
        for du in (-1, 0, 1)
        if include_center or (du, dv) != (0, 0)
    ]
    return np.array(offs, dtype=np.float64)


def ring_offsets(n, include_center=True):
    """First n square-spiral offsets, ordered by radius then (dv, du).

    n=9 with the center gives the plain 3x3 stencil; larger n grows
    outward one ring at a time.
    """
    if n < 1:
        raise DomainError("need at least one neighbor offset")
    offs = [(0, 0)] if include_center else []
    r = 1
    while len(offs) < n:
        ring = [
            (du, dv)
            for dv in range(-r, r + 1)
            for du in range(-r, r + 1)
            if max(abs(du), abs(dv)) == r
        ]
        ring.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[1], o[0]))
        offs.extend(ring)
        r += 1
    return np.array(offs[:n], dtype=np.float64)


def cspn_neighbors(height, width):
    """Fixed eight-neighbor stencil; border pixels lose off-grid entries.

    Weights start at zero; fill them in with ``with_weights``.
    """
    return _stencil_field(height, width, square_offsets(include_center=False))


def nlspn_neighbors(height, width, offsets):
    """Install caller-supplied per-pixel offsets verbatim.

    The table must be (height, width, n, 2); reads that land outside the
    image clamp to the border.  Weights start at zero.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.ndim != 4 or offsets.shape[:2] != (height, width) or offsets.shape[3] != 2:
        raise FormatError("offset table must have shape (height, width, n, 2)")
    return AffinityField(offsets, np.zeros(offsets.shape[:3]))


def _read_coords(shape, aff):
    h, w = shape
    ys = np.arange(h)[:, None, None] + aff.offsets[..., 1]
    xs = np.arange(w)[None, :, None] + aff.offsets[..., 0]
    return np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1)


def _bilinear(values, ys, xs):
    h, w = values.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    return (
        (1 - fy) * (1 - fx) * values[y0, x0]
        + (1 - fy) * fx * values[y0, x1]
        + fy * (1 - fx) * values[y1, x0]
        + fy * fx * values[y1, x1]
    )


def _bilinear_masked(values, mask, ys, xs):
    """Bilinear read over valid cells only.

    Returns (value, readable): the read renormalizes over the valid
    corners; a read with no valid corner weight is unreadable and
    reports 0.
    """
    h, w = values.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    vm = np.where(mask, values, 0.0)
    mf = mask.astype(np.float64)
    num = (
        (1 - fy) * (1 - fx) * vm[y0, x0]
        + (1 - fy) * fx * vm[y0, x1]
        + fy * (1 - fx) * vm[y1, x0]
        + fy * fx * vm[y1, x1]
    )
    den = (
        (1 - fy) * (1 - fx) * mf[y0, x0]
        + (1 - fy) * fx * mf[y0, x1]
        + fy * (1 - fx) * mf[y1, x0]
        + fy * fx * mf[y1, x1]
    )
    readable = den > 0
    return np.where(readable, num / np.where(readable, den, 1.0), 0.0), readable


def spn_step(o, aff, mask=None):
    """One propagation update of a 2-D grid.

    Dense form (mask None) returns the updated array:
    out = (1 - sum w) * o + sum w * o[neighbors], bilinear at fractional
    offsets, clamped at borders.

    Masked form returns (values, mask).  Neighbor reads that touch no
    valid pixel are dropped and the self term absorbs their weight;
    invalid pixels that can read at least one valid neighbor are filled
    with the weighted neighbor average and become valid.  Validity never
    shrinks.
    """
    o = np.asarray(o, dtype=np.float64)
    if o.ndim != 2 or o.shape != aff.shape:
        raise DimensionError("grid and affinity field sizes differ")
    ys, xs = _read_coords(o.shape, aff)
    w = np.where(aff.active, aff.weights, 0.0)
    if mask is None:
        vals = _bilinear(o, ys, xs)
        return (1 - w.sum(axis=2)) * o + (w * vals).sum(axis=2)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != o.shape:
        raise DimensionError("mask shape must match the grid")
    vals, readable = _bilinear_masked(o, mask, ys, xs)
    w = np.where(readable, w, 0.0)
    wsum = w.sum(axis=2)
    neigh = (w * vals).sum(axis=2)
    fill = ~mask & (wsum != 0)
    out = np.zeros_like(o)
    keep = mask
    out[keep] = ((1 - wsum) * np.where(mask, o, 0.0) + neigh)[keep]
    out[fill] = (neigh / np.where(wsum != 0, wsum, 1.0))[fill]
    return out, mask | fill


def bilateral_affinity(
    height, width, offsets, guide=None, sigma_g=1.0, sigma_s=1.0, lam=0.9
):
    """Gaussian space/appearance affinities with a fixed weight budget.

    Weight of a neighbor at offset (du, dv) is
    exp(-(g(p) - g(q))^2 / (2 sigma_g^2)) * exp(-(du^2 + dv^2) / (2 sigma_s^2)),
    with the appearance factor dropped when no guide is given; per pixel
    the weights are scaled so their sum is lam.  lam < 1 leaves the self
    term positive, which keeps the update a strict contraction toward
    the neighborhood envelope.
    """
    if not 0 <= lam <= 1:
        raise DomainError("lam must lie in [0, 1]")
    if sigma_g <= 0 or sigma_s <= 0:
        raise DomainError("sigmas must be positive")
    skel = _stencil_field(height, width, np.asarray(offsets, dtype=np.float64))
    du = skel.offsets[..., 0]
    dv = skel.offsets[..., 1]
    w = np.exp(-(du**2 + dv**2) / (2 * sigma_s**2))
    if guide is not None:
        guide = np.asarray(guide, dtype=np.float64)
        if guide.shape != (height, width):
            raise DimensionError("guide image size differs from the grid")
        ys, xs = _read_coords((height, width), skel)
        gv = _bilinear(guide, ys, xs)
        w = w * np.exp(-((guide[:, :, None] - gv) ** 2) / (2 * sigma_g**2))
    w = np.where(skel.active, w, 0.0)
    s = w.sum(axis=2, keepdims=True)
    w = np.where(s > 0, w * (lam / np.where(s > 0, s, 1.0)), 0.0)
    return skel.with_weights(w)


@dataclass(frozen=True)
class GspnConfig:
    """Hyperparameters of the tri-view propagation loop."""

    binning: DepthBinning
    n_neighbors: int = 9
    iterations: int = 4
    point_map: PointwiseMap = PointwiseMap()

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise DomainError("need at least one neighbor")
        if self.iterations < 1:
            raise DomainError("need at least one iteration")


def gspn_refine(o_t, o_s, o_f, aff_t, aff_s, aff_f, cam, cfg):
    """Iterative tri-view propagation with a 3-D exchange between views.

    Each iteration propagates every view with its own affinity field,
    lifts the three propagated views into one point cloud, maps point
    features, and scatters the cloud back, filling cells that are still
    empty.  Returns the three refined (top, side, front) grids.  Per-view
    validity never shrinks across iterations.
    """
    h, w = o_f.shape
    d = cfg.binning.bins
    if (cam.height, cam.width) != (h, w):
        raise DimensionError("front view and camera sizes differ")
    if o_t.shape != (w, d) or o_s.shape != (d, h):
        raise DimensionError("top/side views do not match the front view and binning")
    for view, aff in ((o_t, aff_t), (o_s, aff_s), (o_f, aff_f)):
        if aff.shape != view.shape:
            raise DimensionError("affinity field size differs from its view")
        if aff.n_neighbors != cfg.n_neighbors:
            raise DimensionError("affinity neighbor count differs from the config")
    top, side, front = o_t, o_s, o_f
    for _ in range(cfg.iterations):
        tv, tm = spn_step(top.values, aff_t, top.mask)
        sv, sm = spn_step(side.values, aff_s, side.mask)
        fv, fm = spn_step(front.values, aff_f, front.mask)
        top, side, front = ViewGrid(tv, tm), ViewGrid(sv, sm), ViewGrid(fv, fm)
        views = TpvViews(top, side, front, cfg.binning)
        pts = unproject_tpv(views, cam)
        if pts.count == 0:
            continue
        pts = PointSet(pts.positions, features=cfg.point_map.apply(pts.features))
        reproj = project_tpv(pts, cam, cfg.binning)
        top = fill_view(top, reproj.top.values, reproj.top.mask)
        side = fill_view(side, reproj.side.values, reproj.side.mask)
        front = fill_view(front, reproj.front.values, reproj.front.mask)
    return top, side, front
