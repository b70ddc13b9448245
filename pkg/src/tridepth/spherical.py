"""Spherical transforms, distance-adaptive binning, and lattice filtering.

Points are described by (r, theta, phi): r the Euclidean norm, theta the
angle from the +z axis in [0, pi], phi = atan2(y, x) in (-pi, pi].  The
radial axis is sliced into shells whose width grows with distance, so a
cell's volume tracks the thinning of scans at range; the angular axes
are equal-size cells, which lets the sparse grid be laid out as a dense
rectangular lattice for filtering.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "SphericalBinning",
    "SphericalGrid",
    "Filter3",
    "to_spherical",
    "from_spherical",
    "bin_points",
    "make_distance_aware_binning",
    "dasc_apply",
    "non_empty_stats",
    "StatsRow",
]

_EPS = 1e-9


@dataclass(frozen=True)
class SphericalBinning:
    """Radial shell edges plus equal-angle theta/phi cells.

    Shell widths must be non-decreasing outward.  Angular deltas must
    divide their ranges into a whole number of cells.
    """

    r_edges: tuple
    delta_theta: float
    delta_phi: float
    theta_range: tuple = (0.0, np.pi)
    phi_range: tuple = (-np.pi, np.pi)

    def __post_init__(self):
        object.__setattr__(self, "r_edges", tuple(float(e) for e in self.r_edges))
        if len(self.r_edges) < 2:
            raise DomainError("need at least one radial shell")
        edges = np.asarray(self.r_edges)
        if edges[0] < 0 or np.any(np.diff(edges) <= 0):
            raise DomainError("radial edges must be nonnegative and strictly increasing")
        widths = np.diff(edges)
        if np.any(np.diff(widths) < 0):
            raise DomainError("radial shell widths must be non-decreasing")
        tlo, thi = self.theta_range
        if not (-_EPS <= tlo < thi <= np.pi + _EPS):
            raise DomainError("theta range must be an interval inside [0, pi]")
        plo, phi_hi = self.phi_range
        if not (-np.pi - _EPS <= plo < phi_hi <= np.pi + _EPS):
            raise DomainError("phi range must be an interval inside (-pi, pi]")
        for extent, delta, name in (
            (thi - tlo, self.delta_theta, "theta"),
            (phi_hi - plo, self.delta_phi, "phi"),
        ):
            if delta <= 0:
                raise DomainError(f"delta_{name} must be positive")
            n = round(extent / delta)
            if n < 1 or abs(n * delta - extent) > _EPS:
                raise DomainError(f"delta_{name} must divide the {name} range exactly")

    @property
    def n_shells(self):
        return len(self.r_edges) - 1

    @property
    def n_theta(self):
        tlo, thi = self.theta_range
        return int(round((thi - tlo) / self.delta_theta))

    @property
    def n_phi(self):
        plo, phi_hi = self.phi_range
        return int(round((phi_hi - plo) / self.delta_phi))

    @property
    def r_max(self):
        return self.r_edges[-1]

    def shell_centers(self):
        edges = np.asarray(self.r_edges)
        return (edges[:-1] + edges[1:]) / 2.0

    def theta_centers(self):
        return self.theta_range[0] + (np.arange(self.n_theta) + 0.5) * self.delta_theta

    def phi_centers(self):
        return self.phi_range[0] + (np.arange(self.n_phi) + 0.5) * self.delta_phi


class SphericalGrid:
    """Sparse spherical raster: occupied cells with mean features and counts.

    ``indices`` is (M, 3) of (shell, theta, phi) cell indices, stored in
    lexicographic order; ``features`` is (M, C); ``counts`` holds how many
    points each cell absorbed.  ``dropped`` counts points that fell
    outside the binning during construction.
    """

    __slots__ = ("binning", "indices", "features", "counts", "dropped")

    def __init__(self, binning, indices, features, counts, dropped=0):
        indices = np.array(indices, dtype=np.int64).reshape(-1, 3)
        features = np.array(features, dtype=np.float64)
        counts = np.array(counts, dtype=np.int64).reshape(-1)
        m = indices.shape[0]
        if features.size == 0:
            width = features.shape[-1] if features.ndim == 2 else 3
            features = features.reshape(m, width)
        if features.ndim != 2 or features.shape[0] != m or counts.shape[0] != m:
            raise DimensionError("indices, features and counts must agree on M")
        if m:
            bounds = (binning.n_shells, binning.n_theta, binning.n_phi)
            if np.any(indices < 0) or np.any(indices >= np.asarray(bounds)):
                raise DomainError("cell index out of binning bounds")
            if np.any(counts < 1):
                raise DomainError("occupancy counts must be at least 1")
            if not np.all(np.isfinite(features)):
                raise DomainError("cell features must be finite")
            order = np.lexsort((indices[:, 2], indices[:, 1], indices[:, 0]))
            indices = indices[order]
            features = features[order]
            counts = counts[order]
            if np.any(np.all(indices[1:] == indices[:-1], axis=1)):
                raise DomainError("duplicate cell indices")
        for a in (indices, features, counts):
            a.flags.writeable = False
        self.binning = binning
        self.indices = indices
        self.features = features
        self.counts = counts
        self.dropped = int(dropped)

    @property
    def n_cells(self):
        return self.indices.shape[0]

    @property
    def n_channels(self):
        return self.features.shape[1]

    def to_dense(self):
        """Dense (shells, n_theta, n_phi, C) feature lattice plus occupancy."""
        b = self.binning
        shape = (b.n_shells, b.n_theta, b.n_phi)
        occ = np.zeros(shape, dtype=bool)
        vals = np.zeros(shape + (self.n_channels,))
        j, t, p = self.indices.T
        occ[j, t, p] = True
        vals[j, t, p] = self.features
        return vals, occ

    def cell_centers(self):
        """Cartesian midpoints of the occupied cells, in index order."""
        b = self.binning
        j, t, p = self.indices.T
        r = b.shell_centers()[j]
        theta = b.theta_range[0] + (t + 0.5) * b.delta_theta
        phi = b.phi_range[0] + (p + 0.5) * b.delta_phi
        return from_spherical(r, theta, phi)


@dataclass(frozen=True)
class Filter3:
    """A 3x3x3 filtering kernel, shared across channels or per-channel.

    Shared kernels have shape (3, 3, 3); per-channel kernels (C, 3, 3, 3).
    """

    weights: np.ndarray = field(default_factory=lambda: Filter3._identity_weights())

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (3, 3, 3) and not (w.ndim == 4 and w.shape[1:] == (3, 3, 3)):
            raise DimensionError("kernel must be (3,3,3) or (C,3,3,3)")
        if not np.all(np.isfinite(w)):
            raise DomainError("kernel weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @staticmethod
    def _identity_weights():
        w = np.zeros((3, 3, 3))
        w[1, 1, 1] = 1.0
        return w

    @property
    def shared(self):
        return self.weights.ndim == 3

    @classmethod
    def identity(cls):
        return cls(cls._identity_weights())

    @classmethod
    def box(cls):
        return cls(np.full((3, 3, 3), 1.0 / 27.0))

    def per_channel(self, channels):
        """Kernel expanded to (channels, 3, 3, 3)."""
        if self.shared:
            return np.broadcast_to(self.weights, (channels, 3, 3, 3))
        if self.weights.shape[0] != channels:
            raise DimensionError("per-channel kernel does not match feature width")
        return self.weights


def to_spherical(p):
    """Cartesian -> (r, theta, phi); phi is canonicalized into (-pi, pi].

    Accepts one point (3,) or a batch (N, 3); scalars come back as floats
    for single points.  The zero vector has no direction and is rejected.
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    r = np.linalg.norm(p, axis=-1)
    if np.any(r == 0):
        raise DomainError("zero vector has no spherical direction")
    theta = np.arccos(np.clip(p[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(p[..., 1], p[..., 0])
    phi = np.where(phi <= -np.pi, np.pi, phi)
    if single:
        return float(r), float(theta), float(phi)
    return r, theta, phi


def from_spherical(r, theta, phi):
    """(r, theta, phi) -> Cartesian; exact inverse of to_spherical."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(r <= 0):
        raise DomainError("radius must be positive")
    st = np.sin(theta)
    return np.stack(
        [r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)],
        axis=-1,
    )


def make_distance_aware_binning(
    r_max,
    w0=1.0,
    rho=1.15,
    delta_theta=np.deg2rad(2.0),
    delta_phi=np.deg2rad(2.0),
    theta_range=(0.0, np.pi),
    phi_range=(-np.pi, np.pi),
):
    """Radial shells that widen geometrically with distance.

    Shell j has width w0 * rho**j until r_max truncates the last shell;
    if the truncated remainder would be thinner than its predecessor the
    two merge, so widths stay non-decreasing for every valid (w0, rho).
    """
    if r_max <= 0:
        raise DomainError("r_max must be positive")
    if w0 <= 0:
        raise DomainError("w0 must be positive")
    if rho < 1:
        raise DomainError("rho must be at least 1")
    edges = [0.0]
    w = float(w0)
    while edges[-1] + w < r_max:
        edges.append(edges[-1] + w)
        w *= rho
    edges.append(float(r_max))
    if len(edges) >= 3 and edges[-1] - edges[-2] < edges[-2] - edges[-3]:
        del edges[-2]
    return SphericalBinning(
        tuple(edges), float(delta_theta), float(delta_phi), theta_range, phi_range
    )


def bin_points(points, binning):
    """Assign points to spherical cells and average features per cell.

    Cell features are the mean over member points (mean position when the
    set carries no features), accumulated in ascending point order so the
    result is bit-reproducible.  Points outside the radial or angular
    coverage are dropped and counted.
    """
    if points.count == 0:
        return SphericalGrid(binning, np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
    pos = points.positions
    r, theta, phi = to_spherical(pos)
    edges = np.asarray(binning.r_edges)
    j = np.searchsorted(edges, r, side="right") - 1
    tlo, thi = binning.theta_range
    plo, phi_hi = binning.phi_range
    keep = (
        (j >= 0)
        & (j < binning.n_shells)
        & (theta >= tlo)
        & (theta <= thi)
        & (phi >= plo)
        & (phi <= phi_hi)
    )
    dropped = points.count - int(np.count_nonzero(keep))
    feats = points.features if points.features is not None else pos
    j = j[keep]
    it = np.clip(
        np.floor((theta[keep] - tlo) / binning.delta_theta), 0, binning.n_theta - 1
    ).astype(np.int64)
    ip = np.clip(
        np.floor((phi[keep] - plo) / binning.delta_phi), 0, binning.n_phi - 1
    ).astype(np.int64)
    feats = feats[keep]
    if j.size == 0:
        c = feats.shape[1]
        return SphericalGrid(
            binning, np.zeros((0, 3)), np.zeros((0, c)), np.zeros(0), dropped=dropped
        )
    lin = (j * binning.n_theta + it) * binning.n_phi + ip
    order = np.argsort(lin, kind="stable")
    lin_s = lin[order]
    first = np.ones(lin_s.size, dtype=bool)
    first[1:] = lin_s[1:] != lin_s[:-1]
    starts = np.nonzero(first)[0]
    sums = np.add.reduceat(feats[order], starts, axis=0)
    counts = np.diff(np.append(starts, lin_s.size))
    cells = lin_s[starts]
    ip_u = cells % binning.n_phi
    rest = cells // binning.n_phi
    it_u = rest % binning.n_theta
    j_u = rest // binning.n_theta
    return SphericalGrid(
        binning,
        np.column_stack([j_u, it_u, ip_u]),
        sums / counts[:, None],
        counts,
        dropped=dropped,
    )


def _shift3(a, dj, dt, dp):
    """Zero-padded shift of the first three axes: out[i] = a[i + d]."""
    src, dst = [], []
    for axis, off in enumerate((dj, dt, dp)):
        n = a.shape[axis]
        src.append(slice(max(off, 0), n + min(off, 0)))
        dst.append(slice(max(-off, 0), n + min(-off, 0)))
    out = np.zeros_like(a)
    out[tuple(dst)] = a[tuple(src)]
    return out


def dasc_apply(grid, filt):
    """Filter occupied cells with a 3x3x3 kernel on the dense lattice.

    The sparse grid is laid out as the dense (shell, theta, phi) lattice,
    cross-correlated with zero padding, and renormalized by the kernel
    mass that landed on occupied cells, so constant fields are fixed
    points.  Cells whose renormalizer vanishes keep their input value.
    The occupancy pattern is never changed.
    """
    vals, occ = grid.to_dense()
    if grid.n_cells == 0:
        return grid
    w = filt.per_channel(grid.n_channels)
    occf = occ.astype(np.float64)
    num = np.zeros_like(vals)
    den = np.zeros_like(vals)
    for dj in (-1, 0, 1):
        for dt in (-1, 0, 1):
            for dp in (-1, 0, 1):
                wk = w[:, dj + 1, dt + 1, dp + 1]
                num += _shift3(vals, dj, dt, dp) * wk
                den += _shift3(occf, dj, dt, dp)[..., None] * wk
    out = np.where(den != 0, num / np.where(den != 0, den, 1.0), vals)
    j, t, p = grid.indices.T
    return SphericalGrid(
        grid.binning, grid.indices, out[j, t, p], grid.counts, dropped=grid.dropped
    )


@dataclass(frozen=True)
class StatsRow:
    """Non-empty-unit counts for one distance range, cubic vs spherical."""

    lo: float
    hi: float
    cubic_occupied: int
    cubic_universe: int
    cubic_pct: float
    spherical_occupied: int
    spherical_universe: int
    spherical_pct: float


def _pct(occupied, universe):
    return 100.0 * occupied / universe if universe else 0.0


def _range_index(radii, edges):
    """Range index per radius; -1 marks values outside every range."""
    i = np.searchsorted(edges, radii, side="right") - 1
    i = np.where((radii < edges[0]) | (radii >= edges[-1]), -1, i)
    return i.astype(np.int64)


def non_empty_stats(points, cubic_cell, binning, distance_bins):
    """Fraction of non-empty units per distance range, cubic vs spherical.

    The unit universe is every cell whose center direction falls inside
    the cloud's normalized image-plane bounding box (z > 0), plus every
    occupied cell; occupancy therefore never exceeds 100%.  A unit's
    distance range is decided by its center's distance from the origin.
    """
    if cubic_cell <= 0:
        raise DomainError("cubic cell edge must be positive")
    edges = np.asarray(distance_bins, dtype=np.float64)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("distance bins must be ascending with at least one range")
    n_ranges = edges.size - 1
    pos = points.positions if points.count else np.zeros((0, 3))
    frontal = pos[pos[:, 2] > 0] if pos.size else pos
    rect = None
    if frontal.shape[0]:
        nx = frontal[:, 0] / frontal[:, 2]
        ny = frontal[:, 1] / frontal[:, 2]
        rect = (nx.min(), nx.max(), ny.min(), ny.max())

    sph_occ = np.zeros(n_ranges, dtype=np.int64)
    sph_uni = np.zeros(n_ranges, dtype=np.int64)
    cub_occ = np.zeros(n_ranges, dtype=np.int64)
    cub_uni = np.zeros(n_ranges, dtype=np.int64)

    # spherical side: shells classify whole index planes at once
    grid = bin_points(points, binning) if points.count else None
    occ = np.zeros((binning.n_shells, binning.n_theta, binning.n_phi), dtype=bool)
    if grid is not None and grid.n_cells:
        j, t, p = grid.indices.T
        occ[j, t, p] = True
    theta_c = binning.theta_centers()
    phi_c = binning.phi_centers()
    st = np.sin(theta_c)[:, None]
    dir_x = st * np.cos(phi_c)[None, :]
    dir_y = st * np.sin(phi_c)[None, :]
    dir_z = np.cos(theta_c)[:, None] * np.ones_like(phi_c)[None, :]
    if rect is not None:
        with np.errstate(divide="ignore", invalid="ignore"):
            cnx = dir_x / dir_z
            cny = dir_y / dir_z
        in_rect = (
            (dir_z > 0)
            & (cnx >= rect[0])
            & (cnx <= rect[1])
            & (cny >= rect[2])
            & (cny <= rect[3])
        )
    else:
        in_rect = np.zeros((binning.n_theta, binning.n_phi), dtype=bool)
    shell_range = _range_index(binning.shell_centers(), edges)
    for jdx in range(binning.n_shells):
        ridx = shell_range[jdx]
        if ridx < 0:
            continue
        universe = in_rect | occ[jdx]
        sph_uni[ridx] += int(np.count_nonzero(universe))
        sph_occ[ridx] += int(np.count_nonzero(occ[jdx]))

    # cubic side: occupied voxels from the points, universe slab by slab
    vox = np.zeros((0, 3), dtype=np.int64)
    if pos.shape[0]:
        vox = np.unique(np.floor(pos / cubic_cell).astype(np.int64), axis=0)
    vox_range = _range_index(
        np.linalg.norm((vox + 0.5) * cubic_cell, axis=1), edges
    )
    for ridx in vox_range:
        if ridx >= 0:
            cub_occ[ridx] += 1
    if rect is None:
        cub_uni = cub_occ.copy()
    else:
        iz_max = int(np.floor(edges[-1] / cubic_cell - 0.5))

        def slab_bounds(iz):
            zc = (iz + 0.5) * cubic_cell
            return (
                int(np.ceil(rect[0] * zc / cubic_cell - 0.5)),
                int(np.floor(rect[1] * zc / cubic_cell - 0.5)),
                int(np.ceil(rect[2] * zc / cubic_cell - 0.5)),
                int(np.floor(rect[3] * zc / cubic_cell - 0.5)),
            )

        for iz in range(0, iz_max + 1):
            ix0, ix1, iy0, iy1 = slab_bounds(iz)
            if ix1 < ix0 or iy1 < iy0:
                continue
            zc = (iz + 0.5) * cubic_cell
            xs = (np.arange(ix0, ix1 + 1) + 0.5) * cubic_cell
            ys = (np.arange(iy0, iy1 + 1) + 0.5) * cubic_cell
            rr = np.sqrt(xs[:, None] ** 2 + ys[None, :] ** 2 + zc * zc)
            ridx = _range_index(rr.ravel(), edges)
            cub_uni += np.bincount(ridx[ridx >= 0], minlength=n_ranges)
        # occupied voxels the slab sweep missed still belong to the universe
        for v, ridx in zip(vox, vox_range):
            if ridx < 0:
                continue
            in_box = False
            if 0 <= v[2] <= iz_max:
                ix0, ix1, iy0, iy1 = slab_bounds(v[2])
                in_box = ix0 <= v[0] <= ix1 and iy0 <= v[1] <= iy1
            if not in_box:
                cub_uni[ridx] += 1

    rows = []
    for i in range(n_ranges):
        rows.append(
            StatsRow(
                float(edges[i]),
                float(edges[i + 1]),
                int(cub_occ[i]),
                int(cub_uni[i]),
                _pct(cub_occ[i], cub_uni[i]),
                int(sph_occ[i]),
                int(sph_uni[i]),
                _pct(sph_occ[i], sph_uni[i]),
            )
        )
    return rows
