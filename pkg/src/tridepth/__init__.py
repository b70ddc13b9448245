"""Tri-view depth completion: grids, projections, fusion and propagation."""

from .config import SceneConfig, load_config, parse_config
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    EvaluationError,
    FormatError,
    RangeError,
)
from .evaluation import (
    METRIC_COLUMNS,
    LossBreakdown,
    MetricsReport,
    evaluate,
    loss_total,
    metrics_row,
)
from .fusion import (
    FusionConfig,
    PointwiseMap,
    coarse_heads,
    conv2d_masked,
    fuse,
    fuse_step,
    knn_aggregate,
)
from .grids import (
    CameraIntrinsics,
    DepthBinning,
    PointSet,
    SparseDepthMap,
    depth_to_points,
    points_to_depth,
    project_pixels,
    round_half_away,
)
from .io import (
    read_depth_png,
    read_view_png,
    read_weights,
    write_csv,
    write_depth_png,
    write_view_png,
    write_weights,
)
from .projection import (
    SOURCE_FRONT,
    SOURCE_SIDE,
    SOURCE_TOP,
    TpvViews,
    ViewGrid,
    fill_view,
    merge_front_view,
    project_tpv,
    unproject_tpv,
)
from .propagation import (
    AffinityField,
    GspnConfig,
    bilateral_affinity,
    cspn_neighbors,
    gspn_refine,
    nlspn_neighbors,
    ring_offsets,
    spn_step,
    square_offsets,
)
from .spherical import (
    Filter3,
    SphericalBinning,
    SphericalGrid,
    StatsRow,
    bin_points,
    dasc_apply,
    from_spherical,
    make_distance_aware_binning,
    non_empty_stats,
    to_spherical,
)
from .synth import synth_lidar

__version__ = "0.1.0"

__all__ = [
    "AffinityField",
    "CameraIntrinsics",
    "ConfigError",
    "DepthBinning",
    "DimensionError",
    "DomainError",
    "EvaluationError",
    "Filter3",
    "FormatError",
    "FusionConfig",
    "GspnConfig",
    "LossBreakdown",
    "METRIC_COLUMNS",
    "MetricsReport",
    "PointSet",
    "PointwiseMap",
    "RangeError",
    "SOURCE_FRONT",
    "SOURCE_SIDE",
    "SOURCE_TOP",
    "SceneConfig",
    "SparseDepthMap",
    "SphericalBinning",
    "SphericalGrid",
    "StatsRow",
    "TpvViews",
    "ViewGrid",
    "bilateral_affinity",
    "bin_points",
    "coarse_heads",
    "conv2d_masked",
    "cspn_neighbors",
    "dasc_apply",
    "depth_to_points",
    "evaluate",
    "fill_view",
    "from_spherical",
    "fuse",
    "fuse_step",
    "gspn_refine",
    "knn_aggregate",
    "load_config",
    "loss_total",
    "make_distance_aware_binning",
    "merge_front_view",
    "metrics_row",
    "nlspn_neighbors",
    "non_empty_stats",
    "parse_config",
    "points_to_depth",
    "project_pixels",
    "project_tpv",
    "read_depth_png",
    "read_view_png",
    "read_weights",
    "ring_offsets",
    "round_half_away",
    "spn_step",
    "square_offsets",
    "synth_lidar",
    "to_spherical",
    "unproject_tpv",
    "write_csv",
    "write_depth_png",
    "write_view_png",
    "write_weights",
]
