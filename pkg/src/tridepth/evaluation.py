"""Depth metrics and the weighted tri-view training loss.

All metrics are computed over the pixels valid in the ground truth; the
prediction must cover that set.  Depths are meters; inverse-depth
metrics are reported in 1/km; threshold accuracies are percentages.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, EvaluationError

__all__ = [
    "MetricsReport",
    "LossBreakdown",
    "evaluate",
    "loss_total",
    "METRIC_COLUMNS",
    "metrics_row",
]


@dataclass(frozen=True)
class MetricsReport:
    """The seven standard depth-completion metrics plus the pixel count.

    rmse/mae in meters (mm via properties), irmse/imae in 1/km, rel and
    rmselog dimensionless, delta1..3 in percent.
    """

    rmse: float
    mae: float
    irmse: float
    imae: float
    rel: float
    rmselog: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def __post_init__(self):
        values = (
            self.rmse,
            self.mae,
            self.irmse,
            self.imae,
            self.rel,
            self.rmselog,
            self.delta1,
            self.delta2,
            self.delta3,
        )
        if any(v < 0 for v in values):
            raise DomainError("metrics cannot be negative")
        if not self.delta1 <= self.delta2 <= self.delta3 <= 100.0:
            raise DomainError("threshold accuracies must be ordered and <= 100")
        if self.n_valid < 1:
            raise DomainError("a report needs at least one evaluated pixel")

    @property
    def rmse_mm(self):
        return self.rmse * 1000.0

    @property
    def mae_mm(self):
        return self.mae * 1000.0


METRIC_COLUMNS = [
    "scene",
    "n_valid",
    "rmse_m",
    "rmse_mm",
    "mae_m",
    "mae_mm",
    "irmse_1km",
    "imae_1km",
    "rel",
    "rmselog",
    "delta1_pct",
    "delta2_pct",
    "delta3_pct",
]


def metrics_row(scene, report):
    """One CSV row for a report, column order as METRIC_COLUMNS."""
    return [
        scene,
        report.n_valid,
        report.rmse,
        report.rmse_mm,
        report.mae,
        report.mae_mm,
        report.irmse,
        report.imae,
        report.rel,
        report.rmselog,
        report.delta1,
        report.delta2,
        report.delta3,
    ]


def evaluate(pred, gt):
    """Compute the seven metrics of pred against gt.

    The evaluation set is the gt-valid pixels; every one of them must be
    valid in pred (depth completion hands back a dense map).
    """
    if pred.shape != gt.shape:
        raise DimensionError("prediction and ground truth sizes differ")
    sel = gt.mask
    n = int(np.count_nonzero(sel))
    if n == 0:
        raise DomainError("ground truth has no valid pixels")
    if not np.all(pred.mask[sel]):
        raise EvaluationError("prediction does not cover every ground-truth pixel")
    x = pred.depth[sel]
    y = gt.depth[sel]
    diff = y - x
    ix = 1000.0 / x
    iy = 1000.0 / y
    ratio = np.maximum(y / x, x / y)
    return MetricsReport(
        rmse=float(np.sqrt(np.mean(diff**2))),
        mae=float(np.mean(np.abs(diff))),
        irmse=float(np.sqrt(np.mean((iy - ix) ** 2))),
        imae=float(np.mean(np.abs(iy - ix))),
        rel=float(np.mean(np.abs(diff) / y)),
        rmselog=float(np.sqrt(np.mean((np.log(y) - np.log(x)) ** 2))),
        delta1=float(100.0 * np.mean(ratio < 1.25)),
        delta2=float(100.0 * np.mean(ratio < 1.25**2)),
        delta3=float(100.0 * np.mean(ratio < 1.25**3)),
        n_valid=n,
    )


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss and its per-view terms."""

    total: float
    front: float
    top: float
    side: float
    alpha: float
    beta: float


def _values_mask(grid):
    if hasattr(grid, "depth"):
        return grid.depth, grid.mask
    return grid.values, grid.mask


def _view_loss(pred, gt, name):
    pv, pm = _values_mask(pred)
    gv, gm = _values_mask(gt)
    if pv.shape != gv.shape:
        raise DimensionError(f"{name} view shapes differ")
    sel = gm
    if not np.any(sel):
        raise DomainError(f"{name} view has no valid ground truth")
    if not np.all(pm[sel]):
        raise EvaluationError(f"prediction does not cover the {name} ground truth")
    d = pv[sel] - gv[sel]
    return float(np.mean(np.abs(d)) + np.mean(d**2))


def loss_total(pred, gt, alpha=0.6, beta=0.2):
    """Weighted sum of per-view L1 + L2 losses.

    ``pred`` and ``gt`` are (front, top, side) triples of value/mask
    grids; each view term is mean |d| + mean d^2 over its gt-valid
    pixels, combined as front + alpha * top + beta * side.
    """
    l_f = _view_loss(pred[0], gt[0], "front")
    l_t = _view_loss(pred[1], gt[1], "top")
    l_s = _view_loss(pred[2], gt[2], "side")
    return LossBreakdown(
        total=l_f + alpha * l_t + beta * l_s,
        front=l_f,
        top=l_t,
        side=l_s,
        alpha=alpha,
        beta=beta,
    )
