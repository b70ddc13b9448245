"""Command-line surface tying the modules into runnable pipelines.

Exit codes: 0 success, 1 usage, 2 file format or I/O trouble, 3 domain
or precondition violations.  Diagnostics go to standard error.
"""

import argparse
import json
import os
import sys

import numpy as np

from .config import load_config
from .errors import ConfigError, DimensionError, DomainError, FormatError
from .evaluation import METRIC_COLUMNS, evaluate, metrics_row
from .fusion import FusionConfig, PointwiseMap, coarse_heads, fuse_step
from .grids import SparseDepthMap, depth_to_points
from .io import (
    atomic_write_bytes,
    read_depth_png,
    read_view_png,
    read_weights,
    write_csv,
    write_depth_png,
    write_view_png,
)
from .projection import merge_front_view, project_tpv
from .propagation import (
    AffinityField,
    GspnConfig,
    bilateral_affinity,
    gspn_refine,
    ring_offsets,
)
from .spherical import Filter3, non_empty_stats
from .synth import synth_lidar

__all__ = ["cli_run", "main"]

_BOX2 = np.full((3, 3), 1.0 / 9.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="tridepth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="split a sparse depth map into three views")
    p.add_argument("--depth", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("fuse", help="densify the views with the recurrent 3D loop")
    p.add_argument("--depth", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("refine", help="tri-view propagation over decomposed views")
    p.add_argument("--views", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("pipeline", help="decompose, fuse, heads, refine in one go")
    p.add_argument("--depth", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--weights")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("eval", help="metrics of a completed map against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="non-empty-unit percentages, cubic vs spherical")
    p.add_argument("--cloud", required=True, help="depth PNG path or synth:SEED,RAYS")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stats)

    return parser


def _camera(cfg):
    if cfg.camera is None:
        raise ConfigError("this command needs a camera section in the config")
    return cfg.camera


def _read_input(path, cam):
    s = read_depth_png(path)
    if s.shape != cam.shape:
        raise DimensionError(
            f"depth map is {s.shape}, config camera says {cam.shape}"
        )
    return s


def _load_weight_file(cfg, args):
    path = args.weights or cfg.weights_path
    return read_weights(path) if path else {}


def _point_map(weights):
    if "point_map.weight" in weights:
        return PointwiseMap.linear(
            weights["point_map.weight"].astype(np.float64),
            weights.get("point_map.bias"),
        )
    return PointwiseMap.identity()


def _fusion_config(cfg, weights):
    """Fusion settings; update kernels default to a box so fusion densifies."""

    def kern(name):
        return weights[name].astype(np.float64) if name in weights else _BOX2

    filt = (
        Filter3(weights["filter3"].astype(np.float64))
        if "filter3" in weights
        else Filter3.box()
    )
    return FusionConfig(
        binning=cfg.spherical,
        k=cfg.fusion_k,
        steps=cfg.fusion_steps,
        point_map=_point_map(weights),
        filter3=filt,
        update_front=kern("h2c_front"),
        update_top=kern("h2c_top"),
        update_side=kern("h2c_side"),
    )


def _affinities(cfg, shapes, weights):
    """One affinity field per view; a file-supplied field binds to the front."""
    offsets = ring_offsets(cfg.gspn_neighbors)
    fields = {}
    for name, (h, w) in shapes.items():
        if name == "front" and "affinity.weights" in weights:
            if "affinity.offsets" not in weights:
                raise FormatError("affinity.weights needs affinity.offsets")
            aw = weights["affinity.weights"].astype(np.float64)
            ao = weights["affinity.offsets"].astype(np.float64)
            if aw.shape[:2] != (h, w) or aw.shape[2] != cfg.gspn_neighbors:
                raise DimensionError(
                    "affinity field does not match the front view and neighbor count"
                )
            fields[name] = AffinityField(ao, aw)
        else:
            fields[name] = bilateral_affinity(
                h,
                w,
                offsets,
                sigma_g=cfg.sigma_g,
                sigma_s=cfg.sigma_s,
                lam=cfg.lam,
            )
    return fields


def _front_map(front):
    return SparseDepthMap(np.where(front.mask, front.values, 0.0), front.mask)


def _decompose(cfg, depth_path):
    cam = _camera(cfg)
    s = _read_input(depth_path, cam)
    views = project_tpv(depth_to_points(s, cam), cam, cfg.depth_binning)
    return merge_front_view(views, s), s, cam


def _cmd_decompose(args):
    cfg = load_config(args.config)
    views, s, _ = _decompose(cfg, args.depth)
    os.makedirs(args.out_dir, exist_ok=True)
    write_depth_png(_front_map(views.front), os.path.join(args.out_dir, "front.png"))
    write_view_png(views.top, os.path.join(args.out_dir, "top.png"))
    write_view_png(views.side, os.path.join(args.out_dir, "side.png"))
    summary = {
        "input_density": s.density,
        "front_density": views.front.density,
        "top_density": views.top.density,
        "side_density": views.side.density,
        "points": s.n_valid,
        "dropped": views.dropped,
    }
    atomic_write_bytes(
        os.path.join(args.out_dir, "summary.json"),
        json.dumps(summary, indent=2).encode("utf-8") + b"\n",
    )
    print(f"decomposed {args.depth} -> {args.out_dir}")
    return 0


def _run_fuse(views, cam, fcfg):
    for step in range(1, fcfg.steps + 1):
        views = fuse_step(views, cam, FusionConfig(
            binning=fcfg.binning,
            k=fcfg.k,
            steps=1,
            point_map=fcfg.point_map,
            filter3=fcfg.filter3,
            update_front=fcfg.update_front,
            update_top=fcfg.update_top,
            update_side=fcfg.update_side,
        ))
        print(
            f"step {step}: front={views.front.density:.4f} "
            f"top={views.top.density:.4f} side={views.side.density:.4f}"
        )
    return views


def _cmd_fuse(args):
    cfg = load_config(args.config)
    weights = _load_weight_file(cfg, args)
    views, _, cam = _decompose(cfg, args.depth)
    views = _run_fuse(views, cam, _fusion_config(cfg, weights))
    write_depth_png(_front_map(views.front), args.out)
    print(f"fused front view -> {args.out}")
    return 0


def _refine(cfg, o_t, o_s, o_f, cam, weights):
    shapes = {"top": o_t.shape, "side": o_s.shape, "front": o_f.shape}
    aff = _affinities(cfg, shapes, weights)
    gcfg = GspnConfig(
        binning=cfg.depth_binning,
        n_neighbors=cfg.gspn_neighbors,
        iterations=cfg.gspn_iterations,
        point_map=_point_map(weights),
    )
    return gspn_refine(
        o_t, o_s, o_f, aff["top"], aff["side"], aff["front"], cam, gcfg
    )


def _cmd_refine(args):
    cfg = load_config(args.config)
    cam = _camera(cfg)
    weights = _load_weight_file(cfg, args)
    front = read_depth_png(os.path.join(args.views, "front.png"))
    if front.shape != cam.shape:
        raise DimensionError("front view size differs from the config camera")
    o_f = _to_view(front)
    o_t = read_view_png(os.path.join(args.views, "top.png"))
    o_s = read_view_png(os.path.join(args.views, "side.png"))
    _, _, refined = _refine(cfg, o_t, o_s, o_f, cam, weights)
    write_depth_png(_front_map(refined), args.out)
    print(f"refined front view -> {args.out}")
    return 0


def _to_view(depth_map):
    from .projection import ViewGrid

    return ViewGrid(depth_map.depth, depth_map.mask)


def _cmd_pipeline(args):
    cfg = load_config(args.config)
    weights = _load_weight_file(cfg, args)
    views, _, cam = _decompose(cfg, args.depth)
    views = _run_fuse(views, cam, _fusion_config(cfg, weights))
    o_t, o_s, o_f = coarse_heads(views)
    _, _, refined = _refine(cfg, o_t, o_s, o_f, cam, weights)
    out_map = _front_map(refined)
    write_depth_png(out_map, args.out)
    print(f"pipeline: output density {out_map.density:.4f} -> {args.out}")
    return 0


def _cmd_eval(args):
    pred = read_depth_png(args.pred)
    gt = read_depth_png(args.gt)
    report = evaluate(pred, gt)
    scene = os.path.splitext(os.path.basename(args.pred))[0]
    rows = [metrics_row(scene, report), metrics_row("mean", report)]
    write_csv(METRIC_COLUMNS, rows, args.out)
    print(
        f"rmse={report.rmse_mm:.2f}mm mae={report.mae_mm:.2f}mm "
        f"delta1={report.delta1:.2f}% -> {args.out}"
    )
    return 0


def _parse_cloud(spec_str, cfg):
    if spec_str.startswith("synth:"):
        body = spec_str[len("synth:") :]
        try:
            seed_s, rays_s = body.split(",")
            seed, rays = int(seed_s), int(rays_s)
        except ValueError as exc:
            raise UsageError(f"bad synth cloud spec: {spec_str!r}") from exc
        return synth_lidar(rays, seed=seed)
    cam = _camera(cfg)
    return depth_to_points(_read_input(spec_str, cam), cam)


def _cmd_stats(args):
    cfg = load_config(args.config)
    points = _parse_cloud(args.cloud, cfg)
    rows = non_empty_stats(points, cfg.cubic_cell, cfg.spherical, cfg.distance_bins)
    header = [
        "range_lo",
        "range_hi",
        "cubic_occupied",
        "cubic_universe",
        "cubic_pct",
        "spherical_occupied",
        "spherical_universe",
        "spherical_pct",
    ]
    write_csv(
        header,
        [
            [
                r.lo,
                r.hi,
                r.cubic_occupied,
                r.cubic_universe,
                r.cubic_pct,
                r.spherical_occupied,
                r.spherical_universe,
                r.spherical_pct,
            ]
            for r in rows
        ],
        args.out,
    )
    for r in rows:
        print(
            f"[{r.lo:5.1f},{r.hi:5.1f}) cubic {r.cubic_pct:6.2f}%  "
            f"spherical {r.spherical_pct:6.2f}%"
        )
    return 0


def cli_run(argv):
    """Run the CLI on an argument list and return the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main(argv=None):
    return cli_run(sys.argv[1:] if argv is None else argv)
