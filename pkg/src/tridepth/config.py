"""Strict JSON scene configuration.

Every section is optional and falls back to package defaults; unknown
keys anywhere are rejected so configs cannot drift silently.  Angles in
the file are degrees (converted to radians on load).
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grids import CameraIntrinsics, DepthBinning
from .spherical import SphericalBinning, make_distance_aware_binning

__all__ = ["SceneConfig", "load_config", "parse_config"]


@dataclass(frozen=True)
class SceneConfig:
    """Parsed scene configuration; see load_config for the file schema."""

    camera: CameraIntrinsics
    depth_binning: DepthBinning
    spherical: SphericalBinning
    fusion_k: int
    fusion_steps: int
    gspn_neighbors: int
    gspn_iterations: int
    sigma_g: float
    sigma_s: float
    lam: float
    cubic_cell: float
    distance_bins: tuple
    weights_path: str


_DEFAULTS = {
    "camera": None,
    "depth_binning": {"d_min": 0.0, "d_max": 80.0, "bins": 256},
    "spherical": {
        "w0": 1.0,
        "rho": 1.15,
        "dtheta_deg": 2.0,
        "dphi_deg": 2.0,
        "r_max": 80.0,
        "theta_range_deg": [0.0, 180.0],
        "phi_range_deg": [-180.0, 180.0],
    },
    "fusion": {"k": 9, "steps": 4},
    "gspn": {"n_neighbors": 9, "iterations": 4},
    "affinity": {"sigma_g": 1.0, "sigma_s": 1.0, "lam": 0.9},
    "stats": {
        "cubic_cell": 0.4,
        "distance_bins": [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
    },
    "paths": {"weights": None},
}


_CAMERA_KEYS = {"fx", "fy", "cx", "cy", "width", "height"}


def _section(raw, name):
    given = raw.get(name)
    defaults = _DEFAULTS[name]
    allowed = _CAMERA_KEYS if name == "camera" else set(defaults)
    merged = dict(defaults) if isinstance(defaults, dict) else {}
    if given is None:
        return merged
    if not isinstance(given, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    merged.update(given)
    return merged


def _number(section, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number")
    return value


def parse_config(raw):
    """SceneConfig from a parsed JSON object (strict keys)."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    cam_raw = raw.get("camera")
    camera = None
    if cam_raw is not None:
        cam = _section(raw, "camera")
        missing = {"fx", "fy", "cx", "cy", "width", "height"} - set(cam)
        if missing:
            raise ConfigError(f"camera section lacks keys: {sorted(missing)}")
        camera = CameraIntrinsics(
            fx=_number("camera", "fx", cam["fx"]),
            fy=_number("camera", "fy", cam["fy"]),
            cx=_number("camera", "cx", cam["cx"]),
            cy=_number("camera", "cy", cam["cy"]),
            width=int(_number("camera", "width", cam["width"])),
            height=int(_number("camera", "height", cam["height"])),
        )

    db = _section(raw, "depth_binning")
    depth_binning = DepthBinning(
        d_min=_number("depth_binning", "d_min", db["d_min"]),
        d_max=_number("depth_binning", "d_max", db["d_max"]),
        bins=int(_number("depth_binning", "bins", db["bins"])),
    )

    sp = _section(raw, "spherical")
    for key in ("theta_range_deg", "phi_range_deg"):
        if not (isinstance(sp[key], (list, tuple)) and len(sp[key]) == 2):
            raise ConfigError(f"spherical.{key} must be a [lo, hi] pair")
    spherical = make_distance_aware_binning(
        r_max=_number("spherical", "r_max", sp["r_max"]),
        w0=_number("spherical", "w0", sp["w0"]),
        rho=_number("spherical", "rho", sp["rho"]),
        delta_theta=np.deg2rad(_number("spherical", "dtheta_deg", sp["dtheta_deg"])),
        delta_phi=np.deg2rad(_number("spherical", "dphi_deg", sp["dphi_deg"])),
        theta_range=tuple(np.deg2rad(sp["theta_range_deg"])),
        phi_range=tuple(np.deg2rad(sp["phi_range_deg"])),
    )

    fu = _section(raw, "fusion")
    gs = _section(raw, "gspn")
    af = _section(raw, "affinity")
    st = _section(raw, "stats")
    bins = st["distance_bins"]
    if not isinstance(bins, (list, tuple)) or len(bins) < 2:
        raise ConfigError("stats.distance_bins must list at least two edges")
    pt = _section(raw, "paths")
    weights = pt["weights"]
    if weights is not None and not isinstance(weights, str):
        raise ConfigError("paths.weights must be a string")

    return SceneConfig(
        camera=camera,
        depth_binning=depth_binning,
        spherical=spherical,
        fusion_k=int(_number("fusion", "k", fu["k"])),
        fusion_steps=int(_number("fusion", "steps", fu["steps"])),
        gspn_neighbors=int(_number("gspn", "n_neighbors", gs["n_neighbors"])),
        gspn_iterations=int(_number("gspn", "iterations", gs["iterations"])),
        sigma_g=_number("affinity", "sigma_g", af["sigma_g"]),
        sigma_s=_number("affinity", "sigma_s", af["sigma_s"]),
        lam=_number("affinity", "lam", af["lam"]),
        cubic_cell=_number("stats", "cubic_cell", st["cubic_cell"]),
        distance_bins=tuple(float(b) for b in bins),
        weights_path=weights,
    )


def load_config(path):
    """Parse a JSON config file into a SceneConfig."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)
