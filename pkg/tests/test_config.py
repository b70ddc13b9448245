import json

import numpy as np
import pytest

from tridepth import ConfigError, load_config, parse_config


def write(tmp_path, payload):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(payload))
    return p


CAMERA = {"fx": 30.0, "fy": 31.0, "cx": 16.0, "cy": 12.0, "width": 32, "height": 24}


class TestDefaults:
    def test_empty_config_gets_defaults(self):
        cfg = parse_config({})
        assert cfg.camera is None
        assert cfg.depth_binning.bins == 256
        assert cfg.depth_binning.d_max == 80.0
        assert cfg.fusion_k == 9 and cfg.fusion_steps == 4
        assert cfg.gspn_neighbors == 9 and cfg.gspn_iterations == 4
        assert cfg.lam == 0.9
        assert cfg.cubic_cell == 0.4
        assert cfg.distance_bins == tuple(float(x) for x in range(0, 81, 10))
        assert cfg.weights_path is None

    def test_spherical_defaults_in_radians(self):
        cfg = parse_config({})
        assert cfg.spherical.delta_theta == pytest.approx(np.deg2rad(2.0))
        assert cfg.spherical.delta_phi == pytest.approx(np.deg2rad(2.0))
        assert cfg.spherical.r_max == 80.0

    def test_camera_section_parsed(self):
        cfg = parse_config({"camera": dict(CAMERA)})
        assert cfg.camera.shape == (24, 32)
        assert cfg.camera.fy == 31.0


class TestRejections:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            parse_config({"cameraz": {}})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError):
            parse_config({"fusion": {"k": 5, "notak": 1}})

    def test_partial_camera(self):
        cam = dict(CAMERA)
        del cam["fy"]
        with pytest.raises(ConfigError):
            parse_config({"camera": cam})

    def test_bool_is_not_a_number(self):
        with pytest.raises(ConfigError):
            parse_config({"fusion": {"k": True}})

    def test_distance_bins_need_two_edges(self):
        with pytest.raises(ConfigError):
            parse_config({"stats": {"distance_bins": [5.0]}})

    def test_weights_path_must_be_string(self):
        with pytest.raises(ConfigError):
            parse_config({"paths": {"weights": 7}})

    def test_angle_ranges_need_pairs(self):
        with pytest.raises(ConfigError):
            parse_config({"spherical": {"theta_range_deg": [0.0]}})


class TestOverrides:
    def test_degrees_convert_to_radians(self):
        cfg = parse_config({"spherical": {"dtheta_deg": 4.0, "dphi_deg": 5.0}})
        assert cfg.spherical.delta_theta == pytest.approx(np.deg2rad(4.0))
        assert cfg.spherical.delta_phi == pytest.approx(np.deg2rad(5.0))

    def test_radial_growth_overrides(self):
        cfg = parse_config({"spherical": {"w0": 1.0, "rho": 2.0, "r_max": 7.0}})
        assert cfg.spherical.r_edges == (0.0, 1.0, 3.0, 7.0)

    def test_loop_counts(self):
        cfg = parse_config(
            {"fusion": {"k": 5, "steps": 2}, "gspn": {"n_neighbors": 8, "iterations": 6}}
        )
        assert (cfg.fusion_k, cfg.fusion_steps) == (5, 2)
        assert (cfg.gspn_neighbors, cfg.gspn_iterations) == (8, 6)


class TestLoadConfig:
    def test_reads_file(self, tmp_path):
        cfg = load_config(write(tmp_path, {"camera": dict(CAMERA)}))
        assert cfg.camera is not None

    def test_bad_json_is_config_error(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_missing_file_is_oserror(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.json")
