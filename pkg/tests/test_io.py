import os
import struct

import numpy as np
import pytest
from PIL import Image

from tridepth import (
    FormatError,
    RangeError,
    SparseDepthMap,
    ViewGrid,
    read_depth_png,
    read_view_png,
    read_weights,
    write_csv,
    write_depth_png,
    write_view_png,
    write_weights,
)


class TestDepthPng:
    def test_raw_256_is_one_meter(self, tmp_path):
        p = tmp_path / "one.png"
        Image.fromarray(np.array([[256]], dtype=np.uint16)).save(p)
        s = read_depth_png(p)
        assert s.depth[0, 0] == 1.0 and s.mask[0, 0]

    def test_zero_raw_is_invalid(self, tmp_path):
        p = tmp_path / "zero.png"
        Image.fromarray(np.array([[0, 512]], dtype=np.uint16)).save(p)
        s = read_depth_png(p)
        assert not s.mask[0, 0] and s.depth[0, 1] == 2.0

    def test_round_trip_on_quantized_values(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = rng.integers(0, 20000, (10, 12)).astype(np.float64)
        depth = raw / 256.0
        s = SparseDepthMap(depth, raw > 0)
        p = tmp_path / "rt.png"
        write_depth_png(s, p)
        back = read_depth_png(p)
        assert np.array_equal(back.depth, s.depth)
        assert np.array_equal(back.mask, s.mask)

    def test_tiny_depth_stays_valid(self, tmp_path):
        s = SparseDepthMap(np.array([[0.001]]), np.array([[True]]))
        p = tmp_path / "tiny.png"
        write_depth_png(s, p)
        back = read_depth_png(p)
        assert back.mask[0, 0]
        assert back.depth[0, 0] == 1.0 / 256.0

    def test_depth_beyond_16bit_rejected(self, tmp_path):
        s = SparseDepthMap(np.array([[256.0]]), np.array([[True]]))
        with pytest.raises(RangeError):
            write_depth_png(s, tmp_path / "big.png")

    def test_rejects_rgb_png(self, tmp_path):
        p = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(p)
        with pytest.raises(FormatError):
            read_depth_png(p)

    def test_rejects_non_png_bytes(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"not a png at all")
        with pytest.raises(FormatError):
            read_depth_png(p)

    def test_missing_file_is_oserror(self, tmp_path):
        with pytest.raises(OSError):
            read_depth_png(tmp_path / "absent.png")

    def test_failed_write_leaves_no_file(self, tmp_path):
        s = SparseDepthMap(np.array([[300.0]]), np.array([[True]]))
        target = tmp_path / "never.png"
        with pytest.raises(RangeError):
            write_depth_png(s, target)
        assert not target.exists()
        assert list(tmp_path.iterdir()) == []


class TestViewPng:
    def test_plus_one_offset(self, tmp_path):
        p = tmp_path / "v.png"
        Image.fromarray(np.array([[0, 1, 6]], dtype=np.uint16)).save(p)
        g = read_view_png(p)
        assert not g.mask[0, 0]
        assert g.values[0, 1] == 0.0 and g.mask[0, 1]
        assert g.values[0, 2] == 5.0

    def test_round_trip(self, tmp_path):
        vals = np.array([[0.0, 3.0], [65534.0, 0.0]])
        mask = np.array([[True, True], [True, False]])
        g = ViewGrid(vals, mask)
        p = tmp_path / "rt.png"
        write_view_png(g, p)
        back = read_view_png(p)
        assert np.array_equal(back.values, vals * mask)
        assert np.array_equal(back.mask, mask)

    def test_fractional_coordinate_rejected(self, tmp_path):
        g = ViewGrid(np.array([[2.5]]), np.array([[True]]))
        with pytest.raises(RangeError):
            write_view_png(g, tmp_path / "frac.png")

    def test_coordinate_too_large_rejected(self, tmp_path):
        g = ViewGrid(np.array([[65535.0]]), np.array([[True]]))
        with pytest.raises(RangeError):
            write_view_png(g, tmp_path / "big.png")


class TestWeights:
    def good_entries(self):
        rng = np.random.default_rng(1)
        return {
            "filter3": rng.normal(size=(3, 3, 3)).astype(np.float32),
            "h2c_front": rng.normal(size=(3, 3)).astype(np.float32),
            "h2c_top": rng.normal(size=(3, 3)).astype(np.float32),
            "h2c_side": rng.normal(size=(3, 3)).astype(np.float32),
            "point_map.weight": rng.normal(size=(6, 6)).astype(np.float32),
            "point_map.bias": rng.normal(size=(6,)).astype(np.float32),
            "affinity.weights": np.full((4, 5, 9), 0.05, np.float32),
            "affinity.offsets": rng.normal(size=(4, 5, 9, 2)).astype(np.float32),
        }

    def test_round_trip(self, tmp_path):
        entries = self.good_entries()
        p = tmp_path / "w.tpvw"
        write_weights(entries, p)
        back = read_weights(p)
        assert sorted(back) == sorted(entries)
        for name in entries:
            assert np.array_equal(back[name], entries[name])
            assert back[name].dtype == np.float32

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "w.tpvw"
        write_weights(self.good_entries(), p)
        blob = bytearray(p.read_bytes())
        blob[0] = ord("X")
        p.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            read_weights(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "w.tpvw"
        write_weights(self.good_entries(), p)
        blob = p.read_bytes()
        p.write_bytes(blob[:-3])
        with pytest.raises(FormatError):
            read_weights(p)

    def test_trailing_garbage(self, tmp_path):
        p = tmp_path / "w.tpvw"
        write_weights(self.good_entries(), p)
        p.write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            read_weights(p)

    def test_unknown_name_rejected(self, tmp_path):
        p = tmp_path / "w.tpvw"
        with pytest.raises(FormatError):
            write_weights({"mystery": np.zeros((3, 3), np.float32)}, p)

    def test_wrong_shape_rejected(self, tmp_path):
        p = tmp_path / "w.tpvw"
        with pytest.raises(FormatError):
            write_weights({"filter3": np.zeros((2, 2, 2), np.float32)}, p)

    def test_nonfinite_rejected(self, tmp_path):
        name = b"h2c_front"
        payload = np.full(9, np.nan, dtype="<f4").tobytes()
        blob = (
            b"TPVW1"
            + struct.pack("<I", 1)
            + struct.pack("<H", len(name))
            + name
            + struct.pack("<B", 2)
            + struct.pack("<2I", 3, 3)
            + payload
        )
        p = tmp_path / "w.tpvw"
        p.write_bytes(blob)
        with pytest.raises(FormatError):
            read_weights(p)

    def test_duplicate_name_rejected(self, tmp_path):
        arr = np.zeros(9, dtype="<f4").tobytes()
        one = (
            struct.pack("<H", 9)
            + b"h2c_front"
            + struct.pack("<B", 2)
            + struct.pack("<2I", 3, 3)
            + arr
        )
        blob = b"TPVW1" + struct.pack("<I", 2) + one + one
        p = tmp_path / "dup.tpvw"
        p.write_bytes(blob)
        with pytest.raises(FormatError):
            read_weights(p)


class TestCsv:
    def test_values_round_trip_via_repr(self, tmp_path):
        p = tmp_path / "t.csv"
        write_csv(["a", "b"], [["x", 0.1 + 0.2]], p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "a,b"
        name, val = lines[1].split(",")
        assert float(val) == 0.1 + 0.2
