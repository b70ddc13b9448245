"""File formats: 16-bit depth PNGs, coordinate PNGs, weights, CSV.

Depth maps travel as single-channel 16-bit PNGs with depth = raw / 256
meters and raw 0 marking invalid pixels.  Top/side view grids hold pixel
coordinates instead of depths; they use raw = coordinate + 1 with the
same 0-means-invalid rule.  All writers are atomic: they write to a
temporary file in the target directory and rename over the destination.
"""

import csv
import os
import struct
import tempfile

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, RangeError
from .grids import SparseDepthMap, round_half_away
from .projection import ViewGrid

__all__ = [
    "read_depth_png",
    "write_depth_png",
    "read_view_png",
    "write_view_png",
    "read_weights",
    "write_weights",
    "write_csv",
    "atomic_write_bytes",
    "WEIGHT_SHAPES",
]

_DEPTH_SCALE = 256.0
_ALLOWED_MODES = ("I;16", "I;16B", "I")


def atomic_write_bytes(path, payload):
    """Write payload to path via a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_png_raw(path):
    try:
        with Image.open(path) as img:
            if img.mode not in _ALLOWED_MODES:
                raise FormatError(
                    f"expected a single-channel 16-bit PNG, got mode {img.mode!r}"
                )
            raw = np.asarray(img, dtype=np.int64)
    except UnidentifiedImageError as exc:
        raise FormatError(f"not a PNG file: {path}") from exc
    if raw.ndim != 2:
        raise FormatError("PNG must be single-channel")
    if raw.min() < 0 or raw.max() > 65535:
        raise FormatError("pixel values exceed the 16-bit range")
    return raw


def _write_png_raw(path, raw):
    img = Image.fromarray(raw.astype(np.uint16))
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".png")
    os.close(fd)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_depth_png(path):
    """Depth map from a 16-bit PNG: meters = raw / 256, raw 0 invalid."""
    raw = _read_png_raw(path)
    return SparseDepthMap(raw / _DEPTH_SCALE, raw > 0)


def write_depth_png(depth_map, path):
    """Inverse of read_depth_png.

    Valid depths become round(depth * 256) clamped up to raw 1 so they
    stay valid; depths beyond the representable 16-bit range raise.
    """
    raw = np.zeros(depth_map.shape, dtype=np.int64)
    scaled = round_half_away(depth_map.depth * _DEPTH_SCALE)
    if np.any(scaled[depth_map.mask] > 65535):
        raise RangeError("depth exceeds the 16-bit PNG range (about 256 m)")
    raw[depth_map.mask] = np.maximum(scaled[depth_map.mask], 1).astype(np.int64)
    _write_png_raw(path, raw)


def read_view_png(path):
    """Coordinate grid from a 16-bit PNG: value = raw - 1, raw 0 invalid."""
    raw = _read_png_raw(path)
    return ViewGrid((raw - 1.0) * (raw > 0), raw > 0)


def write_view_png(view, path):
    """Inverse of read_view_png; values must be whole numbers in [0, 65534]."""
    vals = view.values[view.mask]
    if vals.size and (
        np.any(vals != np.floor(vals)) or np.any(vals < 0) or np.any(vals > 65534)
    ):
        raise RangeError("view values must be whole numbers in [0, 65534]")
    raw = np.zeros(view.shape, dtype=np.int64)
    raw[view.mask] = view.values[view.mask].astype(np.int64) + 1
    _write_png_raw(path, raw)


_MAGIC = b"TPVW1"

# rank plus fixed dimensions (None leaves a dimension free)
WEIGHT_SHAPES = {
    "filter3": (3, 3, 3),
    "h2c_front": (3, 3),
    "h2c_top": (3, 3),
    "h2c_side": (3, 3),
    "point_map.weight": (None, None),
    "point_map.bias": (None,),
    "affinity.weights": (None, None, None),
    "affinity.offsets": (None, None, None, 2),
}


def _check_weight_shape(name, shape):
    if name not in WEIGHT_SHAPES:
        raise FormatError(f"unknown weight name: {name!r}")
    want = WEIGHT_SHAPES[name]
    if len(shape) != len(want) or any(
        w is not None and w != s for w, s in zip(want, shape)
    ):
        raise FormatError(f"weight {name!r} has shape {shape}, expected {want}")


def read_weights(path):
    """Named float32 tensors from a weight container.

    Layout: magic "TPVW1", little-endian uint32 entry count, then per
    entry a uint16 name length, the UTF-8 name, a uint8 rank, rank
    uint32 dims, and the row-major float32 payload.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise FormatError("bad magic: not a TPVW1 weight file")
    off = len(_MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise FormatError("weight file truncated")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (count,) = take("<I")
    entries = {}
    for _ in range(count):
        (name_len,) = take("<H")
        if off + name_len > len(blob):
            raise FormatError("weight file truncated")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        if name in entries:
            raise FormatError(f"duplicate weight name: {name!r}")
        (rank,) = take("<B")
        dims = take(f"<{rank}I") if rank else ()
        _check_weight_shape(name, tuple(dims))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if off + 4 * n > len(blob):
            raise FormatError("weight file truncated")
        data = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
        off += 4 * n
        if not np.all(np.isfinite(data)):
            raise FormatError(f"weight {name!r} holds non-finite values")
        entries[name] = data.reshape(dims).copy()
    if off != len(blob):
        raise FormatError("trailing bytes after the declared entries")
    return entries


def write_weights(entries, path):
    """Inverse of read_weights; entries are written in sorted name order."""
    out = [_MAGIC, struct.pack("<I", len(entries))]
    for name in sorted(entries):
        arr = np.ascontiguousarray(entries[name], dtype="<f4")
        _check_weight_shape(name, arr.shape)
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    atomic_write_bytes(path, b"".join(out))


def write_csv(header, rows, path):
    """CSV with '.' decimals regardless of locale, written atomically."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow(
                    [repr(float(v)) if isinstance(v, float) else v for v in row]
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
