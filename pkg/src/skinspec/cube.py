"""Multispectral image cube container and its on-disk format.

Layout: 4-byte magic ``MSC1``, a little-endian uint32 byte length, a UTF-8
JSON header (width, height, grid, units, endianness, dtype), then the pixel
data as little-endian float32, row-major, channel-fastest. Pixel data is
held as float32 so a save/load round trip is bitwise exact.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .spectral import Spectrum, WavelengthGrid, make_grid

logger = logging.getLogger(__name__)

MAGIC = b"MSC1"


class CubeParseError(ValueError):
    """Malformed cube stream; `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NegativeRadianceError(ValueError):
    pass


@dataclass(frozen=True)
class MultispectralCube:
    width: int
    height: int
    grid: WavelengthGrid
    data: np.ndarray  # (height, width, channels) float32

    def __post_init__(self):
        data = np.asarray(self.data)
        if not (data.dtype == np.float32 and data.flags.c_contiguous
                and not data.flags.writeable):
            # copy rather than freeze the caller's array in place
            data = np.array(data, dtype=np.float32, order="C")
            data.flags.writeable = False
        expected = (self.height, self.width, self.grid.count)
        if data.shape != expected:
            raise ValueError(f"cube data has shape {data.shape}, "
                             f"expected {expected}")
        if not np.all(np.isfinite(data)):
            raise ValueError("cube data must be finite")
        if np.any(data < 0):
            raise NegativeRadianceError("cube data must be non-negative")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, data: np.ndarray, grid: WavelengthGrid
                   ) -> "MultispectralCube":
        data = np.asarray(data)
        if data.ndim != 3:
            raise ValueError("cube data must be H x W x D")
        return cls(width=data.shape[1], height=data.shape[0], grid=grid,
                   data=data)

    def pixel(self, x: int, y: int) -> Spectrum:
        """Observed radiance at (x, y) as a float64 spectrum."""
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"pixel ({x}, {y}) outside "
                             f"{self.width}x{self.height} cube")
        return Spectrum(self.grid, self.data[y, x].astype(np.float64))


def _header_dict(cube: MultispectralCube) -> dict:
    return {
        "width": cube.width,
        "height": cube.height,
        "grid": {
            "lambda_min": cube.grid.lambda_min,
            "lambda_max": cube.grid.lambda_max,
            "count": cube.grid.count,
        },
        "units": "radiance",
        "endianness": "little",
        "dtype": "float32",
    }


def save_cube(cube: MultispectralCube, dest: str | Path | BinaryIO) -> None:
    header = json.dumps(_header_dict(cube), sort_keys=True).encode("utf-8")
    payload = cube.data.astype("<f4", copy=False).tobytes(order="C")
    blob = MAGIC + struct.pack("<I", len(header)) + header + payload
    if isinstance(dest, (str, Path)):
        Path(dest).write_bytes(blob)
    else:
        dest.write(blob)


def _read_all(source: str | Path | BinaryIO) -> bytes:
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _header_int(header: dict, key: str, offset: int) -> int:
    value = header.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise CubeParseError(f"header field {key!r} must be a positive "
                             f"integer, got {value!r}", offset)
    return value


def load_cube(source: str | Path | BinaryIO) -> MultispectralCube:
    blob = _read_all(source)
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise CubeParseError("bad magic, expected 'MSC1'", 0)
    if len(blob) < 8:
        raise CubeParseError("truncated header length field", 4)
    header_len = struct.unpack("<I", blob[4:8])[0]
    header_end = 8 + header_len
    if len(blob) < header_end:
        raise CubeParseError("truncated header", 8)
    try:
        header = json.loads(blob[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CubeParseError(f"header is not valid JSON: {exc}", 8) from None
    if not isinstance(header, dict):
        raise CubeParseError("header must be a JSON object", 8)

    if header.get("endianness", "little") != "little":
        raise CubeParseError("only little-endian data is supported", 8)
    if header.get("dtype", "float32") != "float32":
        raise CubeParseError("only float32 data is supported", 8)
    width = _header_int(header, "width", 8)
    height = _header_int(header, "height", 8)
    grid_spec = header.get("grid")
    if not isinstance(grid_spec, dict):
        raise CubeParseError("header field 'grid' must be an object", 8)
    try:
        grid = make_grid(float(grid_spec["lambda_min"]),
                         float(grid_spec["lambda_max"]),
                         int(grid_spec["count"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise CubeParseError(f"bad grid in header: {exc}", 8) from None

    expected = width * height * grid.count * 4
    actual = len(blob) - header_end
    if actual != expected:
        raise CubeParseError(
            f"data section holds {actual} bytes, expected {expected} "
            f"({width}x{height}x{grid.count} float32)", header_end)
    data = np.frombuffer(blob[header_end:], dtype="<f4").reshape(
        height, width, grid.count)
    if np.any(data < 0):
        raise NegativeRadianceError("cube stream contains negative radiance")
    return MultispectralCube(width=width, height=height, grid=grid, data=data)


def _interp_weights(src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
    """Matrix W with W @ f(src) = linear interp of f at tgt, endpoints held."""
    w = np.zeros((tgt.shape[0], src.shape[0]))
    for i, lam in enumerate(tgt):
        if lam <= src[0]:
            w[i, 0] = 1.0
        elif lam >= src[-1]:
            w[i, -1] = 1.0
        else:
            j = int(np.searchsorted(src, lam, side="right")) - 1
            t = (lam - src[j]) / (src[j + 1] - src[j])
            w[i, j] = 1.0 - t
            w[i, j + 1] = t
    return w


def resample_cube(cube: MultispectralCube, grid: WavelengthGrid
                  ) -> MultispectralCube:
    """Linearly resample along wavelength; outside samples hold endpoints."""
    if cube.grid == grid:
        return cube
    logger.warning(
        "resampling cube from %g-%g nm x%d to %g-%g nm x%d "
        "(endpoint hold outside source range)",
        cube.grid.lambda_min, cube.grid.lambda_max, cube.grid.count,
        grid.lambda_min, grid.lambda_max, grid.count)
    weights = _interp_weights(cube.grid.samples, grid.samples)
    data = cube.data.astype(np.float64) @ weights.T
    return MultispectralCube(width=cube.width, height=cube.height, grid=grid,
                             data=np.clip(data, 0.0, None))
