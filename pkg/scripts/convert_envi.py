"""Convert an ENVI image (header + raw data pair) to the .msc cube format.

Handles the common interleaves (bsq, bil, bip), integer and float sample
types, and both byte orders. Band wavelengths are read from the header; if
they are uniformly spaced they become the cube grid as-is, otherwise the
bands are linearly interpolated onto a uniform grid spanning the same
range. Negative samples (dark-current artefacts) are clipped to zero.

Usage: python3 scripts/convert_envi.py capture.hdr out.msc [--scale S]
"""

import argparse
import re
from pathlib import Path

import numpy as np

from skinspec.cube import MultispectralCube, save_cube
from skinspec.spectral import make_grid

DTYPES = {1: "u1", 2: "i2", 3: "i4", 4: "f4", 5: "f8", 12: "u2", 13: "u4"}
DATA_SUFFIXES = ("", ".img", ".dat", ".raw", ".bsq", ".bil", ".bip")


def parse_header(text: str) -> dict:
    if not text.lstrip().lower().startswith("envi"):
        raise ValueError("not an ENVI header (missing ENVI magic line)")
    # fold multi-line { ... } blocks before splitting into key = value pairs
    text = re.sub(r"\{[^}]*\}", lambda m: m.group(0).replace("\n", " "), text)
    fields = {}
    for line in text.splitlines()[1:]:
        if "=" not in line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip().lower()] = value.strip()
    return fields


def parse_list(value: str) -> list[float]:
    return [float(tok) for tok in value.strip("{} \t").split(",") if tok.strip()]


def find_data_file(hdr_path: Path) -> Path:
    for suffix in DATA_SUFFIXES:
        candidate = hdr_path.with_suffix(suffix)
        if candidate != hdr_path and candidate.is_file():
            return candidate
    raise FileNotFoundError(f"no data file found next to {hdr_path}")


def load_envi(hdr_path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (data as H x W x B float64, band wavelengths in nm)."""
    fields = parse_header(hdr_path.read_text())
    width = int(fields["samples"])
    height = int(fields["lines"])
    bands = int(fields["bands"])
    code = int(fields["data type"])
    if code not in DTYPES:
        raise ValueError(f"unsupported ENVI data type {code}")
    order = ">" if int(fields.get("byte order", "0")) else "<"
    dtype = np.dtype(order + DTYPES[code])
    offset = int(fields.get("header offset", "0"))
    interleave = fields.get("interleave", "bsq").lower()

    if "wavelength" not in fields:
        raise ValueError("header has no wavelength block")
    wavelengths = np.array(parse_list(fields["wavelength"]))
    if wavelengths.size != bands:
        raise ValueError(f"{wavelengths.size} wavelengths for {bands} bands")
    units = fields.get("wavelength units", "nanometers").lower()
    if units.startswith("micro"):
        wavelengths = wavelengths * 1000.0

    raw = np.fromfile(find_data_file(hdr_path), dtype=dtype, offset=offset,
                      count=width * height * bands)
    if raw.size != width * height * bands:
        raise ValueError("data file shorter than header promises")
    if interleave == "bsq":
        data = raw.reshape(bands, height, width).transpose(1, 2, 0)
    elif interleave == "bil":
        data = raw.reshape(height, bands, width).transpose(0, 2, 1)
    elif interleave == "bip":
        data = raw.reshape(height, width, bands)
    else:
        raise ValueError(f"unsupported interleave {interleave!r}")
    return data.astype(np.float64), wavelengths


def to_uniform(data: np.ndarray, wavelengths: np.ndarray):
    """Interpolate bands onto a uniform grid when the source is not."""
    steps = np.diff(wavelengths)
    if np.any(steps <= 0):
        raise ValueError("wavelengths must be strictly increasing")
    grid = make_grid(wavelengths[0], wavelengths[-1], wavelengths.size)
    if np.ptp(steps) < 1e-6 * steps.mean():
        return data, grid
    # interpolation weights are shared by every pixel, so compute them once
    h, w, b = data.shape
    flat = data.reshape(h * w, b)
    idx = np.clip(np.searchsorted(wavelengths, grid.samples) - 1, 0, b - 2)
    lo, hi = wavelengths[idx], wavelengths[idx + 1]
    frac = np.clip((grid.samples - lo) / (hi - lo), 0.0, 1.0)
    out = flat[:, idx] * (1.0 - frac) + flat[:, idx + 1] * frac
    return out.reshape(h, w, b), grid


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("header", type=Path, help="ENVI .hdr file")
    ap.add_argument("out", type=Path, help="output cube path (.msc)")
    ap.add_argument("--scale", type=float, default=1.0,
                    help="multiply all samples (unit conversion)")
    args = ap.parse_args(argv)

    data, wavelengths = load_envi(args.header)
    data, grid = to_uniform(data, wavelengths)
    data = data * args.scale

    negatives = int(np.sum(data < 0))
    if negatives:
        print(f"clipping {negatives} negative samples to zero")
        data = np.clip(data, 0.0, None)

    cube = MultispectralCube.from_array(data.astype(np.float32), grid)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_cube(cube, args.out)
    print(f"wrote {args.out} ({cube.width}x{cube.height}, "
          f"{grid.count} bands {grid.lambda_min:g}-{grid.lambda_max:g} nm)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
