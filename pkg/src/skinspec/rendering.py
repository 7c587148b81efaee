"""Spectral radiance to nonlinear sRGB.

The chain is: camera responses (raw = S^T l), von Kries white balance
against the illuminant's white response, a 3x3 matrix to linear sRGB, a
hard clamp to [0,1], then a single-exponent gamma (default 2.4).

The sRGB matrix rows are renormalized so a perfect white reflector maps to
exactly (1,1,1): published matrix roundings would otherwise leak a ~1e-4
channel spread through the white balance.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np
from PIL import Image

from .cube import MultispectralCube
from .datafiles import load_cmf
from .skin import SkinOptics, F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN
from .spectral import (
    Spectrum,
    TabulatedFunction,
    WavelengthGrid,
    load_tables,
    require_same_grid,
    resample,
)

# IEC 61966-2-1 XYZ (D65) to linear sRGB
XYZ_TO_LINEAR_SRGB = np.array([
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
])

LINEAR_LUMINANCE_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])

DEFAULT_GAMMA = 2.4


class WhitePointError(ValueError):
    """A sensitivity channel has zero response to the illuminant."""


@dataclass(frozen=True)
class CameraSensitivity:
    """Three non-negative spectral sensitivity curves on a common grid."""

    grid: WavelengthGrid
    values: np.ndarray  # (D, 3)
    is_cmf: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.count, 3):
            raise ValueError(f"sensitivities must be (D, 3), got {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("sensitivities must be finite and non-negative")
        if np.any(values.max(axis=0) <= 0):
            raise ValueError("each channel needs a strictly positive sample")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_cie_cmf(cls, grid: WavelengthGrid) -> "CameraSensitivity":
        """Standard observer curves as the default stand-in camera."""
        xbar, ybar, zbar = load_cmf()
        values = np.stack([resample(t, grid).values for t in (xbar, ybar, zbar)],
                          axis=1)
        return cls(grid=grid, values=values, is_cmf=True)

    @classmethod
    def from_tables(cls, tables: tuple[TabulatedFunction, ...],
                    grid: WavelengthGrid) -> "CameraSensitivity":
        if len(tables) != 3:
            raise ValueError("expected three sensitivity curves (R, G, B)")
        values = np.stack([resample(t, grid, extrapolate=True).values
                           for t in tables], axis=1)
        return cls(grid=grid, values=values, is_cmf=False)

    @classmethod
    def from_csv(cls, source, grid: WavelengthGrid) -> "CameraSensitivity":
        """4-column CSV: wavelength_nm, R, G, B."""
        return cls.from_tables(load_tables(source, expect_columns=3), grid)


@dataclass(frozen=True)
class ColorPipeline:
    sensitivities: CameraSensitivity
    illuminant: Spectrum
    transform: np.ndarray  # (3, 3)
    gamma: float = DEFAULT_GAMMA
    # Re-applies the illuminant to the input before the sensor inner
    # product, for callers that feed reflectance instead of radiance.
    reapply_illuminant: bool = False

    def __post_init__(self):
        transform = np.asarray(self.transform, dtype=np.float64)
        if transform.shape != (3, 3) or not np.all(np.isfinite(transform)):
            raise ValueError("transform must be a finite 3x3 matrix")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        transform = transform.copy()
        transform.flags.writeable = False
        object.__setattr__(self, "transform", transform)

    @property
    def grid(self) -> WavelengthGrid:
        return self.sensitivities.grid


def _row_normalized(m: np.ndarray) -> np.ndarray:
    sums = m.sum(axis=1, keepdims=True)
    if np.any(np.abs(sums) < 1e-12):
        raise ValueError("degenerate colour matrix: zero row sum")
    return m / sums


def _reference_patches(grid: WavelengthGrid) -> np.ndarray:
    """24 deterministic reflectance spectra used to fit camera matrices."""
    lam = grid.samples
    span = lam[-1] - lam[0]
    t = (lam - lam[0]) / span
    patches = []
    for level in (0.04, 0.2, 0.35, 0.5, 0.7, 0.9):
        patches.append(np.full_like(t, level))
    centers = np.linspace(lam[0] + 20, lam[-1] - 20, 9)
    for c in centers:
        patches.append(0.1 + 0.8 * np.exp(-0.5 * ((lam - c) / 40.0) ** 2))
    patches.append(0.05 + 0.9 * t)
    patches.append(0.95 - 0.9 * t)
    patches.append(0.05 + 0.9 * t * t * (3 - 2 * t))
    patches.append(0.95 - 0.9 * t * t * (3 - 2 * t))
    for c in np.linspace(0.25, 0.75, 5):
        patches.append(0.05 + 0.85 / (1.0 + np.exp(-(t - c) * 14.0)))
    out = np.stack(patches)
    assert out.shape == (24, grid.count)
    return out


def _white_response(sens: CameraSensitivity, illuminant: Spectrum
                    ) -> np.ndarray:
    w = illuminant.values @ sens.values
    if np.any(w <= 0):
        raise WhitePointError("illuminant gives zero response in a channel")
    return w


def build_pipeline(sensitivities: CameraSensitivity, illuminant: Spectrum,
                   gamma: float = DEFAULT_GAMMA,
                   reapply_illuminant: bool = False) -> ColorPipeline:
    """White-balanced sensor-to-sRGB transform for this illuminant."""
    require_same_grid(sensitivities.grid, illuminant.grid,
                      "sensitivities and illuminant")
    w = _white_response(sensitivities, illuminant)
    if sensitivities.is_cmf:
        # scale the white point back in before the standard matrix
        mixer = _row_normalized(XYZ_TO_LINEAR_SRGB @ np.diag(w / w[1]))
    else:
        mixer = _row_normalized(
            _fit_camera_matrix(sensitivities, illuminant, w))
    transform = mixer @ np.diag(1.0 / w)
    return ColorPipeline(sensitivities=sensitivities, illuminant=illuminant,
                         transform=transform, gamma=gamma,
                         reapply_illuminant=reapply_illuminant)


def _fit_camera_matrix(sens: CameraSensitivity, illuminant: Spectrum,
                       w: np.ndarray) -> np.ndarray:
    """Least-squares map from balanced camera responses to reference sRGB."""
    reference = build_pipeline(
        CameraSensitivity.from_cie_cmf(sens.grid), illuminant)
    patches = _reference_patches(sens.grid)
    stimuli = patches * illuminant.values
    x = (stimuli @ sens.values) / w              # (24, 3) balanced camera
    y = stimuli @ reference.sensitivities.values @ reference.transform.T
    m, *_ = np.linalg.lstsq(x, y, rcond=None)
    return m.T


def render_linear_image(pipeline: ColorPipeline, cube: MultispectralCube
                        ) -> np.ndarray:
    """Clamped linear RGB per pixel, (H, W, 3) float, before gamma."""
    require_same_grid(pipeline.grid, cube.grid, "pipeline and cube")
    data = cube.data.astype(np.float64)
    if pipeline.reapply_illuminant:
        data = data * pipeline.illuminant.values
    raw = data @ pipeline.sensitivities.values
    linear = raw @ pipeline.transform.T
    return np.clip(linear, 0.0, 1.0)


def render_pixel(pipeline: ColorPipeline, l: Spectrum) -> np.ndarray:
    """Nonlinear sRGB triple in [0,1] for one radiance spectrum."""
    require_same_grid(pipeline.grid, l.grid, "pipeline and spectrum")
    values = l.values
    if pipeline.reapply_illuminant:
        values = values * pipeline.illuminant.values
    raw = values @ pipeline.sensitivities.values
    linear = np.clip(pipeline.transform @ raw, 0.0, 1.0)
    return linear ** (1.0 / pipeline.gamma)


def render_image(pipeline: ColorPipeline, cube: MultispectralCube
                 ) -> np.ndarray:
    """8-bit sRGB image, (H, W, 3) uint8."""
    linear = render_linear_image(pipeline, cube)
    encoded = linear ** (1.0 / pipeline.gamma)
    return np.rint(255.0 * encoded).astype(np.uint8)


def linear_luminance(rgb_linear: np.ndarray) -> np.ndarray:
    """Relative luminance of linear sRGB values (last axis length 3)."""
    return np.asarray(rgb_linear) @ LINEAR_LUMINANCE_WEIGHTS


def decode_to_linear(img: np.ndarray, gamma: float = DEFAULT_GAMMA
                     ) -> np.ndarray:
    """Invert the 8-bit gamma encoding back to linear RGB floats."""
    return (np.asarray(img, dtype=np.float64) / 255.0) ** gamma


def gamut_swatch(optics: SkinOptics, pipeline: ColorPipeline,
                 resolution: int = 64) -> np.ndarray:
    """Rendered fraction box: melanin left to right, blood top to bottom."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    require_same_grid(optics.grid, pipeline.grid, "optics and pipeline")
    f_mel = np.linspace(F_MEL_MIN, F_MEL_MAX, resolution)
    f_blood = np.linspace(F_BLOOD_MIN, F_BLOOD_MAX, resolution)
    refl = optics.reflectance(f_mel[None, :, None], f_blood[:, None, None])
    data = (refl * pipeline.illuminant.values).astype(np.float32)
    cube = MultispectralCube.from_array(data, optics.grid)
    return render_image(pipeline, cube)


def write_png(img: np.ndarray, dest: str | Path | BinaryIO) -> None:
    image = Image.fromarray(np.asarray(img, dtype=np.uint8))
    if isinstance(dest, (str, Path)):
        image.save(str(dest), format="PNG")
    else:
        image.save(dest, format="PNG")


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_png(img, buf)
    return buf.getvalue()


def read_png(source: str | Path | BinaryIO) -> np.ndarray:
    with Image.open(source) as image:
        return np.asarray(image)
