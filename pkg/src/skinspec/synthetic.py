"""Synthetic data generators for tests, fixtures, and classifier training.

Everything is seeded and deterministic. Skin samples come from the forward
model at random feasible parameters; non-skin distractors are smooth random
positive spectra with no skin structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import MultispectralCube
from .skin import (
    BioParams,
    F_BLOOD_MAX,
    F_BLOOD_MIN,
    F_MEL_MAX,
    F_MEL_MIN,
    SkinOptics,
    SkinParams,
)
from .spectral import Spectrum, WavelengthGrid, default_grid

DIFFUSE_RANGE = (0.2, 2.0)
SPECULAR_RANGE = (0.0, 0.5)


def random_skin_params(rng: np.random.Generator, n: int) -> list[SkinParams]:
    """Uniform draws over the feasible shading and fraction ranges."""
    i_d = rng.uniform(*DIFFUSE_RANGE, size=n)
    i_s = rng.uniform(*SPECULAR_RANGE, size=n)
    f_mel = rng.uniform(F_MEL_MIN, F_MEL_MAX, size=n)
    f_blood = rng.uniform(F_BLOOD_MIN, F_BLOOD_MAX, size=n)
    return [
        SkinParams(float(i_d[k]), float(i_s[k]),
                   BioParams(float(f_mel[k]), float(f_blood[k])))
        for k in range(n)
    ]


def radiance_matrix(params: list[SkinParams], illuminant: Spectrum,
                    optics: SkinOptics) -> np.ndarray:
    """Stack noiseless model radiance for each parameter set, (N, D)."""
    f_mel = np.array([p.bio.f_mel for p in params])
    f_blood = np.array([p.bio.f_blood for p in params])
    i_d = np.array([p.diffuse for p in params])
    i_s = np.array([p.specular for p in params])
    refl = optics.reflectance(f_mel[:, None], f_blood[:, None])
    return illuminant.values * (i_d[:, None] * refl + i_s[:, None])


def skin_radiance_samples(n: int, illuminant: Spectrum, optics: SkinOptics,
                          rng: np.random.Generator, noise: float = 0.01
                          ) -> tuple[list[SkinParams], np.ndarray]:
    """Random skin pixels with multiplicative Gaussian noise, (params, N x D)."""
    params = random_skin_params(rng, n)
    clean = radiance_matrix(params, illuminant, optics)
    if noise > 0:
        clean = clean * (1.0 + noise * rng.standard_normal(clean.shape))
    return params, np.clip(clean, 0.0, None)


def distractor_spectra(n: int, grid: WavelengthGrid,
                       rng: np.random.Generator) -> np.ndarray:
    """Smooth positive non-skin spectra: softplus of random cubics, (N, D)."""
    t = np.linspace(-1.0, 1.0, grid.count)
    coeffs = rng.standard_normal((n, 4))
    poly = (coeffs[:, 0:1] + coeffs[:, 1:2] * t + coeffs[:, 2:3] * t ** 2
            + coeffs[:, 3:4] * t ** 3)
    return np.log1p(np.exp(-np.abs(poly))) + np.maximum(poly, 0.0)


@dataclass(frozen=True)
class SyntheticFace:
    """A small face-like test scene with known per-pixel ground truth."""

    cube: MultispectralCube
    diffuse: np.ndarray
    specular: np.ndarray
    f_mel: np.ndarray
    f_blood: np.ndarray
    skin_mask: np.ndarray  # bool, True inside the face ellipse


def make_face_cube(width: int = 24, height: int = 32,
                   illuminant: Spectrum | None = None,
                   optics: SkinOptics | None = None,
                   noise: float = 0.0, seed: int = 0) -> SyntheticFace:
    """Elliptical skin region over a dark background.

    Parameter fields vary smoothly across the face; a small specular blob
    sits off-centre to exercise highlight edits. Background pixels are
    exactly zero so they classify as dark.
    """
    if optics is None:
        optics = SkinOptics.build(default_grid())
    if illuminant is None:
        illuminant = Spectrum(optics.grid, np.full(optics.grid.count, 1.0))

    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:height, 0:width]
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    ey, ex = height * 0.42, width * 0.38
    mask = ((ys - cy) / ey) ** 2 + ((xs - cx) / ex) ** 2 <= 1.0

    u = (xs - cx) / max(ex, 1.0)
    v = (ys - cy) / max(ey, 1.0)
    f_mel = 0.10 + 0.12 * (u + 1.0) / 2.0 + 0.03 * np.sin(2.5 * v)
    f_blood = 0.035 + 0.015 * (v + 1.0) / 2.0
    diffuse = 0.9 + 0.5 * np.exp(-(u ** 2 + v ** 2))
    blob = np.exp(-(((xs - cx - ex * 0.35) / (width * 0.08)) ** 2
                    + ((ys - cy + ey * 0.3) / (height * 0.08)) ** 2))
    specular = 0.25 * blob

    f_mel = np.clip(f_mel, F_MEL_MIN, F_MEL_MAX)
    f_blood = np.clip(f_blood, F_BLOOD_MIN, F_BLOOD_MAX)
    diffuse[~mask] = 0.0
    specular[~mask] = 0.0
    # dark-pixel placeholders outside the face, matching the fitter's
    # convention for pixels it skips
    f_mel[~mask] = 0.5 * (F_MEL_MIN + F_MEL_MAX)
    f_blood[~mask] = 0.5 * (F_BLOOD_MIN + F_BLOOD_MAX)

    refl = optics.reflectance(f_mel[..., None], f_blood[..., None])
    data = illuminant.values * (diffuse[..., None] * refl
                                + specular[..., None])
    data[~mask] = 0.0
    if noise > 0:
        data = data * (1.0 + noise * rng.standard_normal(data.shape))
        data = np.clip(data, 0.0, None)
    cube = MultispectralCube.from_array(data.astype(np.float32), optics.grid)
    return SyntheticFace(cube=cube, diffuse=diffuse, specular=specular,
                         f_mel=f_mel, f_blood=f_blood, skin_mask=mask)
