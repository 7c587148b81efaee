"""Two-layer biophysical skin reflectance and the dichromatic radiance model.

The epidermis attenuates light by melanin absorption (Lambert-Beer, traversed
twice), the dermis reflects diffusely with haemoglobin absorption through the
semi-infinite Kubelka-Munk solution. Spectral radiance follows the
dichromatic split into a diffuse body term carrying the skin reflectance and
a specular surface term carrying the illuminant directly:

    l_k = e_k * (diffuse * r_k + specular)

Only the melanin and blood volume fractions vary per pixel; every other
optical constant is held in :class:`OpticsConstants` and can be overridden
via configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import datafiles
from .spectral import (
    Spectrum,
    TabulatedFunction,
    WavelengthGrid,
    require_same_grid,
)

# Plausible ranges for healthy skin; fitting and editing clamp to these.
F_MEL_MIN = 0.013
F_MEL_MAX = 0.43
F_BLOOD_MIN = 0.02
F_BLOOD_MAX = 0.07

LN10 = math.log(10.0)

# Exponents of the reduced-scattering power laws (Mie and Rayleigh terms).
MIE_EXPONENT = 1.5
RAYLEIGH_EXPONENT = 4.0


class DegenerateScatteringError(ValueError):
    """Kubelka-Munk needs strictly positive scattering."""


@dataclass(frozen=True)
class BioParams:
    """Volume fractions of epidermal melanosomes and dermal blood."""

    f_mel: float
    f_blood: float

    def __post_init__(self):
        if not (F_MEL_MIN <= self.f_mel <= F_MEL_MAX):
            raise ValueError(
                f"f_mel {self.f_mel:g} outside [{F_MEL_MIN}, {F_MEL_MAX}]")
        if not (F_BLOOD_MIN <= self.f_blood <= F_BLOOD_MAX):
            raise ValueError(
                f"f_blood {self.f_blood:g} outside [{F_BLOOD_MIN}, {F_BLOOD_MAX}]")


def bio_midpoint() -> BioParams:
    return BioParams(0.5 * (F_MEL_MIN + F_MEL_MAX),
                     0.5 * (F_BLOOD_MIN + F_BLOOD_MAX))


@dataclass(frozen=True)
class SkinParams:
    """Per-pixel unknowns: diffuse and specular shading plus biophysics."""

    diffuse: float
    specular: float
    bio: BioParams

    def __post_init__(self):
        if self.diffuse < 0 or self.specular < 0:
            raise ValueError("shading scalars must be non-negative")


@dataclass(frozen=True)
class OpticsConstants:
    """All fixed optical constants of the skin model.

    Units: epidermis_thickness in cm, melanin_prefactor in cm^-1 nm^3.33,
    baseline_params (a, b, c, d) giving a + b*exp(-(lambda-c)/d) in cm^-1,
    hb_concentration in g/L, hb_molar_mass in g/mol, scattering prefactors
    in cm^-1 against nm power laws, Kubelka-Munk coefficients dimensionless.
    """

    epidermis_thickness: float = 0.01
    melanin_prefactor: float = 6.6e11
    melanin_exponent: float = 3.33
    baseline_params: Tuple[float, float, float, float] = (0.244, 85.3, 154.0, 66.2)
    hb_concentration: float = 150.0
    hb_molar_mass: float = 64500.0
    oxygenation_fraction: float = 0.75
    scatter_mie_prefactor: float = 2.0e5
    scatter_rayleigh_prefactor: float = 2.0e12
    km_k_coeff: float = 2.0
    km_s_coeff: float = 0.75

    def __post_init__(self):
        scalars = {
            "epidermis_thickness": self.epidermis_thickness,
            "melanin_exponent": self.melanin_exponent,
            "hb_molar_mass": self.hb_molar_mass,
            "km_k_coeff": self.km_k_coeff,
            "km_s_coeff": self.km_s_coeff,
        }
        for name, value in scalars.items():
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        # Amplitude-like constants may be zeroed to switch a term off.
        for name in ("melanin_prefactor", "hb_concentration",
                     "scatter_mie_prefactor", "scatter_rayleigh_prefactor"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be non-negative, got {value!r}")
        if len(self.baseline_params) != 4:
            raise ValueError("baseline_params must be (a, b, c, d)")
        a, b, c, d = self.baseline_params
        if a < 0 or b < 0 or d <= 0:
            raise ValueError("baseline_params need a, b >= 0 and d > 0")
        if not (0.0 <= self.oxygenation_fraction <= 1.0):
            raise ValueError("oxygenation_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ChromophoreTables:
    """Molar extinction tables for oxy- and deoxyhaemoglobin."""

    hb_oxy: TabulatedFunction
    hb_deoxy: TabulatedFunction

    @classmethod
    def bundled(cls) -> "ChromophoreTables":
        return cls(hb_oxy=datafiles.load_hb_oxy(),
                   hb_deoxy=datafiles.load_hb_deoxy())


def melanin_absorption(lam, c: OpticsConstants):
    """Melanosome absorption coefficient, cm^-1, power-law in wavelength."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be positive")
    return c.melanin_prefactor * lam ** (-c.melanin_exponent)


def baseline_absorption(lam, c: OpticsConstants):
    """Baseline (chromophore-free) tissue absorption, cm^-1."""
    lam = np.asarray(lam, dtype=np.float64)
    a, b, shift, decay = c.baseline_params
    return a + b * np.exp(-(lam - shift) / decay)


def reduced_scattering(lam, c: OpticsConstants):
    """Reduced dermal scattering coefficient, cm^-1 (Mie + Rayleigh)."""
    lam = np.asarray(lam, dtype=np.float64)
    return (c.scatter_mie_prefactor * lam ** (-MIE_EXPONENT)
            + c.scatter_rayleigh_prefactor * lam ** (-RAYLEIGH_EXPONENT))


def blood_absorption(lam, c: OpticsConstants, tables: ChromophoreTables):
    """Whole-blood absorption, cm^-1, oxy/deoxy mixed by oxygenation."""
    gamma = c.oxygenation_fraction
    eps = gamma * tables.hb_oxy(lam) + (1.0 - gamma) * tables.hb_deoxy(lam)
    return LN10 * (c.hb_concentration / c.hb_molar_mass) * eps


def epidermal_transmission(f_mel, lam, c: OpticsConstants):
    """Single-pass transmission through the melanin-bearing epidermis."""
    f_mel = np.asarray(f_mel, dtype=np.float64)
    mu = f_mel * melanin_absorption(lam, c) + (1.0 - f_mel) * baseline_absorption(lam, c)
    return np.exp(-mu * c.epidermis_thickness)


def km_reflectance(k_over_s):
    """Semi-infinite Kubelka-Munk reflectance for absorption/scattering ratio."""
    x = np.asarray(k_over_s, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("K/S must be non-negative")
    return 1.0 + x - np.sqrt(x * x + 2.0 * x)


def dermal_reflectance(f_blood, lam, c: OpticsConstants, tables: ChromophoreTables):
    """Diffuse reflectance of the blood-bearing dermis."""
    f_blood = np.asarray(f_blood, dtype=np.float64)
    mu_a = (f_blood * blood_absorption(lam, c, tables)
            + (1.0 - f_blood) * baseline_absorption(lam, c))
    s = c.km_s_coeff * reduced_scattering(lam, c)
    if np.any(s <= 0):
        raise DegenerateScatteringError("scattering must be strictly positive")
    return km_reflectance(c.km_k_coeff * mu_a / s)


@dataclass(frozen=True)
class SkinOptics:
    """Per-grid precomputation of every wavelength-dependent coefficient.

    Freezing these vectors once makes reflectance evaluation inside the
    per-pixel fit a handful of array operations. Instances are immutable
    and safe to share across workers.
    """

    grid: WavelengthGrid
    constants: OpticsConstants
    mu_a_mel: np.ndarray = field(repr=False)
    mu_a_base: np.ndarray = field(repr=False)
    mu_a_blood: np.ndarray = field(repr=False)
    km_s: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, grid: WavelengthGrid,
              constants: OpticsConstants | None = None,
              tables: ChromophoreTables | None = None) -> "SkinOptics":
        c = constants if constants is not None else OpticsConstants()
        t = tables if tables is not None else ChromophoreTables.bundled()
        lam = grid.samples
        s = c.km_s_coeff * reduced_scattering(lam, c)
        if np.any(s <= 0):
            raise DegenerateScatteringError("scattering must be strictly positive")

        def freeze(arr):
            out = np.asarray(arr, dtype=np.float64)
            out.setflags(write=False)
            return out

        return cls(
            grid=grid,
            constants=c,
            mu_a_mel=freeze(melanin_absorption(lam, c)),
            mu_a_base=freeze(baseline_absorption(lam, c)),
            mu_a_blood=freeze(blood_absorption(lam, c, t)),
            km_s=freeze(s),
        )

    def reflectance(self, f_mel, f_blood) -> np.ndarray:
        """Skin reflectance; broadcasts (...,1)-shaped fractions to (..., D)."""
        f_mel = np.asarray(f_mel, dtype=np.float64)
        f_blood = np.asarray(f_blood, dtype=np.float64)
        c = self.constants
        mu_epi = f_mel * self.mu_a_mel + (1.0 - f_mel) * self.mu_a_base
        t_sq = np.exp(-2.0 * c.epidermis_thickness * mu_epi)
        mu_derm = f_blood * self.mu_a_blood + (1.0 - f_blood) * self.mu_a_base
        x = (c.km_k_coeff / self.km_s) * mu_derm
        r_derm = 1.0 + x - np.sqrt(x * x + 2.0 * x)
        return t_sq * r_derm

    def reflectance_with_grads(self, f_mel: float, f_blood: float
                               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Reflectance plus its partials in the two volume fractions."""
        c = self.constants
        mu_epi = f_mel * self.mu_a_mel + (1.0 - f_mel) * self.mu_a_base
        t_sq = np.exp(-2.0 * c.epidermis_thickness * mu_epi)
        mu_derm = f_blood * self.mu_a_blood + (1.0 - f_blood) * self.mu_a_base
        x = (c.km_k_coeff / self.km_s) * mu_derm
        root = np.sqrt(x * x + 2.0 * x)
        r_derm = 1.0 + x - root
        r = t_sq * r_derm
        # d(T^2)/df_mel = -2 d (mu_mel - mu_base) T^2
        dr_dmel = (-2.0 * c.epidermis_thickness
                   * (self.mu_a_mel - self.mu_a_base) * r)
        # dR/dx has an integrable singularity at x = 0; x > 0 here because
        # baseline absorption is strictly positive on the visible range.
        dR_dx = 1.0 - (x + 1.0) / root
        dx_dblood = (c.km_k_coeff / self.km_s) * (self.mu_a_blood - self.mu_a_base)
        dr_dblood = t_sq * dR_dx * dx_dblood
        return r, dr_dmel, dr_dblood


def skin_reflectance(bio: BioParams, optics: SkinOptics) -> Spectrum:
    """Diffuse spectral reflectance of skin with the given biophysics."""
    return Spectrum.reflectance(optics.grid,
                                optics.reflectance(bio.f_mel, bio.f_blood))


def radiance(params: SkinParams, illuminant: Spectrum,
             optics: SkinOptics) -> Spectrum:
    """Dichromatic scene radiance for one pixel's parameters."""
    require_same_grid(illuminant.grid, optics.grid, "illuminant and optics")
    r = optics.reflectance(params.bio.f_mel, params.bio.f_blood)
    values = illuminant.values * (params.diffuse * r + params.specular)
    return Spectrum(optics.grid, values)


def radiance_jacobian(params: SkinParams, illuminant: Spectrum,
                      optics: SkinOptics) -> np.ndarray:
    """(D, 4) partials of radiance w.r.t. (diffuse, specular, f_mel, f_blood).

    The shading columns are exact by linearity; the fraction columns chain
    through the Lambert-Beer and Kubelka-Munk derivatives.
    """
    require_same_grid(illuminant.grid, optics.grid, "illuminant and optics")
    e = illuminant.values
    r, dr_dmel, dr_dblood = optics.reflectance_with_grads(
        params.bio.f_mel, params.bio.f_blood)
    jac = np.empty((optics.grid.count, 4))
    jac[:, 0] = e * r
    jac[:, 1] = e
    jac[:, 2] = e * params.diffuse * dr_dmel
    jac[:, 3] = e * params.diffuse * dr_dblood
    return jac
