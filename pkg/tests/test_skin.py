import csv
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skinspec.datafiles import data_path
from skinspec.skin import (
    BioParams,
    ChromophoreTables,
    DegenerateScatteringError,
    F_BLOOD_MAX,
    F_BLOOD_MIN,
    F_MEL_MAX,
    F_MEL_MIN,
    OpticsConstants,
    SkinOptics,
    SkinParams,
    baseline_absorption,
    bio_midpoint,
    blood_absorption,
    dermal_reflectance,
    epidermal_transmission,
    km_reflectance,
    melanin_absorption,
    radiance,
    radiance_jacobian,
    skin_reflectance,
)
from skinspec.spectral import Spectrum, make_grid


# ---------------------------------------------------------------------------
# Independent oracle: the full reflectance chain re-derived with the math
# module and manual interpolation, sharing no code with the package.

def _read_csv_table(name):
    rows = []
    with open(data_path(name), newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                continue  # header
    return rows


_HB_ROWS = None


def _hb_extinction(lam):
    global _HB_ROWS
    if _HB_ROWS is None:
        _HB_ROWS = (_read_csv_table("hb_oxy.csv"),
                    _read_csv_table("hb_deoxy.csv"))
    oxy, deoxy = _HB_ROWS

    def interp(rows, x):
        for (x0, y0), (x1, y1) in zip(rows, rows[1:]):
            if x0 <= x <= x1:
                t = (x - x0) / (x1 - x0)
                return y0 + t * (y1 - y0)
        raise AssertionError(f"{x} outside oracle table")

    return interp(oxy, lam), interp(deoxy, lam)


def oracle_reflectance(f_mel, f_blood, lam):
    mel = 6.6e11 * lam ** -3.33
    base = 0.244 + 85.3 * math.exp(-(lam - 154.0) / 66.2)
    eps_oxy, eps_deoxy = _hb_extinction(lam)
    blood = math.log(10.0) * (150.0 / 64500.0) * (0.75 * eps_oxy
                                                  + 0.25 * eps_deoxy)
    scatter = 2e5 * lam ** -1.5 + 2e12 * lam ** -4.0
    t = math.exp(-(f_mel * mel + (1.0 - f_mel) * base) * 0.01)
    k = 2.0 * (f_blood * blood + (1.0 - f_blood) * base)
    s = 0.75 * scatter
    x = k / s
    r_inf = 1.0 + x - math.sqrt(x * x + 2.0 * x)
    return t * t * r_inf


# ---------------------------------------------------------------------------
# Golden values, frozen from the oracle chain.

GOLDEN_MIDPOINT_REFLECTANCE = np.array([
    0.0003384038, 0.0003686411, 0.0005122741, 0.0009567386, 0.0018358694,
    0.0043943286, 0.0069473775, 0.010154184, 0.0139200258, 0.0182589264,
    0.0227696843, 0.0265919994, 0.0288249576, 0.0281735627, 0.0279943127,
    0.0334721474, 0.0401411224, 0.0405223293, 0.0394379152, 0.0624956357,
    0.1095960284, 0.1320740245, 0.1511273335, 0.1679843437, 0.1833654126,
    0.1978681102, 0.2122359921, 0.2261363925, 0.2398643881, 0.2534503533,
    0.2661090729,
])


@pytest.fixture(scope="module")
def constants():
    return OpticsConstants()


@pytest.fixture(scope="module")
def tables():
    return ChromophoreTables.bundled()


class TestChromophores:
    def test_melanin_golden_value(self, constants):
        value = melanin_absorption(500.0, constants)
        assert value == pytest.approx(679.1626920415231, rel=1e-12)
        # three-significant-figure sanity: ~6.79e2
        assert round(value) == 679

    def test_melanin_decreasing(self, constants):
        assert melanin_absorption(700.0, constants) \
            < melanin_absorption(400.0, constants)

    def test_melanin_zero_prefactor(self):
        c = OpticsConstants(melanin_prefactor=0.0)
        assert melanin_absorption(500.0, c) == 0.0
        assert melanin_absorption(653.0, c) == 0.0

    def test_melanin_requires_positive_wavelength(self, constants):
        with pytest.raises(ValueError):
            melanin_absorption(0.0, constants)

    def test_blood_green_band(self, constants, tables):
        at_560 = blood_absorption(560.0, constants, tables)
        at_650 = blood_absorption(650.0, constants, tables)
        assert at_560 == pytest.approx(206.83104469045352, rel=1e-9)
        assert at_650 == pytest.approx(6.4981093263913365, rel=1e-9)
        assert at_560 > at_650


class TestEpidermis:
    def test_zero_absorption_full_transmission(self):
        c = OpticsConstants(melanin_prefactor=0.0,
                            baseline_params=(0.0, 0.0, 154.0, 66.2))
        assert epidermal_transmission(0.2, 500.0, c) == 1.0

    def test_half_transmission_at_ln2(self):
        # pick constants so mu_a * d = ln 2 exactly at f_mel = 0
        c = OpticsConstants(
            baseline_params=(math.log(2.0) / 0.01, 0.0, 154.0, 66.2))
        assert epidermal_transmission(0.0, 500.0, c) \
            == pytest.approx(0.5, rel=1e-15)

    def test_melanin_darkens(self, constants):
        low = epidermal_transmission(0.013, 450.0, constants)
        high = epidermal_transmission(0.43, 450.0, constants)
        assert low == pytest.approx(0.8715943986927882, rel=1e-12)
        assert high == pytest.approx(0.015690185481148176, rel=1e-12)
        assert high < low


class TestDermis:
    def test_km_lossless_limit(self):
        assert km_reflectance(0.0) == 1.0

    def test_km_closed_form(self):
        assert km_reflectance(4.0) \
            == pytest.approx(5.0 - 2.0 * math.sqrt(6.0), rel=1e-15)

    def test_km_rejects_negative_ratio(self):
        with pytest.raises(ValueError):
            km_reflectance(-0.1)

    def test_blood_darkens_green(self, constants, tables):
        lo = dermal_reflectance(0.02, 560.0, constants, tables)
        hi = dermal_reflectance(0.07, 560.0, constants, tables)
        assert lo == pytest.approx(0.44652959724191654, rel=1e-9)
        assert hi == pytest.approx(0.25069649001489935, rel=1e-9)
        assert hi < lo

    def test_degenerate_scattering(self, tables):
        c = OpticsConstants(scatter_mie_prefactor=0.0,
                            scatter_rayleigh_prefactor=0.0)
        with pytest.raises(DegenerateScatteringError):
            dermal_reflectance(0.05, 560.0, c, tables)


class TestOpticsConstants:
    def test_defaults_valid(self):
        OpticsConstants()

    def test_nonpositive_thickness_rejected(self):
        with pytest.raises(ValueError):
            OpticsConstants(epidermis_thickness=0.0)

    def test_oxygenation_bounds(self):
        with pytest.raises(ValueError):
            OpticsConstants(oxygenation_fraction=1.1)
        OpticsConstants(oxygenation_fraction=0.0)
        OpticsConstants(oxygenation_fraction=1.0)


class TestBioBox:
    def test_midpoint(self):
        mid = bio_midpoint()
        assert mid.f_mel == pytest.approx(0.2215)
        assert mid.f_blood == pytest.approx(0.045)

    def test_out_of_box_rejected(self):
        with pytest.raises(ValueError):
            BioParams(f_mel=0.5, f_blood=0.045)
        with pytest.raises(ValueError):
            BioParams(f_mel=0.2, f_blood=0.01)

    def test_negative_shading_rejected(self):
        with pytest.raises(ValueError):
            SkinParams(diffuse=-0.1, specular=0.0, bio=bio_midpoint())


class TestSkinReflectance:
    def test_golden_midpoint_vector(self, optics):
        r = skin_reflectance(bio_midpoint(), optics)
        np.testing.assert_allclose(r.values, GOLDEN_MIDPOINT_REFLECTANCE,
                                   rtol=1e-7)

    def test_matches_independent_oracle(self, grid, optics):
        for f_mel, f_blood in [(0.013, 0.02), (0.43, 0.07), (0.2, 0.05),
                               (0.1, 0.03), (0.35, 0.065)]:
            got = optics.reflectance(f_mel, f_blood)
            want = [oracle_reflectance(f_mel, f_blood, lam)
                    for lam in grid.samples]
            np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_values_in_unit_interval_over_box(self, optics):
        f_mel = np.linspace(F_MEL_MIN, F_MEL_MAX, 50)
        f_blood = np.linspace(F_BLOOD_MIN, F_BLOOD_MAX, 50)
        refl = optics.reflectance(f_mel[None, :, None],
                                  f_blood[:, None, None])
        assert refl.shape == (50, 50, optics.grid.count)
        assert np.all(refl > 0.0)
        assert np.all(refl <= 1.0)

    def test_non_increasing_in_melanin(self, optics):
        f_mel = np.linspace(F_MEL_MIN, F_MEL_MAX, 50)
        f_blood = np.linspace(F_BLOOD_MIN, F_BLOOD_MAX, 50)
        refl = optics.reflectance(f_mel[None, :, None],
                                  f_blood[:, None, None])
        assert np.all(np.diff(refl, axis=1) <= 0.0)

    def test_transparent_epidermis_reduces_to_dermis(self, grid, tables):
        c = OpticsConstants(melanin_prefactor=0.0,
                            baseline_params=(0.0, 0.0, 154.0, 66.2))
        optics = SkinOptics.build(grid, constants=c, tables=tables)
        got = optics.reflectance(0.3, 0.05)
        want = [dermal_reflectance(0.05, lam, c, tables)
                for lam in grid.samples]
        np.testing.assert_allclose(got, want, rtol=1e-14)


class TestRadiance:
    def test_pure_specular_passes_illuminant(self, optics, flat_e, d65):
        for e in (flat_e, d65):
            p = SkinParams(diffuse=0.0, specular=1.0, bio=bio_midpoint())
            out = radiance(p, e, optics)
            np.testing.assert_array_equal(out.values, e.values)

    def test_zero_shading_is_dark(self, optics, flat_e):
        p = SkinParams(diffuse=0.0, specular=0.0, bio=bio_midpoint())
        assert np.all(radiance(p, flat_e, optics).values == 0.0)

    def test_unit_diffuse_flat_illuminant_is_reflectance(self, optics, flat_e):
        p = SkinParams(diffuse=1.0, specular=0.0, bio=bio_midpoint())
        out = radiance(p, flat_e, optics)
        np.testing.assert_array_equal(
            out.values, skin_reflectance(bio_midpoint(), optics).values)

    def test_grid_mismatch_rejected(self, optics):
        other = make_grid(400, 700, 30)
        e = Spectrum(other, np.ones(30))
        p = SkinParams(1.0, 0.0, bio_midpoint())
        with pytest.raises(ValueError):
            radiance(p, e, optics)

    @given(
        i_d=st.floats(0.01, 3.0),
        i_s=st.floats(0.0, 1.0),
        f_mel=st.floats(0.013, 0.43),
        f_blood=st.floats(0.02, 0.07),
    )
    @settings(max_examples=50, deadline=None)
    def test_linear_in_shading(self, i_d, i_s, f_mel, f_blood):
        optics = _MODULE_OPTICS
        e = _MODULE_E
        bio = BioParams(f_mel, f_blood)
        single = radiance(SkinParams(i_d, i_s, bio), e, optics)
        double = radiance(SkinParams(2 * i_d, 2 * i_s, bio), e, optics)
        np.testing.assert_array_equal(double.values, 2.0 * single.values)


class TestJacobian:
    def test_shading_columns_exact(self, optics, d65):
        p = SkinParams(1.3, 0.2, BioParams(0.2, 0.045))
        jac = radiance_jacobian(p, d65, optics)
        r = optics.reflectance(0.2, 0.045)
        np.testing.assert_array_equal(jac[:, 0], d65.values * r)
        np.testing.assert_array_equal(jac[:, 1], d65.values)

    def test_bio_columns_match_finite_differences(self, optics, flat_e):
        rng = np.random.default_rng(11)
        for _ in range(100):
            f_mel = rng.uniform(0.05, 0.4)
            f_blood = rng.uniform(0.025, 0.065)
            i_d = rng.uniform(0.2, 2.0)
            i_s = rng.uniform(0.0, 0.5)
            p = SkinParams(i_d, i_s, BioParams(f_mel, f_blood))
            jac = radiance_jacobian(p, flat_e, optics)

            for col, (lo, hi, make) in ((2, (F_MEL_MIN, F_MEL_MAX,
                                              lambda v: BioParams(v, f_blood))),
                                        (3, (F_BLOOD_MIN, F_BLOOD_MAX,
                                             lambda v: BioParams(f_mel, v)))):
                center = f_mel if col == 2 else f_blood
                h = 1e-6 * (hi - lo)
                lp = radiance(SkinParams(i_d, i_s, make(center + h)),
                              flat_e, optics).values
                lm = radiance(SkinParams(i_d, i_s, make(center - h)),
                              flat_e, optics).values
                fd = (lp - lm) / (2 * h)
                scale = np.abs(fd).max()
                np.testing.assert_allclose(jac[:, col], fd,
                                           rtol=0, atol=1e-5 * scale)


# session fixtures are unavailable inside hypothesis bodies; build once here
_MODULE_OPTICS = SkinOptics.build(make_grid(400, 700, 31))
_MODULE_E = Spectrum(make_grid(400, 700, 31), np.ones(31))
