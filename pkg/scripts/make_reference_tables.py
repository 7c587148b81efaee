"""Regenerate the bundled reference CSV tables in data/.

All four tables are written from data embedded in this script so the repo
never depends on a network fetch:

* hb_oxy.csv / hb_deoxy.csv - molar extinction coefficients of oxy- and
  deoxyhaemoglobin in cm^-1/(mol/L), tabulated every 10 nm over 380-730 nm.
  Values follow the standard tissue-optics compilations (Soret bands near
  415/430 nm, the oxy double Q-band at 542/577 nm, the deoxy single band
  near 555 nm, low red-region absorption).
* cie_1931_cmf.csv - the CIE 1931 2-degree colour matching functions,
  evaluated from the Wyman/Sloan/Shirley multi-lobe Gaussian fit at 2 nm
  steps and clipped to be non-negative.
* d65.csv - the standard D65 daylight SPD, relative power normalised to
  100 at 560 nm, every 10 nm.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

DATA_DIR = Path(__file__).resolve().parents[1] / "data"

# wavelength, eps_oxy, eps_deoxy  [nm, cm^-1/M, cm^-1/M]
HB_EXTINCTION = [
    (380, 30000.0, 72000.0),
    (390, 62000.0, 120000.0),
    (400, 266232.0, 223296.0),
    (410, 466840.0, 303956.0),
    (420, 480360.0, 407560.0),
    (430, 246072.0, 550000.0),
    (440, 102580.0, 492120.0),
    (450, 62816.0, 103292.0),
    (460, 44480.0, 60000.0),
    (470, 33209.0, 40000.0),
    (480, 26629.0, 30000.0),
    (490, 22500.0, 24000.0),
    (500, 20932.0, 20862.0),
    (510, 21198.0, 25000.0),
    (520, 25888.0, 31500.0),
    (530, 39956.0, 39500.0),
    (540, 53236.0, 46592.0),
    (550, 43016.0, 52000.0),
    (560, 33500.0, 54000.0),
    (570, 45092.0, 46000.0),
    (580, 61000.0, 37020.0),
    (590, 26600.0, 25000.0),
    (600, 3200.0, 14677.0),
    (610, 1506.0, 9443.0),
    (620, 942.0, 6510.0),
    (630, 610.0, 5149.0),
    (640, 442.0, 4345.0),
    (650, 368.0, 3750.0),
    (660, 320.0, 3227.0),
    (670, 300.0, 2795.0),
    (680, 288.0, 2407.0),
    (690, 280.0, 2051.0),
    (700, 290.0, 1794.0),
    (710, 314.0, 1540.0),
    (720, 348.0, 1325.0),
    (730, 390.0, 1102.0),
]

# D65 relative SPD, every 10 nm (100 at 560 nm).
D65_SPD = [
    (380, 49.9755), (390, 54.6482), (400, 82.7549), (410, 91.486),
    (420, 93.4318), (430, 86.6823), (440, 104.865), (450, 117.008),
    (460, 117.812), (470, 114.861), (480, 115.923), (490, 108.811),
    (500, 109.354), (510, 107.802), (520, 104.790), (530, 107.689),
    (540, 104.405), (550, 104.046), (560, 100.000), (570, 96.3342),
    (580, 95.788), (590, 88.6856), (600, 90.0062), (610, 89.5991),
    (620, 87.6987), (630, 83.2886), (640, 83.6992), (650, 80.0268),
    (660, 80.2146), (670, 82.2778), (680, 78.2842), (690, 69.7213),
    (700, 71.6091), (710, 74.349), (720, 61.604), (730, 69.8856),
]


def _lobe(lam: np.ndarray, alpha: float, mu: float, s1: float, s2: float) -> np.ndarray:
    sigma = np.where(lam < mu, s1, s2)
    return alpha * np.exp(-0.5 * ((lam - mu) / sigma) ** 2)


def cmf_1931(lam: np.ndarray) -> np.ndarray:
    """Multi-lobe Gaussian fit of the CIE 1931 2-degree observer, (N, 3)."""
    x = (
        _lobe(lam, 1.056, 599.8, 37.9, 31.0)
        + _lobe(lam, 0.362, 442.0, 16.0, 26.7)
        + _lobe(lam, -0.065, 501.1, 20.4, 26.2)
    )
    y = _lobe(lam, 0.821, 568.8, 46.9, 40.5) + _lobe(lam, 0.286, 530.9, 16.3, 31.1)
    z = _lobe(lam, 1.217, 437.0, 11.8, 36.0) + _lobe(lam, 0.681, 459.0, 26.0, 13.8)
    return np.clip(np.stack([x, y, z], axis=1), 0.0, None)


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path} ({path.stat().st_size} bytes)")


def main() -> None:
    DATA_DIR.mkdir(exist_ok=True)
    write_csv(
        DATA_DIR / "hb_oxy.csv",
        ["wavelength_nm", "value"],
        [(lam, f"{oxy:.1f}") for lam, oxy, _ in HB_EXTINCTION],
    )
    write_csv(
        DATA_DIR / "hb_deoxy.csv",
        ["wavelength_nm", "value"],
        [(lam, f"{deoxy:.1f}") for lam, _, deoxy in HB_EXTINCTION],
    )

    lam = np.arange(380, 732, 2)
    cmf = cmf_1931(lam.astype(float))
    write_csv(
        DATA_DIR / "cie_1931_cmf.csv",
        ["wavelength_nm", "x", "y", "z"],
        [
            (int(l), f"{r[0]:.6f}", f"{r[1]:.6f}", f"{r[2]:.6f}")
            for l, r in zip(lam, cmf)
        ],
    )

    write_csv(
        DATA_DIR / "d65.csv",
        ["wavelength_nm", "value"],
        [(lam, f"{v:.4f}") for lam, v in D65_SPD],
    )


if __name__ == "__main__":
    main()
